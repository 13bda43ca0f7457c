"""Panel local projections with bias-corrected estimation and clustered
inference, plus a Monte Carlo harness for studying the estimators.

The public surface mirrors the pipeline: load or generate a panel
(:mod:`panellp.data`, :mod:`panellp.simulate`), describe a study
(:class:`panellp.driver.LPSpec`), and run it (:func:`panellp.driver.run_lp`),
or run a whole simulation design (:func:`panellp.simulate.run_mc`).
"""

__version__ = "0.1.0"

from .data import PanelDataset, from_columns, from_wide, load_csv
from .driver import (
    ComparisonTable,
    HorizonCell,
    IRFResult,
    LPSpec,
    compare_estimators,
    run_lp,
)
from .errors import (
    ConvergenceError,
    DuplicateKeyError,
    EmptySampleError,
    NonMonotoneTimeError,
    NoWithinVariationError,
    NumericalError,
    PanelLPError,
    ParseError,
    RankDeficientError,
    UnknownVariableError,
    UnstableParametersError,
    ValidationError,
)
from .estimators import (
    BiasInputs,
    FitResult,
    ar1_fe,
    bias_inputs_for,
    db_fit,
    fe_bias_limit,
    fe_fit,
    nickell_bias_factor,
    spj_combine,
    spj_fit,
)
from .inference import (
    CoefficientInference,
    VarianceEstimate,
    db_standard_error,
    db_score_variance,
    db_variance,
    fe_variance,
    opposite_half_centered,
    se_fe_cluster_unit,
    spj_variance,
    t_and_ci,
)
from .simulate import (
    SimCell,
    SimConfig,
    SimReport,
    cumulative_irf,
    deterministic_paths,
    gen_prototype,
    gen_var1,
    generate,
    prototype_irf,
    run_mc,
    spectral_radius,
    true_irf,
    var1_irf,
    var1_transition,
)
from .transform import (
    DemeanedSample,
    RegressionSample,
    build_sample,
    demean,
    split_halves,
)

__all__ = [name for name in dir() if not name.startswith("_")]
