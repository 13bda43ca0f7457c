"""Study driver: loops horizons, dispatches estimators and variance
estimators, and assembles the impulse-response table.

A study is described declaratively by :class:`LPSpec`. For every horizon the
driver builds the stacked sample, demeans it per the fixed-effects setting,
runs each requested estimator with its matching variance estimator, and
records one cell per (horizon, estimator). A failed horizon or estimator
yields a gap cell carrying the error instead of aborting the study.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .data import PanelDataset
from .errors import NumericalError, PanelLPError, ValidationError
from .estimators import BiasInputs, ar1_fe, bias_inputs_for, db_fit, fe_fit, spj_fit
from .inference import (
    CLUSTER_ROBUST,
    CLUSTER_TWO_WAY,
    CLUSTER_UNIT,
    db_variance,
    fe_variance,
    spj_variance,
    t_and_ci,
)
from .transform import (
    CUMULATIVE_DIFFERENCE,
    LEVEL,
    ONE_WAY,
    TWO_WAY,
    build_sample,
    demean,
    split_halves,
)

ESTIMATOR_ORDER = ("FE", "SPJ", "DB")
PEAK_RULES = ("most-negative", "most-positive", "max-abs")


@dataclass(frozen=True)
class LPSpec:
    """Declarative description of one local-projection study."""

    response: str
    shock: str
    horizons: tuple[int, int]
    response_transform: str = LEVEL
    response_scale: float = 1.0
    shock_lags: int = 0
    response_lags: tuple[int, ...] = ()
    extra_controls: tuple[tuple[str, tuple[int, ...]], ...] = ()
    fixed_effects: str = ONE_WAY
    cluster: str = CLUSTER_UNIT
    estimators: tuple[str, ...] = ("FE",)
    irf_scale: float = 1.0

    def validate(self) -> None:
        if not self.response or not self.shock:
            raise ValidationError("response and shock variables are required")
        lo, hi = self.horizons
        if lo > hi or lo < 0:
            raise ValidationError(f"invalid horizon range [{lo}, {hi}]")
        if self.response_transform not in (LEVEL, CUMULATIVE_DIFFERENCE):
            raise ValidationError(f"unknown response_transform {self.response_transform!r}")
        if self.response_scale == 0:
            raise ValidationError("response_scale must be nonzero")
        if self.irf_scale == 0:
            raise ValidationError("irf_scale must be nonzero")
        if self.shock_lags < 0:
            raise ValidationError("shock_lags must be nonnegative")
        if any(k < 0 for k in self.response_lags):
            raise ValidationError("response_lags must be nonnegative")
        if len(set(self.response_lags)) != len(self.response_lags):
            raise ValidationError("response_lags contains duplicates")
        for var, lags in self.extra_controls:
            if var == self.shock:
                raise ValidationError("shock must not appear among extra_controls")
            if not lags:
                raise ValidationError(f"extra control {var!r} has an empty lag set")
            if any(j < 0 for j in lags):
                raise ValidationError(f"extra control {var!r} has a negative lag")
        if self.fixed_effects not in (ONE_WAY, TWO_WAY):
            raise ValidationError(f"unknown fixed_effects {self.fixed_effects!r}")
        if self.cluster not in (CLUSTER_UNIT, CLUSTER_TWO_WAY, CLUSTER_ROBUST):
            raise ValidationError(f"unknown cluster {self.cluster!r}")
        if not self.estimators:
            raise ValidationError("at least one estimator is required")
        unknown = [e for e in self.estimators if e not in ESTIMATOR_ORDER]
        if unknown:
            raise ValidationError(f"unknown estimators: {', '.join(unknown)}")
        if len(set(self.estimators)) != len(self.estimators):
            raise ValidationError("estimators contains duplicates")
        if "DB" in self.estimators and not self.is_prototype_shape():
            raise ValidationError(
                "the DB estimator is only defined for the prototype shape: "
                "a single level-response shock regressor with no lags, no extra "
                "controls, and unit fixed effects"
            )

    def is_prototype_shape(self) -> bool:
        return (
            self.shock_lags == 0
            and not self.response_lags
            and not self.extra_controls
            and self.response_transform == LEVEL
            and self.fixed_effects == ONE_WAY
        )

    def response_lags_at(self, h: int) -> tuple[int, ...]:
        """Response lags used at horizon ``h``.

        Lag 0 at h = 0 would put the response on both sides of the
        regression, so it is excluded there; the driver records a warning.
        """
        lags = sorted(self.response_lags)
        if h == 0:
            lags = [k for k in lags if k != 0]
        return tuple(lags)

    def ordered_estimators(self) -> tuple[str, ...]:
        return tuple(e for e in ESTIMATOR_ORDER if e in self.estimators)


@dataclass(frozen=True)
class HorizonCell:
    """One (horizon, estimator) entry of the impulse-response table.

    ``coefficient``, ``se`` and the interval bounds are already multiplied
    by the spec's ``irf_scale``. ``ok`` is False for a gap cell, in which
    case ``error`` describes the failure and the numeric fields are NaN.
    """

    horizon: int
    estimator: str
    ok: bool
    coefficient: float
    se: float
    t_stat: float
    ci_lo: float
    ci_hi: float
    n_units: int
    n_rows: int
    coefficients_full: np.ndarray | None = None
    col_names: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()
    error: str | None = None


@dataclass(frozen=True)
class IRFResult:
    spec: LPSpec
    cells: tuple[HorizonCell, ...]

    def cell(self, horizon: int, estimator: str) -> HorizonCell:
        for c in self.cells:
            if c.horizon == horizon and c.estimator == estimator:
                return c
        raise KeyError((horizon, estimator))

    def estimators(self) -> tuple[str, ...]:
        seen: list[str] = []
        for c in self.cells:
            if c.estimator not in seen:
                seen.append(c.estimator)
        return tuple(seen)


def _gap(h: int, estimator: str, err: Exception | str, warnings: tuple[str, ...]) -> HorizonCell:
    return HorizonCell(
        horizon=h, estimator=estimator, ok=False,
        coefficient=float("nan"), se=float("nan"), t_stat=float("nan"),
        ci_lo=float("nan"), ci_hi=float("nan"), n_units=0, n_rows=0,
        warnings=warnings, error=f"h={h}, {estimator}: {err}",
    )


def _db_prerequisites(data: PanelDataset, spec: LPSpec) -> tuple[float, float, float]:
    """Contemporaneous slope and shock AR(1) pieces shared across horizons."""
    rho_hat, innov_var = ar1_fe(data, spec.shock)
    spec_h0 = replace(spec, horizons=(0, 0), estimators=("FE",))
    sample0 = build_sample(data, spec_h0, 0)
    slope_h0 = float(fe_fit(demean(sample0, ONE_WAY)).coefficients[0])
    return slope_h0, rho_hat, innov_var


def run_lp(data: PanelDataset, spec: LPSpec) -> IRFResult:
    """Run the full study described by ``spec`` on ``data``.

    Output cells are ordered by horizon ascending and, within a horizon, in
    the fixed estimator order FE, SPJ, DB. The reported coefficient is the
    contemporaneous shock coefficient scaled by ``irf_scale``.
    """
    spec.validate()
    for var in {spec.response, spec.shock} | {v for v, _ in spec.extra_controls}:
        data.variable(var)  # raises UnknownVariableError before any horizon runs
    estimators = spec.ordered_estimators()
    scale = spec.irf_scale

    db_parts: tuple[float, float, float] | None = None
    if "DB" in estimators:
        db_parts = _db_prerequisites(data, spec)

    lo, hi = spec.horizons
    cells: list[HorizonCell] = []
    for h in range(lo, hi + 1):
        extra_warn: tuple[str, ...] = ()
        if h == 0 and 0 in spec.response_lags:
            extra_warn = ("horizon 0: contemporaneous response control excluded "
                          "(would regress the response on itself)",)
        try:
            sample = build_sample(data, spec, h)
            dm = demean(sample, spec.fixed_effects)
        except PanelLPError as exc:
            cells.extend(_gap(h, e, exc, extra_warn) for e in estimators)
            continue
        warn = extra_warn + sample.warnings

        fe = None
        for estimator in estimators:
            try:
                if estimator == "FE":
                    fe = fe_fit(dm)
                    var = fe_variance(dm, fe, spec.cluster)
                    fit = fe
                elif estimator == "SPJ":
                    fit = spj_fit(sample, spec.fixed_effects, demeaned=dm)
                    second = split_halves(sample)
                    var = spj_variance(sample, second, fit, spec.fixed_effects, spec.cluster)
                else:  # DB
                    slope_h0, rho_hat, innov_var = db_parts  # type: ignore[misc]
                    aux = bias_inputs_for(dm, slope_h0, rho_hat, innov_var)
                    fit = db_fit(dm, aux, fe=fe)
                    var = db_variance(dm, fit)
            except PanelLPError as exc:
                cells.append(_gap(h, estimator, exc, warn))
                continue
            inf = t_and_ci(float(fit.coefficients[0]) * scale, float(var.se[0]) * abs(scale))
            cells.append(HorizonCell(
                horizon=h, estimator=estimator, ok=True,
                coefficient=inf.estimate, se=inf.se, t_stat=inf.t_stat,
                ci_lo=inf.ci_lo, ci_hi=inf.ci_hi,
                n_units=fit.n_units, n_rows=fit.n_rows,
                coefficients_full=fit.coefficients, col_names=fit.col_names,
                warnings=warn + var.warnings,
            ))
    return IRFResult(spec=spec, cells=tuple(cells))


@dataclass(frozen=True)
class PeakRow:
    estimator: str
    h_peak: int
    coefficient: float


@dataclass(frozen=True)
class DiffRow:
    """Relative difference of one estimator against the baseline at ``horizon``."""

    estimator: str
    baseline: str
    horizon: int
    coefficient: float
    baseline_coefficient: float
    rel_diff_pct: float | None     # None when the baseline coefficient is 0

    @property
    def defined(self) -> bool:
        return self.rel_diff_pct is not None


@dataclass(frozen=True)
class ComparisonTable:
    peak_rule: str
    peaks: tuple[PeakRow, ...]
    diffs: tuple[DiffRow, ...]


def compare_estimators(result: IRFResult, peak_rule: str = "most-negative") -> ComparisonTable:
    """Peak horizons per estimator and relative differences against FE.

    Each non-baseline estimator is compared at its own peak horizon and at
    the baseline's peak horizon (a single row when the two coincide), as
    ``|other / baseline - 1| * 100``. The baseline is FE when present,
    otherwise the first estimator in the fixed order.
    """
    if peak_rule not in PEAK_RULES:
        raise ValidationError(f"unknown peak rule {peak_rule!r}")
    present = result.estimators()
    if len(present) < 2:
        raise ValidationError("comparison needs at least two estimators")

    series: dict[str, dict[int, float]] = {
        e: {c.horizon: c.coefficient for c in result.cells if c.estimator == e and c.ok}
        for e in present
    }
    for e, vals in series.items():
        if not vals:
            raise NumericalError(f"estimator {e} produced no usable horizons")

    def peak_h(vals: dict[int, float]) -> int:
        items = sorted(vals.items())
        if peak_rule == "most-negative":
            return min(items, key=lambda kv: (kv[1], kv[0]))[0]
        if peak_rule == "most-positive":
            return max(items, key=lambda kv: (kv[1], -kv[0]))[0]
        return max(items, key=lambda kv: (abs(kv[1]), -kv[0]))[0]

    peaks = tuple(PeakRow(e, peak_h(series[e]), series[e][peak_h(series[e])]) for e in present)
    baseline = "FE" if "FE" in present else present[0]
    base_peak = next(p.h_peak for p in peaks if p.estimator == baseline)

    diffs: list[DiffRow] = []
    for p in peaks:
        if p.estimator == baseline:
            continue
        for h in sorted({base_peak, p.h_peak}):
            if h not in series[p.estimator] or h not in series[baseline]:
                continue
            base_val = series[baseline][h]
            other_val = series[p.estimator][h]
            rel = None if base_val == 0 else abs(other_val / base_val - 1.0) * 100.0
            diffs.append(DiffRow(
                estimator=p.estimator, baseline=baseline, horizon=h,
                coefficient=other_val, baseline_coefficient=base_val, rel_diff_pct=rel,
            ))
    return ComparisonTable(peak_rule=peak_rule, peaks=peaks, diffs=tuple(diffs))
