"""Variance estimation and confidence intervals.

Covariances are cluster-robust sandwiches around the demeaned cross-moment
matrix. For the FE estimator the meat stacks demeaned-regressor-times-
residual scores; for the SPJ estimator it stacks the opposite-half centered
regressors against the jackknife residuals. Two-way clustering combines the
unit- and time-clustered pieces and subtracts the heteroskedasticity-only
overlap; a negative diagonal from that combination is clipped back to the
robust diagonal with a warning. Critical value fixed at 1.96 (asymptotic
normal); no small-cluster degrees-of-freedom adjustment is applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .estimators import FitResult
from .transform import ONE_WAY, TWO_WAY, DemeanedSample, RegressionSample

Z_95 = 1.96

CLUSTER_UNIT = "unit"
CLUSTER_TWO_WAY = "unit+time"
CLUSTER_ROBUST = "robust"
_CLUSTERS = (CLUSTER_UNIT, CLUSTER_TWO_WAY, CLUSTER_ROBUST)


@dataclass(frozen=True)
class VarianceEstimate:
    covariance: np.ndarray        # (d, d), symmetric, nonnegative diagonal
    se: np.ndarray                # (d,)
    cluster: str
    estimator: str
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class CoefficientInference:
    estimate: float
    se: float
    t_stat: float
    ci_lo: float
    ci_hi: float
    null: float = 0.0


def t_and_ci(estimate: float, se: float, null: float = 0.0) -> CoefficientInference:
    """t-statistic against ``null`` and the two-sided 95% interval."""
    if se < 0:
        raise ValidationError("standard error must be nonnegative")
    if se == 0.0:
        t = 0.0 if estimate == null else math.copysign(math.inf, estimate - null)
    else:
        t = (estimate - null) / se
    return CoefficientInference(
        estimate=estimate, se=se, t_stat=t,
        ci_lo=estimate - Z_95 * se, ci_hi=estimate + Z_95 * se, null=null,
    )


def _group_outer_sum(scores: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    """Sum over groups of (per-group score sum) outer products."""
    d = scores.shape[1]
    sums = np.empty((n_groups, d))
    for j in range(d):
        sums[:, j] = np.bincount(codes, weights=scores[:, j], minlength=n_groups)
    return sums.T @ sums


def _sandwich(qmat: np.ndarray, meat: np.ndarray, n_rows: int) -> np.ndarray:
    half = np.linalg.solve(qmat, meat)
    cov = np.linalg.solve(qmat, half.T).T / n_rows
    return (cov + cov.T) / 2.0


def _meat(
    scores: np.ndarray,
    unit_code: np.ndarray,
    n_units: int,
    time: np.ndarray,
    cluster: str,
    n_rows: int,
    warnings: list[str],
) -> np.ndarray:
    if cluster == CLUSTER_UNIT:
        if n_units < 2:
            warnings.append("only one cluster: unit-clustered variance is degenerate")
        return _group_outer_sum(scores, unit_code, n_units) / n_rows
    if cluster == CLUSTER_ROBUST:
        return scores.T @ scores / n_rows
    raise ValidationError(f"unknown cluster mode {cluster!r}")


def _combine_two_way(
    qmat: np.ndarray,
    scores: np.ndarray,
    unit_code: np.ndarray,
    n_units: int,
    time: np.ndarray,
    n_rows: int,
    warnings: list[str],
) -> np.ndarray:
    times, t_codes = np.unique(time, return_inverse=True)
    if n_units < 2:
        warnings.append("only one unit cluster in the two-way combination")
    if times.size < 2:
        warnings.append("only one time cluster in the two-way combination")
    meat_n = _group_outer_sum(scores, unit_code, n_units) / n_rows
    meat_t = _group_outer_sum(scores, t_codes, times.size) / n_rows
    meat_nt = scores.T @ scores / n_rows
    v_n = _sandwich(qmat, meat_n, n_rows)
    v_t = _sandwich(qmat, meat_t, n_rows)
    v_nt = _sandwich(qmat, meat_nt, n_rows)
    cov = v_n + v_t - v_nt
    bad = np.diag(cov) < 0
    if np.any(bad):
        warnings.append(
            "two-way combination produced a negative variance; "
            "clipped to the robust diagonal"
        )
        cov = cov.copy()
        idx = np.flatnonzero(bad)
        cov[idx, idx] = np.diag(v_nt)[idx]
    return (cov + cov.T) / 2.0


def fe_variance(dm: DemeanedSample, fit: FitResult, cluster: str = CLUSTER_UNIT) -> VarianceEstimate:
    """Cluster-robust covariance of a within fit.

    With one regressor and unit clustering this reproduces the textbook
    ratio form: sqrt of the summed squared per-unit score sums over the
    squared sum of squared demeaned regressors.
    """
    if cluster not in _CLUSTERS:
        raise ValidationError(f"unknown cluster mode {cluster!r}")
    if fit.n_rows != dm.n_rows or fit.col_names != dm.col_names:
        raise ValidationError("fit does not match the sample supplied")
    scores = dm.w * fit.residuals[:, None]
    warnings: list[str] = []
    if cluster == CLUSTER_TWO_WAY:
        cov = _combine_two_way(
            fit.qmat, scores, dm.unit_code, dm.n_units, dm.source.time, dm.n_rows, warnings
        )
    else:
        meat = _meat(scores, dm.unit_code, dm.n_units, dm.source.time, cluster, dm.n_rows, warnings)
        cov = _sandwich(fit.qmat, meat, dm.n_rows)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return VarianceEstimate(cov, se, cluster, fit.estimator, tuple(warnings))


def se_fe_cluster_unit(dm: DemeanedSample, fit: FitResult) -> VarianceEstimate:
    """Unit-clustered FE covariance (the default reported in the tables)."""
    return fe_variance(dm, fit, CLUSTER_UNIT)


def opposite_half_centered(
    sample: RegressionSample, second: np.ndarray, mode: str = ONE_WAY
) -> np.ndarray:
    """Regressors centered on the opposite half's per-unit mean.

    Early rows are centered on their unit's late-half mean and vice versa.
    In two-way mode the result is additionally recentered by its
    cross-sectional mean at each time, which removes common time components
    from the scores in the same way time demeaning removes them from the
    residuals.
    """
    w = sample.w
    g = sample.unit_code
    ng = sample.n_units
    d = w.shape[1]
    cnt_a = np.bincount(g[~second], minlength=ng).astype(np.float64)
    cnt_b = np.bincount(g[second], minlength=ng).astype(np.float64)
    if np.any(cnt_a == 0) or np.any(cnt_b == 0):
        raise ValidationError("every unit needs rows in both halves")
    mean_a = np.empty((ng, d))
    mean_b = np.empty((ng, d))
    for j in range(d):
        mean_a[:, j] = np.bincount(g[~second], weights=w[~second, j], minlength=ng) / cnt_a
        mean_b[:, j] = np.bincount(g[second], weights=w[second, j], minlength=ng) / cnt_b
    centered = np.where(second[:, None], w - mean_a[g], w - mean_b[g])
    if mode == TWO_WAY:
        times, t_codes = np.unique(sample.time, return_inverse=True)
        cnt_t = np.bincount(t_codes, minlength=times.size).astype(np.float64)
        for j in range(d):
            tm = np.bincount(t_codes, weights=centered[:, j], minlength=times.size) / cnt_t
            centered[:, j] -= tm[t_codes]
    elif mode != ONE_WAY:
        raise ValidationError(f"unknown demeaning mode {mode!r}")
    return centered


def spj_variance(
    sample: RegressionSample,
    second: np.ndarray,
    fit: FitResult,
    mode: str = ONE_WAY,
    cluster: str = CLUSTER_UNIT,
) -> VarianceEstimate:
    """Cluster-robust covariance of the split-panel jackknife estimator.

    The meat pairs the opposite-half centered regressors with the jackknife
    residuals; the bread is the full-sample demeaned cross-moment matrix.
    """
    if cluster not in _CLUSTERS:
        raise ValidationError(f"unknown cluster mode {cluster!r}")
    if fit.estimator != "SPJ":
        raise ValidationError("spj_variance needs a jackknife fit")
    if fit.n_rows != sample.n_rows:
        raise ValidationError("fit does not match the sample supplied")
    scores = opposite_half_centered(sample, second, mode) * fit.residuals[:, None]
    warnings: list[str] = []
    if cluster == CLUSTER_TWO_WAY:
        cov = _combine_two_way(
            fit.qmat, scores, sample.unit_code, sample.n_units, sample.time,
            sample.n_rows, warnings,
        )
    else:
        meat = _meat(
            scores, sample.unit_code, sample.n_units, sample.time, cluster,
            sample.n_rows, warnings,
        )
        cov = _sandwich(fit.qmat, meat, sample.n_rows)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    return VarianceEstimate(cov, se, cluster, "SPJ", tuple(warnings))


def db_score_variance(dm: DemeanedSample, fit: FitResult) -> float:
    """Mean squared per-unit score sum of the debiased fit.

    Scores are demeaned shock times debiased residual; summing within each
    unit before squaring captures the within-unit covariance of the
    composite error.
    """
    scores = dm.w[:, 0] * fit.residuals
    sums = np.bincount(dm.unit_code, weights=scores, minlength=dm.n_units)
    return float(sums @ sums) / dm.n_rows


def db_standard_error(score_var: float, shock_var: float, n_rows: int) -> float:
    """Standard error of the debiased slope.

    Normalizes the score standard deviation by the shock variance (squared
    scale), which makes the one-regressor case coincide with the clustered
    ratio formula evaluated at the debiased residuals.
    """
    if shock_var <= 0:
        raise ValidationError("shock variance must be positive")
    return math.sqrt(score_var) / (shock_var * math.sqrt(n_rows))


def db_variance(dm: DemeanedSample, fit: FitResult) -> VarianceEstimate:
    """Covariance wrapper for the debiased estimator (single coefficient)."""
    if fit.estimator != "DB":
        raise ValidationError("db_variance needs a debiased fit")
    shock_var = float(np.mean(dm.w[:, 0] ** 2))
    se = db_standard_error(db_score_variance(dm, fit), shock_var, dm.n_rows)
    cov = np.array([[se * se]])
    return VarianceEstimate(cov, np.array([se]), CLUSTER_UNIT, "DB", ())
