"""Point estimators: within (FE) least squares, split-panel jackknife (SPJ),
the analytic debiased (DB) estimator for a single AR(1) shock, the auxiliary
panel AR(1) fit, and the closed-form bias functions they rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import PanelDataset
from .errors import (
    NoWithinVariationError,
    NumericalError,
    RankDeficientError,
    ValidationError,
)
from .transform import (
    ONE_WAY,
    DemeanedSample,
    RegressionSample,
    demean,
    split_halves,
)

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class FitResult:
    """Output of one least-squares (or bias-corrected) fit.

    ``qmat`` is the demeaned cross-moment matrix W'W / n_rows. ``parts``
    optionally carries the component coefficient vectors of a composite
    estimator (for SPJ: the full-sample and half-sample fits).
    """

    estimator: str
    coefficients: np.ndarray      # (d,)
    residuals: np.ndarray         # (n_rows,) on the full demeaned sample
    qmat: np.ndarray              # (d, d)
    n_units: int
    n_rows: int
    col_names: tuple[str, ...]
    parts: dict[str, np.ndarray] | None = None

    @property
    def rows_per_unit(self) -> float:
        """Average retained rows per unit (equals T - h on a balanced panel)."""
        return self.n_rows / self.n_units


def _suspect_columns(w: np.ndarray, names: tuple[str, ...]) -> tuple[str, ...]:
    try:
        _, _, vh = np.linalg.svd(w, full_matrices=False)
    except np.linalg.LinAlgError:
        return names
    weights = np.abs(vh[-1])
    flagged = np.flatnonzero(weights >= max(0.3, 0.5 * weights.max()))
    return tuple(names[int(i)] for i in flagged)


def fe_fit(dm: DemeanedSample, estimator: str = "FE") -> FitResult:
    """Within least squares on a demeaned sample.

    Solves the normal equations through an orthogonal factorization (QR),
    never by explicit inversion, and refuses designs whose cross-moment
    matrix has condition number at or above 1e12.
    """
    w, y = dm.w, dm.y
    n, d = w.shape
    if n < d + 1:
        raise RankDeficientError(f"{n} rows cannot identify {d} coefficients")

    qmat = (w.T @ w) / n
    qmat = (qmat + qmat.T) / 2.0

    if d == 1:
        sxx = float(qmat[0, 0]) * n
        scale = float(np.abs(w).max(initial=0.0))
        if not np.isfinite(sxx) or sxx <= n * (1e-12 * max(scale, 1e-300)) ** 2:
            raise RankDeficientError(
                "regressor has no within variation", columns=dm.col_names[:1]
            )
        theta = np.array([float(w[:, 0] @ y) / sxx])
    else:
        svals = np.linalg.svd(qmat, compute_uv=False)
        if svals[-1] <= 0 or svals[0] / svals[-1] >= _COND_LIMIT:
            raise RankDeficientError(
                "cross-moment matrix numerically singular",
                columns=_suspect_columns(w, dm.col_names),
            )
        q, r = np.linalg.qr(w)
        theta = np.linalg.solve(r, q.T @ y)

    residuals = y - w @ theta
    return FitResult(
        estimator=estimator,
        coefficients=theta,
        residuals=residuals,
        qmat=qmat,
        n_units=dm.n_units,
        n_rows=n,
        col_names=dm.col_names,
    )


def spj_combine(theta_full: np.ndarray, theta_a: np.ndarray, theta_b: np.ndarray) -> np.ndarray:
    """Jackknife combination: 2 * full - (first-half + second-half) / 2."""
    return 2.0 * theta_full - 0.5 * (theta_a + theta_b)


def spj_fit(
    sample: RegressionSample,
    mode: str = ONE_WAY,
    demeaned: DemeanedSample | None = None,
) -> FitResult:
    """Split-panel jackknife estimator.

    The full-sample fit and the two half-sample fits are each genuine within
    estimators: the halves are re-demeaned on their own rows before fitting.
    Residuals are taken on the full demeaned sample at the combined
    coefficient vector.
    """
    if demeaned is None:
        demeaned = demean(sample, mode)
    elif demeaned.mode != mode or demeaned.source is not sample:
        raise ValidationError("demeaned sample does not match the sample/mode supplied")

    full = fe_fit(demeaned)
    second = split_halves(sample)
    halves = {}
    for label, mask in (("a", ~second), ("b", second)):
        try:
            halves[label] = fe_fit(demean(sample.subset(mask), mode))
        except RankDeficientError as exc:
            raise RankDeficientError(f"half {label} of the split is rank deficient: {exc}") from exc

    theta = spj_combine(full.coefficients, halves["a"].coefficients, halves["b"].coefficients)
    residuals = demeaned.y - demeaned.w @ theta
    return FitResult(
        estimator="SPJ",
        coefficients=theta,
        residuals=residuals,
        qmat=full.qmat,
        n_units=demeaned.n_units,
        n_rows=demeaned.n_rows,
        col_names=demeaned.col_names,
        parts={
            "full": full.coefficients,
            "a": halves["a"].coefficients,
            "b": halves["b"].coefficients,
        },
    )


def ar1_fe(data: PanelDataset, var: str) -> tuple[float, float]:
    """Within estimate of a panel AR(1): value at t+1 on value at t.

    Returns (slope, innovation variance), the latter as the plain mean of
    squared residuals with no degrees-of-freedom correction. Units
    contributing fewer than two consecutive-pair observations are dropped.
    This is the uncorrected within fit, so the slope inherits the usual
    small-T attenuation.
    """
    series = data.variable(var)
    tmin = int(data.time.min())
    span = int(data.time.max()) - tmin + 1
    keys = data.unit_code.astype(np.int64) * span + (data.time - tmin)

    pos = np.searchsorted(keys, keys + 1)
    pos = np.minimum(pos, keys.size - 1)
    has_next = (keys[pos] == keys + 1) & ((data.time - tmin) + 1 < span)
    ok = has_next & ~np.isnan(series) & ~np.isnan(series[pos])

    counts = np.bincount(data.unit_code[ok], minlength=data.n_units)
    good_units = counts >= 2
    ok &= good_units[data.unit_code]
    if not np.any(ok):
        raise NoWithinVariationError(f"variable {var!r}: no unit has two consecutive pairs")

    x_now = series[ok]
    x_next = series[pos][ok]
    codes = data.unit_code[ok]
    uniq, g = np.unique(codes, return_inverse=True)
    ng = uniq.size
    cnt = np.bincount(g, minlength=ng).astype(np.float64)
    x_now_d = x_now - (np.bincount(g, weights=x_now, minlength=ng) / cnt)[g]
    x_next_d = x_next - (np.bincount(g, weights=x_next, minlength=ng) / cnt)[g]

    sxx = float(x_now_d @ x_now_d)
    scale = float(np.abs(x_now).max(initial=0.0))
    if sxx <= x_now.size * (1e-10 * max(scale, 1e-300)) ** 2:
        raise NoWithinVariationError(f"variable {var!r} is constant within every unit")
    rho_hat = float(x_now_d @ x_next_d) / sxx
    resid = x_next_d - rho_hat * x_now_d
    return rho_hat, float(np.mean(resid * resid))


def nickell_bias_factor(rho: float, n_periods: float, horizon: int) -> float:
    """Closed-form scaling factor of the within-estimator bias at one horizon.

    Equals the brute-force double sum
    ``sum_{s<h} sum_{t=h-s}^{T-h} (1 - t/(T-h)) rho^(t-h+2s)`` with the
    convention 0**0 = 1, evaluated for an AR(1) regressor with
    autoregression ``rho`` observed over ``n_periods`` periods.
    """
    if abs(rho) >= 1.0:
        raise ValueError(f"requires |rho| < 1, got {rho}")
    if horizon < 0 or horizon >= n_periods:
        raise ValueError(f"requires 0 <= horizon < n_periods, got h={horizon}, T={n_periods}")
    t_h = n_periods - horizon
    if horizon == 0:
        return 0.0
    if rho == 0.0:
        # only the (s=0, t=h) term of the double sum survives
        return 1.0 - horizon / t_h
    om = (1.0 - rho) ** 2
    tail = rho ** (n_periods - 2 * horizon + 1) * (1.0 - rho ** (2 * horizon))
    return (1.0 - rho**horizon) / om - horizon / (t_h * om) + tail / (t_h * om * (1.0 - rho**2))


def fe_bias_limit(
    beta0: float, rho: float, horizon: int, c: float, innov_var: float, shock_var: float
) -> float:
    """Limit of the scaled within-estimator bias when N/T converges to ``c``."""
    if abs(rho) >= 1.0:
        raise ValueError(f"requires |rho| < 1, got {rho}")
    if c < 0:
        raise ValueError("c must be nonnegative")
    if innov_var <= 0 or shock_var <= 0:
        raise ValueError("variances must be positive")
    top = 0.0 if horizon == 0 else 1.0 - rho**horizon
    return -beta0 * (innov_var / shock_var) * np.sqrt(c) * top / (1.0 - rho) ** 2


@dataclass(frozen=True)
class BiasInputs:
    """Ingredients of the analytic bias correction for a single AR(1) shock.

    ``slope_h0`` is the contemporaneous within slope (horizon-0 fit),
    ``rho_hat`` and ``innov_var`` come from the AR(1) fit of the shock, and
    ``shock_var`` / ``t_h`` are taken from the horizon sample being corrected.
    """

    slope_h0: float
    rho_hat: float
    innov_var: float
    shock_var: float
    t_h: float
    horizon: int

    def __post_init__(self) -> None:
        if self.innov_var < 0:
            raise ValidationError("innovation variance must be nonnegative")
        if self.shock_var <= 0:
            raise ValidationError("shock variance must be positive")
        if self.t_h <= 0:
            raise ValidationError("effective sample size must be positive")


def bias_inputs_for(
    dm: DemeanedSample, slope_h0: float, rho_hat: float, innov_var: float
) -> BiasInputs:
    """Assemble :class:`BiasInputs` for one horizon sample."""
    shock_var = float(np.mean(dm.w[:, 0] ** 2))
    return BiasInputs(
        slope_h0=slope_h0,
        rho_hat=rho_hat,
        innov_var=innov_var,
        shock_var=shock_var,
        t_h=dm.n_rows / dm.n_units,
        horizon=dm.horizon,
    )


def db_fit(dm: DemeanedSample, aux: BiasInputs, fe: FitResult | None = None) -> FitResult:
    """Analytically debiased within estimator for the single-shock design.

    Adds the plug-in bias term built from the closed-form factor to the FE
    slope and recomputes residuals at the corrected coefficient. Only defined
    for a one-regressor sample with unit fixed effects.
    """
    if dm.w.shape[1] != 1:
        raise ValidationError(
            "debiased estimator is only defined for a single shock regressor"
        )
    if dm.mode != ONE_WAY:
        raise ValidationError("debiased estimator is only defined for unit fixed effects")
    if abs(aux.rho_hat) >= 1.0:
        raise NumericalError(
            f"shock autoregression estimated non-stationary (rho = {aux.rho_hat:.6f})"
        )
    if aux.horizon != dm.horizon:
        raise ValidationError("bias inputs were built for a different horizon")

    if fe is None:
        fe = fe_fit(dm)
    n_periods = aux.t_h + aux.horizon
    correction = (
        aux.slope_h0 / (aux.t_h * aux.shock_var)
        * aux.innov_var
        * nickell_bias_factor(aux.rho_hat, n_periods, aux.horizon)
    )
    theta = fe.coefficients + np.array([correction])
    residuals = dm.y - dm.w @ theta
    return FitResult(
        estimator="DB",
        coefficients=theta,
        residuals=residuals,
        qmat=fe.qmat,
        n_units=fe.n_units,
        n_rows=fe.n_rows,
        col_names=fe.col_names,
        parts={"fe": fe.coefficients},
    )
