"""Data-generating processes and the Monte Carlo experiment runner.

Two designs are provided. The single-shock design draws an AR(1) shock and a
response that loads on it contemporaneously; the richer design adds a lagged
response in both equations plus a deterministic quadratic time path, and is
estimated with two-way fixed effects and a contemporaneous response control.

Randomness comes from the counter-based Philox generator keyed by
(seed, replication), so every replication owns an independent stream and
results are identical for any degree of parallelism. Replication outputs are
aggregated in replication order.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from .data import PanelDataset, from_wide
from .driver import ESTIMATOR_ORDER, IRFResult, LPSpec, run_lp
from .errors import PanelLPError, UnstableParametersError, ValidationError
from .inference import CLUSTER_UNIT
from .transform import ONE_WAY, TWO_WAY

PROTOTYPE = "prototype"
VAR1 = "var1"

INIT_BURN_IN = "burn-in"
INIT_STATIONARY = "stationary"


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo design.

    ``fe_x_scale`` controls how strongly the response fixed effect loads on
    the unit's average shock (``fe_x_scale * sqrt(T) * mean(x_i) + noise``).
    ``shock_fe_sd`` sets the spread of the shock equation's unit intercepts;
    the default 0 drops them, which costs no generality because the within
    transformation absorbs any value. ``trend_linear``/``trend_quad`` set
    the deterministic time path of the var1 design. ``init`` selects
    transient removal for the shock process: a burn-in of ``burn_in``
    periods (default) or, for the prototype design, an exact draw from the
    shock's stationary law.
    """

    dgp: str
    beta0: float
    rho: float
    n_units: int
    n_periods: int
    horizons: tuple[int, int] = (0, 10)
    replications: int = 1000
    seed: int = 0
    estimators: tuple[str, ...] = ("FE", "SPJ")
    tau: float = 0.5
    kappa: float = -0.5
    burn_in: int = 200
    init: str = INIT_BURN_IN
    fe_x_scale: float = 0.2
    shock_fe_sd: float = 0.0
    trend_linear: float = 0.025
    trend_quad: float = 0.001

    def validate(self) -> None:
        if self.dgp not in (PROTOTYPE, VAR1):
            raise ValidationError(f"unknown dgp {self.dgp!r}")
        if abs(self.rho) >= 1.0:
            raise ValidationError(f"requires |rho| < 1, got {self.rho}")
        if self.n_units < 2:
            raise ValidationError("need at least 2 units")
        lo, hi = self.horizons
        if lo < 0 or lo > hi:
            raise ValidationError(f"invalid horizon range [{lo}, {hi}]")
        if hi >= self.n_periods - 3:
            raise ValidationError(
                f"max horizon {hi} leaves too few periods out of {self.n_periods}"
            )
        if self.replications < 1:
            raise ValidationError("replications must be at least 1")
        if self.burn_in < 0:
            raise ValidationError("burn_in must be nonnegative")
        if self.shock_fe_sd < 0:
            raise ValidationError("shock_fe_sd must be nonnegative")
        if self.init not in (INIT_BURN_IN, INIT_STATIONARY):
            raise ValidationError(f"unknown init {self.init!r}")
        if not self.estimators:
            raise ValidationError("at least one estimator is required")
        unknown = [e for e in self.estimators if e not in ESTIMATOR_ORDER]
        if unknown:
            raise ValidationError(f"unknown estimators: {', '.join(unknown)}")
        if self.dgp == VAR1:
            if "DB" in self.estimators:
                raise ValidationError(
                    "the DB estimator has no closed-form correction for the var1 design"
                )
            if self.init == INIT_STATIONARY:
                raise ValidationError("exact stationary initialization is prototype-only")
            radius = spectral_radius(var1_transition(self.beta0, self.rho, self.tau, self.kappa))
            if radius >= 1.0:
                raise UnstableParametersError(
                    "var1 parameters imply a non-stationary system", spectral_radius=radius
                )

    def ordered_estimators(self) -> tuple[str, ...]:
        return tuple(e for e in ESTIMATOR_ORDER if e in self.estimators)

    def estimation_horizons(self) -> tuple[int, int]:
        """The var1 design starts at h = 1: its horizon-0 regression would
        put the contemporaneous response control on both sides."""
        lo, hi = self.horizons
        if self.dgp == VAR1:
            lo = max(lo, 1)
        return lo, hi

    def lp_spec(self) -> LPSpec:
        lo, hi = self.estimation_horizons()
        if self.dgp == PROTOTYPE:
            return LPSpec(
                response="y", shock="x", horizons=(lo, hi),
                fixed_effects=ONE_WAY, cluster=CLUSTER_UNIT,
                estimators=self.ordered_estimators(),
            )
        return LPSpec(
            response="y", shock="x", horizons=(lo, hi),
            response_lags=(0,),
            fixed_effects=TWO_WAY, cluster=CLUSTER_UNIT,
            estimators=self.ordered_estimators(),
        )


def var1_transition(beta0: float, rho: float, tau: float, kappa: float) -> np.ndarray:
    """Reduced-form transition of the state (response, shock).

    Obtained by substituting the shock equation into the response equation,
    so a shock innovation moves the response by ``beta0`` on impact and the
    state propagates by this matrix afterwards.
    """
    return np.array([[tau + beta0 * kappa, beta0 * rho], [kappa, rho]])


def spectral_radius(mat: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def prototype_irf(beta0: float, rho: float, h: int) -> float:
    """True impulse response of the single-shock design: beta0 * rho**h."""
    if abs(rho) >= 1.0:
        raise ValueError(f"requires |rho| < 1, got {rho}")
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    return beta0 * (1.0 if h == 0 else rho**h)


def cumulative_irf(beta0: float, rho: float, h: int) -> float:
    """True coefficient when the response is the h-period cumulative change."""
    if abs(rho) >= 1.0:
        raise ValueError(f"requires |rho| < 1, got {rho}")
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    if rho == 0.0:
        return 0.0
    return beta0 * rho * (1.0 - rho**h) / (1.0 - rho)


def var1_irf(beta0: float, rho: float, tau: float, kappa: float, h: int) -> float:
    """Population projection coefficient on the shock at horizon ``h``.

    The coefficient on the period-t shock in the projection of the period
    t+h response on (response_t, shock_t): the (response, shock) entry of
    the h-th power of the reduced-form transition. At h = 0 the structural
    impact coefficient ``beta0`` is returned.
    """
    mat = var1_transition(beta0, rho, tau, kappa)
    radius = spectral_radius(mat)
    if radius >= 1.0:
        raise UnstableParametersError(
            "var1 parameters imply a non-stationary system", spectral_radius=radius
        )
    if h < 0:
        raise ValueError("horizon must be nonnegative")
    if h == 0:
        return beta0
    return float(np.linalg.matrix_power(mat, h)[0, 1])


def _simulate_paths(
    cfg: SimConfig,
    u_shock: np.ndarray,
    u_resp: np.ndarray,
    fe_noise: np.ndarray,
    x_init: np.ndarray | None,
    mu_shock: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the coupled recursion on given innovation arrays.

    Both designs share this path. The response fixed effect is
    ``fe_x_scale * sqrt(T) * mean_t shock + noise``, computed from a
    preliminary pass when the shock feeds back on the response (kappa != 0)
    and directly otherwise. The deterministic time path applies to kept
    periods only (t = 1..T).
    """
    n, total = u_shock.shape
    T = cfg.n_periods
    burn = total - T
    tau = cfg.tau if cfg.dgp == VAR1 else 0.0
    kappa = cfg.kappa if cfg.dgp == VAR1 else 0.0
    mu_x = np.zeros(n) if mu_shock is None else mu_shock
    if cfg.dgp == VAR1:
        tt = np.arange(1, T + 1, dtype=np.float64)
        trend = np.concatenate([np.zeros(burn), cfg.trend_linear * tt + cfg.trend_quad * tt * tt])
    else:
        trend = np.zeros(total)

    def recurse(mu_resp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.empty((n, total))
        y = np.empty((n, total))
        x_prev = np.zeros(n) if x_init is None else x_init
        y_prev = np.zeros(n)
        for s in range(total):
            x_cur = mu_x + kappa * y_prev + cfg.rho * x_prev + u_shock[:, s]
            y_cur = mu_resp + trend[s] + tau * y_prev + cfg.beta0 * x_cur + u_resp[:, s]
            x[:, s] = x_cur
            y[:, s] = y_cur
            x_prev, y_prev = x_cur, y_cur
        return x[:, burn:], y[:, burn:]

    # Pass 1 pins down the unit-mean shock levels the fixed effect loads on;
    # pass 2 regenerates with the final fixed effect. When the shock does not
    # feed back on the response (kappa = 0) the two shock paths coincide.
    x0, _ = recurse(fe_noise)
    mu = cfg.fe_x_scale * np.sqrt(T) * x0.mean(axis=1) + fe_noise
    return recurse(mu)


def generate(cfg: SimConfig, replication: int) -> PanelDataset:
    """Generate one replication's panel (variables ``y`` and ``x``)."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, replication])))
    n, T = cfg.n_units, cfg.n_periods
    burn = 0 if cfg.init == INIT_STATIONARY else cfg.burn_in
    u_shock = rng.standard_normal((n, burn + T))
    u_resp = rng.standard_normal((n, burn + T))
    fe_noise = rng.standard_normal(n)
    # optional draws sit after the core ones so the default configuration's
    # streams are unaffected by their presence
    mu_shock = None
    if cfg.shock_fe_sd > 0:
        mu_shock = cfg.shock_fe_sd * rng.standard_normal(n)
    x_init = None
    if cfg.init == INIT_STATIONARY:
        center = 0.0 if mu_shock is None else mu_shock / (1.0 - cfg.rho)
        x_init = center + rng.standard_normal(n) / np.sqrt(1.0 - cfg.rho**2)
    x, y = _simulate_paths(cfg, u_shock, u_resp, fe_noise, x_init, mu_shock)
    width = max(4, len(str(n - 1)))
    units = [f"u{i:0{width}d}" for i in range(n)]
    return from_wide(units, np.arange(1, T + 1), {"y": y, "x": x})


def gen_prototype(cfg: SimConfig, replication: int) -> PanelDataset:
    if cfg.dgp != PROTOTYPE:
        raise ValidationError("config is not a prototype design")
    return generate(cfg, replication)


def gen_var1(cfg: SimConfig, replication: int) -> PanelDataset:
    if cfg.dgp != VAR1:
        raise ValidationError("config is not a var1 design")
    cfg.validate()
    return generate(cfg, replication)


def deterministic_paths(cfg: SimConfig) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free paths (x, y): the generator run with all innovations zero."""
    burn = 0 if cfg.init == INIT_STATIONARY else cfg.burn_in
    zeros = np.zeros((cfg.n_units, burn + cfg.n_periods))
    x_init = np.zeros(cfg.n_units) if cfg.init == INIT_STATIONARY else None
    return _simulate_paths(cfg, zeros, zeros, np.zeros(cfg.n_units), x_init)


def true_irf(cfg: SimConfig, h: int) -> float:
    if cfg.dgp == PROTOTYPE:
        return prototype_irf(cfg.beta0, cfg.rho, h)
    return var1_irf(cfg.beta0, cfg.rho, cfg.tau, cfg.kappa, h)


@dataclass(frozen=True)
class SimCell:
    """Aggregated Monte Carlo metrics for one (horizon, estimator) pair."""

    horizon: int
    estimator: str
    truth: float
    mean: float
    bias: float
    sd: float
    rmse: float
    coverage: float
    n_reps: int


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    cells: tuple[SimCell, ...]
    n_failed: int
    failures: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()
    raw_estimates: np.ndarray | None = None   # (replications, n_cells), NaN when failed
    raw_covered: np.ndarray | None = None

    def cell(self, horizon: int, estimator: str) -> SimCell:
        for c in self.cells:
            if c.horizon == horizon and c.estimator == estimator:
                return c
        raise KeyError((horizon, estimator))

    def mc_se(self, horizon: int, estimator: str) -> float:
        """Monte Carlo standard error of the mean estimate in one cell."""
        c = self.cell(horizon, estimator)
        return c.sd / np.sqrt(c.n_reps)


def _cell_index(cfg: SimConfig) -> list[tuple[int, str]]:
    lo, hi = cfg.estimation_horizons()
    return [(h, e) for h in range(lo, hi + 1) for e in cfg.ordered_estimators()]


def _run_replication(cfg: SimConfig, replication: int) -> tuple[np.ndarray, np.ndarray, str | None]:
    """One replication: generate, estimate, record estimate and CI coverage."""
    idx = _cell_index(cfg)
    estimates = np.full(len(idx), np.nan)
    covered = np.zeros(len(idx), dtype=bool)
    data = generate(cfg, replication)
    try:
        result: IRFResult = run_lp(data, cfg.lp_spec())
    except PanelLPError as exc:
        return estimates, covered, f"replication {replication}: {exc}"
    for k, ((h, est), cell) in enumerate(zip(idx, result.cells)):
        if cell.horizon != h or cell.estimator != est:
            return estimates, covered, f"replication {replication}: cell order mismatch"
        if not cell.ok:
            return estimates, covered, f"replication {replication}: {cell.error}"
        truth = true_irf(cfg, h)
        estimates[k] = cell.coefficient
        covered[k] = cell.ci_lo <= truth <= cell.ci_hi
    return estimates, covered, None


def run_mc(cfg: SimConfig, threads: int = 1, keep_raw: bool = False) -> SimReport:
    """Run the full Monte Carlo experiment described by ``cfg``.

    Replication r draws from the stream keyed by (seed, r), and aggregation
    runs in replication order, so the report is identical for any
    ``threads`` value. Failed replications are excluded from every cell and
    counted; acceptance-grade runs require zero failures.
    """
    cfg.validate()
    idx = _cell_index(cfg)
    reps = cfg.replications
    estimates = np.full((reps, len(idx)), np.nan)
    covered = np.zeros((reps, len(idx)), dtype=bool)
    errors: list[str] = []
    ok = np.ones(reps, dtype=bool)

    if threads <= 1:
        results = map(partial(_run_replication, cfg), range(reps))
    else:
        pool = ProcessPoolExecutor(max_workers=threads)
        results = pool.map(
            partial(_run_replication, cfg), range(reps),
            chunksize=max(1, reps // (threads * 8)),
        )
    for r, (est_r, cov_r, err) in enumerate(results):
        if err is not None:
            ok[r] = False
            if len(errors) < 8:
                errors.append(err)
            continue
        estimates[r] = est_r
        covered[r] = cov_r
    if threads > 1:
        pool.shutdown()

    notes: list[str] = []
    lo, hi = cfg.horizons
    est_lo, _ = cfg.estimation_horizons()
    if est_lo != lo:
        notes.append(
            f"var1 estimation starts at horizon {est_lo}; the horizon-0 impact "
            f"coefficient is {cfg.beta0} by construction and is not estimated"
        )

    n_ok = int(ok.sum())
    cells: list[SimCell] = []
    for k, (h, e) in enumerate(idx):
        truth = true_irf(cfg, h)
        vals = estimates[ok, k]
        cells.append(SimCell(
            horizon=h, estimator=e, truth=truth,
            mean=float(vals.mean()) if n_ok else float("nan"),
            bias=float(vals.mean() - truth) if n_ok else float("nan"),
            sd=float(vals.std(ddof=1)) if n_ok > 1 else float("nan"),
            rmse=float(np.sqrt(np.mean((vals - truth) ** 2))) if n_ok else float("nan"),
            coverage=float(covered[ok, k].mean()) if n_ok else float("nan"),
            n_reps=n_ok,
        ))
    return SimReport(
        config=cfg,
        cells=tuple(cells),
        n_failed=reps - n_ok,
        failures=tuple(errors),
        notes=tuple(notes),
        raw_estimates=estimates if keep_raw else None,
        raw_covered=covered if keep_raw else None,
    )
