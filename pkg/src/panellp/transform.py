"""Per-horizon regression samples: lag/lead construction, demeaning, half splits.

``build_sample`` stacks, for one horizon h, the response value h periods
ahead against the period-t regressor vector for every (unit, t) where all
pieces are observed. ``demean`` removes unit (and optionally time) group
means; ``split_halves`` labels each unit's retained rows as an early or late
block for the jackknife.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .data import PanelDataset
from .errors import ConvergenceError, EmptySampleError, UnknownVariableError, ValidationError

if TYPE_CHECKING:  # pragma: no cover
    from .driver import LPSpec

LEVEL = "level"
CUMULATIVE_DIFFERENCE = "cumulative-difference"

ONE_WAY = "unit"
TWO_WAY = "unit+time"

# Group means below this (relative to column scale) count as already removed;
# demeaning then returns its input unchanged, which makes it exactly idempotent.
_DEMEAN_TOL = 1e-11
_TWO_WAY_SWEEP_CAP = 10_000


@dataclass(frozen=True)
class RegressionSample:
    """Stacked per-horizon design with index bookkeeping.

    Rows are sorted by (unit, time); ``unit_code`` indexes into ``units``
    (only retained units). Listwise deletion has already been applied: every
    row has a complete regressor vector and response.
    """

    horizon: int
    y: np.ndarray               # (n_rows,)
    w: np.ndarray               # (n_rows, d)
    unit_code: np.ndarray       # (n_rows,) int32 into `units`
    time: np.ndarray            # (n_rows,) int64
    units: tuple[str, ...]
    col_names: tuple[str, ...]
    warnings: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return self.y.shape[0]

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def n_cols(self) -> int:
        return self.w.shape[1]

    def unit_counts(self) -> np.ndarray:
        return np.bincount(self.unit_code, minlength=self.n_units)

    def subset(self, mask: np.ndarray) -> "RegressionSample":
        """Row subset; unit coding and labels are preserved."""
        return RegressionSample(
            horizon=self.horizon,
            y=self.y[mask],
            w=self.w[mask],
            unit_code=self.unit_code[mask],
            time=self.time[mask],
            units=self.units,
            col_names=self.col_names,
            warnings=self.warnings,
        )


@dataclass(frozen=True)
class DemeanedSample:
    """A :class:`RegressionSample` with group means removed.

    ``unit_effects`` (and for two-way mode ``time_effects``) hold the fitted
    group effects per column, response first, so the original values can be
    reconstructed as ``value + unit_effect + time_effect``.
    """

    source: RegressionSample
    y: np.ndarray
    w: np.ndarray
    mode: str                   # ONE_WAY or TWO_WAY
    unit_effects: np.ndarray    # (n_units, 1 + d)
    time_effects: np.ndarray | None
    times: np.ndarray | None    # sorted distinct times aligning time_effects

    @property
    def horizon(self) -> int:
        return self.source.horizon

    @property
    def unit_code(self) -> np.ndarray:
        return self.source.unit_code

    @property
    def n_rows(self) -> int:
        return self.source.n_rows

    @property
    def n_units(self) -> int:
        return self.source.n_units

    @property
    def col_names(self) -> tuple[str, ...]:
        return self.source.col_names

    def as_sample(self) -> RegressionSample:
        """Repackage the demeaned values as a plain sample (for re-demeaning)."""
        return RegressionSample(
            horizon=self.source.horizon,
            y=self.y,
            w=self.w,
            unit_code=self.source.unit_code,
            time=self.source.time,
            units=self.source.units,
            col_names=self.source.col_names,
            warnings=self.source.warnings,
        )


def _lookup(keys: np.ndarray, target: np.ndarray, valid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Find rows whose composite (unit, time) key equals ``target``.

    Returns (positions, found) where ``found`` is False for gaps or for
    targets already marked invalid.
    """
    pos = np.searchsorted(keys, target)
    pos_clamped = np.minimum(pos, keys.size - 1)
    found = valid & (keys[pos_clamped] == target)
    return pos_clamped, found


def build_sample(data: PanelDataset, spec: "LPSpec", h: int) -> RegressionSample:
    """Assemble the horizon-``h`` stacked regression sample for ``spec``.

    The regressor vector is, in order: the shock at lag 0, shock lags
    1..shock_lags, response lags (ascending), then each extra control's lags
    (ascending). Rows where the (possibly differenced) response or any
    regressor is unobserved are dropped; units left with fewer than d + 2
    rows are dropped with a recorded warning.
    """
    lo, hi = spec.horizons
    if not (lo <= h <= hi):
        raise ValidationError(f"horizon {h} outside spec range [{lo}, {hi}]")

    # (variable, lag) pairs in declared order
    pairs: list[tuple[str, int]] = [(spec.shock, 0)]
    pairs += [(spec.shock, j) for j in range(1, spec.shock_lags + 1)]
    resp_lags = spec.response_lags_at(h)
    pairs += [(spec.response, k) for k in resp_lags]
    for var, lags in spec.extra_controls:
        pairs += [(var, j) for j in sorted(lags)]
    if len(set(pairs)) != len(pairs):
        raise ValidationError(f"duplicate (variable, lag) regressor in spec: {pairs}")

    for var in {spec.response, spec.shock} | {v for v, _ in spec.extra_controls}:
        data.variable(var)  # raises UnknownVariableError

    tmin = int(data.time.min())
    span = int(data.time.max()) - tmin + 1
    offs = data.time - tmin
    keys = data.unit_code.astype(np.int64) * span + offs
    n = data.n_rows

    resp = data.variable(spec.response)
    lead_target = keys + h
    lead_ok = offs + h < span
    pos, found = _lookup(keys, lead_target, lead_ok)
    y_lead = np.where(found, resp[pos], np.nan)
    keep = found & ~np.isnan(y_lead)
    if spec.response_transform == CUMULATIVE_DIFFERENCE:
        y_val = (y_lead - resp) * spec.response_scale
        keep &= ~np.isnan(resp)
    else:
        y_val = y_lead * spec.response_scale

    cols = np.empty((n, len(pairs)))
    for j, (var, lag) in enumerate(pairs):
        series = data.variable(var)
        if lag == 0:
            vals = series
        else:
            target = keys - lag
            ok = offs - lag >= 0
            pos, found = _lookup(keys, target, ok)
            vals = np.where(found, series[pos], np.nan)
        cols[:, j] = vals
        keep &= ~np.isnan(vals)

    if not np.any(keep):
        raise EmptySampleError(f"horizon {h}: no rows retained after lag/lead construction")

    d = len(pairs)
    warnings: list[str] = []
    counts = np.bincount(data.unit_code[keep], minlength=data.n_units)
    short = np.flatnonzero((counts > 0) & (counts < d + 2))
    if short.size:
        dropped = [data.units[int(i)] for i in short]
        warnings.append(
            f"horizon {h}: dropped units with fewer than {d + 2} usable rows: {', '.join(dropped)}"
        )
        keep &= ~np.isin(data.unit_code, short.astype(np.int32))
        counts = np.bincount(data.unit_code[keep], minlength=data.n_units)
    if not np.any(keep):
        raise EmptySampleError(f"horizon {h}: all units dropped (need {d + 2} rows per unit)")

    kept_units = np.flatnonzero(counts > 0)
    code_map = np.full(data.n_units, -1, dtype=np.int32)
    code_map[kept_units] = np.arange(kept_units.size, dtype=np.int32)

    names = tuple(v if lag == 0 else f"{v}_l{lag}" for v, lag in pairs)
    return RegressionSample(
        horizon=h,
        y=np.ascontiguousarray(y_val[keep]),
        w=np.ascontiguousarray(cols[keep]),
        unit_code=code_map[data.unit_code[keep]],
        time=data.time[keep].copy(),
        units=tuple(data.units[int(i)] for i in kept_units),
        col_names=names,
        warnings=tuple(warnings),
    )


def split_halves(sample: RegressionSample) -> np.ndarray:
    """Label each row as early (False) or late (True) within its unit.

    Each unit's retained rows, in time order, are split so the early block
    gets ceil(count / 2) rows and the late block the remainder. Labels depend
    only on each unit's own row order.
    """
    counts = sample.unit_counts()
    if np.any(counts < 2):
        bad = sample.units[int(np.argmin(counts))]
        raise ValidationError(f"unit {bad!r} has fewer than 2 rows; cannot split")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rank_in_unit = np.arange(sample.n_rows) - starts[sample.unit_code]
    first_block = (counts + 1) // 2
    return rank_in_unit >= first_block[sample.unit_code]


def _group_stats(values: np.ndarray, codes: np.ndarray, n_groups: int) -> np.ndarray:
    """Column-wise group means, shape (n_groups, k)."""
    counts = np.bincount(codes, minlength=n_groups).astype(np.float64)
    out = np.empty((n_groups, values.shape[1]))
    for j in range(values.shape[1]):
        out[:, j] = np.bincount(codes, weights=values[:, j], minlength=n_groups)
    out /= np.maximum(counts, 1.0)[:, None]
    return out


def _col_tol(values: np.ndarray) -> np.ndarray:
    scale = np.abs(values).max(axis=0, initial=0.0)
    return _DEMEAN_TOL * np.maximum(1.0, scale)


def demean(sample: RegressionSample, mode: str = ONE_WAY) -> DemeanedSample:
    """Remove unit (one-way) or unit and time (two-way) group means.

    One-way demeaning iterates mean subtraction until every per-unit mean is
    below tolerance, and returns the input values untouched when they already
    are, so the operation is a projection at the bit level. Two-way demeaning
    uses the closed four-term formula on balanced samples and alternating
    projections otherwise.
    """
    if mode not in (ONE_WAY, TWO_WAY):
        raise ValidationError(f"unknown demeaning mode {mode!r}")
    if sample.n_rows == 0:
        raise EmptySampleError("cannot demean an empty sample")

    vals = np.column_stack([sample.y, sample.w])
    g = sample.unit_code
    ng = sample.n_units
    unit_eff = np.zeros((ng, vals.shape[1]))

    if mode == ONE_WAY:
        for _ in range(50):
            means = _group_stats(vals, g, ng)
            if np.all(np.abs(means).max(axis=0) <= _col_tol(vals)):
                break
            vals = vals - means[g]
            unit_eff += means
        return DemeanedSample(
            source=sample, y=vals[:, 0], w=np.ascontiguousarray(vals[:, 1:]),
            mode=mode, unit_effects=unit_eff, time_effects=None, times=None,
        )

    times, t_codes = np.unique(sample.time, return_inverse=True)
    nt = times.size
    time_eff = np.zeros((nt, vals.shape[1]))
    balanced = sample.n_rows == ng * nt

    def _converged(v: np.ndarray) -> bool:
        tol = _col_tol(v)
        um = _group_stats(v, g, ng)
        if not np.all(np.abs(um).max(axis=0) <= tol):
            return False
        tm = _group_stats(v, t_codes, nt)
        return bool(np.all(np.abs(tm).max(axis=0) <= tol))

    if _converged(vals):
        pass
    elif balanced:
        um = _group_stats(vals, g, ng)
        tm = _group_stats(vals, t_codes, nt)
        grand = vals.mean(axis=0)
        vals = vals - um[g] - tm[t_codes] + grand
        unit_eff += um - grand
        time_eff += tm
    else:
        for sweep in range(_TWO_WAY_SWEEP_CAP):
            um = _group_stats(vals, g, ng)
            vals = vals - um[g]
            unit_eff += um
            tm = _group_stats(vals, t_codes, nt)
            vals = vals - tm[t_codes]
            time_eff += tm
            if _converged(vals):
                break
        else:
            raise ConvergenceError(
                f"two-way demeaning did not converge within {_TWO_WAY_SWEEP_CAP} sweeps"
            )

    return DemeanedSample(
        source=sample, y=vals[:, 0], w=np.ascontiguousarray(vals[:, 1:]),
        mode=mode, unit_effects=unit_eff, time_effects=time_eff, times=times,
    )
