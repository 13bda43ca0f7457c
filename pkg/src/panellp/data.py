"""Panel dataset container and CSV ingestion.

Data are stored in long format: one row per (unit, time) observation, sorted
by unit and then time. Unit identifiers are opaque strings, time indices are
integers, and variable columns are float arrays with NaN as the missing
marker. Lags and leads are defined on the integer time index, so a gap in a
unit's time index breaks lag chains rather than silently shifting rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DuplicateKeyError,
    NonMonotoneTimeError,
    ParseError,
    UnknownVariableError,
    ValidationError,
)


@dataclass(frozen=True)
class PanelDataset:
    """A validated long-format panel.

    Attributes
    ----------
    units : tuple of str
        Distinct unit labels, in the sort order used by ``unit_code``.
    unit_code : int32 array, shape (n_rows,)
        Index into ``units`` for every row.
    time : int64 array, shape (n_rows,)
        Integer time index; strictly increasing within each unit.
    variables : dict of str -> float64 array
        One column per variable; NaN marks a missing value.
    """

    units: tuple[str, ...]
    unit_code: np.ndarray
    time: np.ndarray
    variables: dict[str, np.ndarray] = field(repr=False)

    @property
    def n_rows(self) -> int:
        return self.time.shape[0]

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def balanced(self) -> bool:
        """True when every unit is observed on the identical time index."""
        times = np.unique(self.time)
        if self.n_rows != self.n_units * times.size:
            return False
        # (unit, time) uniqueness is guaranteed, so the row count matching the
        # full grid implies every unit carries the complete time index.
        return True

    def variable(self, name: str) -> np.ndarray:
        try:
            return self.variables[name]
        except KeyError:
            raise UnknownVariableError(
                f"unknown variable {name!r}; dataset has: {', '.join(sorted(self.variables))}"
            ) from None

    def rename_units(self, mapping: dict[str, str]) -> "PanelDataset":
        """Bijectively relabel units; data are re-sorted under the new labels."""
        if sorted(mapping) != sorted(self.units) or len(set(mapping.values())) != len(mapping):
            raise ValidationError("rename mapping must be a bijection on the unit labels")
        new_labels = np.array([mapping[self.units[c]] for c in self.unit_code])
        cols = {name: col for name, col in self.variables.items()}
        return from_columns(new_labels, self.time.copy(), cols)


def from_columns(
    unit: np.ndarray,
    time: np.ndarray,
    variables: dict[str, np.ndarray],
) -> PanelDataset:
    """Build a validated dataset from raw parallel columns.

    Units may interleave, but each unit's rows must appear in strictly
    increasing time order; duplicates and out-of-order rows are rejected.
    The result is sorted by (unit, time).
    """
    unit = np.asarray(unit, dtype=object)
    time = np.asarray(time, dtype=np.int64)
    if unit.shape != time.shape or unit.ndim != 1:
        raise ValidationError("unit and time columns must be 1-D and equal length")
    n = unit.shape[0]
    for name, col in variables.items():
        if np.asarray(col).shape != (n,):
            raise ValidationError(f"variable {name!r} has wrong length")

    labels, raw_codes = np.unique(unit.astype(str), return_inverse=True)

    # duplicates are detected on the fully sorted view so they are reported
    # as duplicates wherever they sit in the file
    lex = np.lexsort((time, raw_codes))
    dup = (raw_codes[lex][1:] == raw_codes[lex][:-1]) & (np.diff(time[lex]) == 0)
    if np.any(dup):
        i = int(np.flatnonzero(dup)[0])
        raise DuplicateKeyError(
            f"duplicate observation for unit {labels[raw_codes[lex][i]]!r} "
            f"at time {int(time[lex][i])}"
        )

    # stable sort by unit keeps each unit's rows in input order, exposing the
    # original within-unit time sequence for validation
    order = np.argsort(raw_codes, kind="stable")
    codes = raw_codes[order].astype(np.int32)
    time = time[order]
    bad = (codes[1:] == codes[:-1]) & (np.diff(time) < 0)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NonMonotoneTimeError(
            f"time index not strictly increasing within unit {labels[codes[i]]!r}"
        )

    cols = {name: np.asarray(col, dtype=np.float64)[order] for name, col in variables.items()}
    return PanelDataset(
        units=tuple(str(u) for u in labels),
        unit_code=codes,
        time=time,
        variables=cols,
    )


def from_wide(
    units: list[str] | tuple[str, ...],
    times: np.ndarray,
    variables: dict[str, np.ndarray],
) -> PanelDataset:
    """Build a balanced dataset from (n_units, n_times) matrices.

    Trusted fast path for simulated data: ``times`` must be strictly
    increasing; matrices are flattened row-major (unit-major).
    """
    n_units = len(units)
    times = np.asarray(times, dtype=np.int64)
    n_times = times.size
    cols = {}
    for name, mat in variables.items():
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape != (n_units, n_times):
            raise ValidationError(f"variable {name!r} has shape {mat.shape}, expected {(n_units, n_times)}")
        cols[name] = mat.reshape(-1)
    codes = np.repeat(np.arange(n_units, dtype=np.int32), n_times)
    time = np.tile(times, n_units)
    return PanelDataset(units=tuple(units), unit_code=codes, time=time, variables=cols)


def load_csv(path: str, unit_col: str = "unit", time_col: str = "time") -> PanelDataset:
    """Read a long-format CSV into a validated :class:`PanelDataset`.

    Expected layout: a header row; a string unit column, an integer time
    column, and any number of numeric variable columns. Empty cells are
    missing values. UTF-8, comma separator, decimal point. Units may
    interleave, but each unit's rows must appear in strictly increasing
    time order.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for required in (unit_col, time_col):
            if required not in header:
                raise ValidationError(f"{path}: required column {required!r} missing from header")
        u_ix = header.index(unit_col)
        t_ix = header.index(time_col)
        var_names = [h for i, h in enumerate(header) if i not in (u_ix, t_ix)]

        units: list[str] = []
        times: list[int] = []
        cols: dict[str, list[float]] = {name: [] for name in var_names}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields, got {len(row)}", row=row_no)
            units.append(row[u_ix].strip())
            raw_t = row[t_ix].strip()
            try:
                times.append(int(raw_t))
            except ValueError:
                raise ParseError(
                    f"{path}: time value {raw_t!r} is not an integer", row=row_no, column=time_col
                ) from None
            for i, h in enumerate(header):
                if i in (u_ix, t_ix):
                    continue
                cell = row[i].strip()
                if cell == "":
                    cols[h].append(np.nan)
                else:
                    try:
                        cols[h].append(float(cell))
                    except ValueError:
                        raise ParseError(
                            f"{path}: value {cell!r} is not numeric", row=row_no, column=h
                        ) from None

    if not times:
        raise ParseError(f"{path}: no data rows")
    return from_columns(
        np.array(units, dtype=object),
        np.array(times, dtype=np.int64),
        {name: np.array(vals, dtype=np.float64) for name, vals in cols.items()},
    )
