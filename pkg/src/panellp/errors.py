"""Exception hierarchy for panellp.

Validation problems (bad input files, malformed study descriptions) and
numerical problems (rank deficiency, non-convergence) are kept on separate
branches so callers can map them to distinct exit codes.
"""

from __future__ import annotations


class PanelLPError(Exception):
    """Base class for all panellp errors."""


class ValidationError(PanelLPError):
    """Bad user input: files, schemas, study descriptions, configs."""


class ParseError(ValidationError):
    """A cell of an input file failed to parse; reports row and column."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
        self.row = row
        self.column = column


class DuplicateKeyError(ValidationError):
    """A (unit, time) pair appears more than once."""


class NonMonotoneTimeError(ValidationError):
    """Time values within a unit are not strictly increasing."""


class UnknownVariableError(ValidationError):
    """A study references a variable the dataset does not carry."""


class EmptySampleError(ValidationError):
    """No rows survive lag/horizon construction and listwise deletion."""


class NumericalError(PanelLPError):
    """Estimation failed for numerical reasons."""


class RankDeficientError(NumericalError):
    """The regressor design is (near-)collinear.

    ``columns`` names the columns implicated by the smallest singular
    direction of the cross-moment matrix.
    """

    def __init__(self, message: str, columns: tuple[str, ...] = ()):
        if columns:
            message += f"; suspect columns: {', '.join(columns)}"
        super().__init__(message)
        self.columns = columns


class NoWithinVariationError(NumericalError):
    """A variable is constant within every unit after demeaning."""


class ConvergenceError(NumericalError):
    """Alternating-projection demeaning did not converge within the sweep cap."""


class UnstableParametersError(ValidationError):
    """A simulation design implies a non-stationary transition matrix."""

    def __init__(self, message: str, spectral_radius: float | None = None):
        if spectral_radius is not None:
            message += f" (spectral radius {spectral_radius:.6f})"
        super().__init__(message)
        self.spectral_radius = spectral_radius
