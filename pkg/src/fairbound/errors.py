"""Exception hierarchy shared by the library and the CLI.

Commands map `ValidationError` to exit code 2 and `NumericalError` to exit
code 3 (see `fairbound.utils.cli.exit_on_error`).
"""
from typing import Optional, Tuple


class FairboundError(Exception):
    """Base class for all fairbound errors."""


class ValidationError(FairboundError, ValueError):
    """Bad input data, arguments or configuration."""


class DatasetError(ValidationError):
    """A record set or CSV file that does not match its declared schema."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        location = []
        if row is not None:
            location.append(f"row {row}")
        if column is not None:
            location.append(f"column '{column}'")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(FairboundError, ArithmeticError):
    """Degenerate probabilities, non-finite losses and similar failures."""


class OverlapError(NumericalError):
    """An attribute value (or outcome cell) has no support in some cell."""

    def __init__(self, message: str, cell: Optional[Tuple] = None):
        if cell is not None:
            message = f"{message} (cell {cell})"
        super().__init__(message)
        self.cell = cell


class SearchError(NumericalError):
    """The compatible-model search accepted no candidate."""
