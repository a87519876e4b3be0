"""Helpers shared by the command modules."""
import logging
from contextlib import contextmanager
from typing import Iterator, List, Optional, Tuple

import typer

from ..errors import NumericalError, ValidationError

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

LOG_LEVELS = (logging.WARNING, logging.INFO, logging.DEBUG)


def configure_logging(verbose: int):
    level = LOG_LEVELS[min(max(verbose, 0), len(LOG_LEVELS) - 1)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", force=True)


@contextmanager
def exit_on_error() -> Iterator[None]:
    """Turn library errors into CLI exit codes."""
    try:
        yield
    except ValidationError as exc:
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(code=EXIT_VALIDATION)
    except NumericalError as exc:
        typer.echo(f"Numerical error: {exc}", err=True)
        raise typer.Exit(code=EXIT_NUMERICAL)
    except OSError as exc:
        typer.echo(f"Error: {exc}", err=True)
        raise typer.Exit(code=EXIT_VALIDATION)


def parse_floats(text: Optional[str], name: str) -> Optional[List[float]]:
    """'1.2, 2.0,5' -> [1.2, 2.0, 5.0]."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(part) for part in str(text).split(",") if part.strip()]
    except ValueError:
        raise ValidationError(f"{name} must be a comma-separated list of numbers, got '{text}'") from None


def parse_ints(text: Optional[str], name: str) -> Optional[Tuple[int, ...]]:
    values = parse_floats(text, name)
    if values is None:
        return None
    if any(v != int(v) for v in values):
        raise ValidationError(f"{name} must hold integers, got '{text}'")
    return tuple(int(v) for v in values)


def parse_target(value: Optional[str]):
    """Outcome target: an integer category or 'expectation'."""
    if value is None or value == "expectation":
        return value
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"target y must be an integer category or 'expectation', got '{value}'") from None
