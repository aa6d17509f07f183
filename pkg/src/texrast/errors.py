"""Exception hierarchy shared across the toolkit.

Each class maps to a CLI exit code so scripted callers can distinguish
usage mistakes from broken inputs and numeric blow-ups.
"""

from __future__ import annotations


class TexrastError(Exception):
    """Base class; `exit_code` drives the CLI process status."""

    exit_code = 1


class UsageError(TexrastError):
    exit_code = 2


class DataError(TexrastError):
    """Broken or inconsistent input data (files, manifests, invariants)."""

    exit_code = 3

    def __init__(self, message: str, *, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{message} (field: {field})"
        super().__init__(message)


class ValidationError(DataError):
    """A domain-type invariant does not hold."""


class NumericError(TexrastError):
    """Non-finite values or numerically impossible requests."""

    exit_code = 4
