"""Exception types shared across the package."""

from __future__ import annotations


class M2dfError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(M2dfError):
    """A line of an input file could not be parsed."""

    def __init__(self, path: str, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class ValidationError(M2dfError):
    """Input data violates a structural constraint (bad id, bad field, missing score)."""


class DomainError(M2dfError):
    """An argument is outside the mathematical domain of an operation."""


class DegenerateNormalizationError(DomainError):
    """Similarity normalization is undefined because the maximum is not positive."""


class StateError(M2dfError):
    """An operation was called before the scheduler reached the required state."""
