"""Exception hierarchy shared across the toolkit.

Everything user-facing derives from :class:`LorapropError` so the CLI can
map domain failures to exit code 1 while genuine bugs still surface as
ordinary tracebacks.
"""

from __future__ import annotations


class LorapropError(ValueError):
    """Base class for all domain errors raised by this package."""


class InvalidConfigError(LorapropError):
    """A configuration value or domain type violates its invariants."""


class InvalidDataError(LorapropError):
    """Input data is unusable: wrong shape, empty, constant, malformed."""


class FitError(LorapropError):
    """The estimation problem is ill-posed (underdetermined or rank-deficient)."""
