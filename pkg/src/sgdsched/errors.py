"""Typed errors shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies rather than a bare ValueError.
"""

from __future__ import annotations


class ConfigurationError(ValueError):
    """A problem, scheduler, or experiment configuration is invalid."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a closed form."""


class DivergenceError(RuntimeError):
    """An optimization run produced a non-finite or exploding iterate.

    Carries the trace accumulated up to the failure so callers can flush
    partial results before aborting.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class PrecisionUnreachableError(RuntimeError):
    """No run in a sweep reached the requested gradient-norm precision."""
