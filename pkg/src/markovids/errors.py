"""Exception hierarchy shared by the library and the CLI exit-code mapping."""

from __future__ import annotations


class MarkovIDSError(Exception):
    """Base class for all library errors."""


class ValidationError(MarkovIDSError, ValueError):
    """Malformed input: non-stochastic matrix, bad alphabet, unknown field."""


class NotErgodicError(MarkovIDSError, ValueError):
    """The Markov chain is reducible or periodic where ergodicity is required."""


class InfeasibleParametersError(MarkovIDSError, ValueError):
    """Two-state parameters resolve to probabilities outside [0, 1]."""


class GuardError(MarkovIDSError):
    """An exact enumeration would exceed the configured memory guard."""

    def __init__(self, message: str, estimate: int | None = None, limit: int | None = None):
        super().__init__(message)
        self.estimate = estimate
        self.limit = limit


class InputDependentSideInfoError(MarkovIDSError):
    """Block side information (final state, output length) depends on the input.

    The decomposition into conditioned DMCs is invalid in that case; use
    ``capacity_bounds.joint_upper_bound`` instead.
    """


class ConvergenceError(MarkovIDSError):
    """A capacity solver hit its iteration limit before closing the bracket."""

    def __init__(self, message: str, lower: float, upper: float, iterations: int):
        super().__init__(message)
        self.lower = lower
        self.upper = upper
        self.iterations = iterations


class CertificateError(MarkovIDSError):
    """A proved inequality failed numerically beyond its slack."""
