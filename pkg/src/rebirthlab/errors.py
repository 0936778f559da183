"""Exception hierarchy shared across the package."""


class RebirthLabError(Exception):
    """Base class for every error raised by rebirthlab."""


class DomainError(RebirthLabError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class QuadratureError(RebirthLabError, ArithmeticError):
    """A numerical integral failed to reach the requested tolerance.

    The achieved value and error estimate are kept so callers can decide
    whether the result is still usable.
    """

    def __init__(self, message, value=None, error=None):
        super().__init__(message)
        self.value = value
        self.error = error


class NumericalFailure(RebirthLabError, ArithmeticError):
    """An ODE solve, simulation step or factorization went wrong."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegenerateCovarianceError(NumericalFailure):
    """Covariance matrix could not be factorized even after jitter escalation."""


class ConfigError(RebirthLabError, ValueError):
    """Invalid experiment configuration."""


class BundleFormatError(RebirthLabError, IOError):
    """A persisted path bundle is truncated, corrupted or of the wrong version."""
