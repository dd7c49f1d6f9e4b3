"""Exception hierarchy shared by the hjlab modules."""


class HJLabError(Exception):
    """Base class for all hjlab errors."""


class InvalidParameterError(HJLabError, ValueError):
    """A parameter is outside the admissible set (q <= 0, N < 1, non-finite input, ...)."""


class RegimeError(HJLabError, ValueError):
    """The requested quantity or check is not defined for this exponent regime."""


class DomainError(HJLabError, ValueError):
    """An argument lies outside the domain of a function (t <= 0, r < 0, ...)."""


class BracketError(HJLabError):
    """Both ends of a shooting bracket classify to the same outcome."""


class ConvergenceError(HJLabError):
    """An iterative procedure hit its iteration cap."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ClassificationError(HJLabError):
    """A trajectory was classified to an outcome incompatible with the request."""


class ResolutionError(HJLabError, ValueError):
    """Initial data is not resolved by the grid."""


class ConfigurationError(HJLabError, ValueError):
    """Inconsistent run configuration (CFL violation, mismatched grids, ...)."""


class DivergenceError(HJLabError):
    """The discrete solution became non-finite."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class AuditError(HJLabError, ValueError):
    """A trajectory does not carry enough snapshots for the requested audit."""
