"""Numerics for the viscous Hamilton-Jacobi equation u_t - Δu + |∇u|^q = 0.

Modules: ``scaling`` (exponents, constants, closed forms), ``profiles``
(self-similar profiles by shooting), ``solver`` (monotone evolution),
``estimates`` (audits against a priori bounds), ``trace`` (initial-trace
diagnostics) and ``cli``.
"""

from .errors import (
    AuditError,
    BracketError,
    ClassificationError,
    ConfigurationError,
    ConvergenceError,
    DivergenceError,
    DomainError,
    HJLabError,
    InvalidParameterError,
    RegimeError,
    ResolutionError,
)
from .scaling import ScalingParams, scaling_params

__version__ = "0.1.0"

__all__ = [
    "AuditError", "BracketError", "ClassificationError", "ConfigurationError", "ConvergenceError",
    "DivergenceError", "DomainError", "HJLabError", "InvalidParameterError", "RegimeError", "ResolutionError",
    "ScalingParams", "scaling_params", "__version__",
]
