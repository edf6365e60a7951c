"""
Core components: exception hierarchy, structured logging and codecs.

The configuration layer lives in ``core.config`` and is imported on demand;
it depends on the domain modules.
"""

from .exceptions import (
    ConfigurationError,
    ConvergenceError,
    DomainError,
    MonotonicityError,
    NecessaryConditionError,
    PotentialBoundsError,
    PrincipleViolationError,
    ValidationError,
)
from .log import configure_logging, get_logger

__all__ = [
    "PotentialBoundsError",
    "ConfigurationError",
    "ValidationError",
    "DomainError",
    "NecessaryConditionError",
    "ConvergenceError",
    "MonotonicityError",
    "PrincipleViolationError",
    "configure_logging",
    "get_logger",
]
