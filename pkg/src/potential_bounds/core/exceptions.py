"""
Custom exceptions for the potential-bounds laboratory.

This module defines the exception hierarchy used throughout the package
to provide clear error handling and machine-readable failure details.
Bound conditions and solver statuses are reported as data; exceptions are
reserved for invalid inputs and broken numerical contracts.
"""

from typing import Any, Dict, Optional


class PotentialBoundsError(Exception):
    """Base exception for all laboratory errors."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        super().__init__(message)
        self.error_code = error_code
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for JSON reports."""
        return {
            "error": self.error_code or self.__class__.__name__,
            "message": str(self),
            "details": self.details,
        }


class ConfigurationError(PotentialBoundsError):
    """Raised when a run configuration is invalid or unreadable."""
    pass


class ValidationError(PotentialBoundsError):
    """Raised when a domain object violates a construction invariant."""
    pass


class DomainError(ValidationError):
    """Raised when an argument lies outside an operation's domain."""
    pass


class NecessaryConditionError(DomainError):
    """Raised when F^{-1} is asked for a value at or beyond F(+inf)."""
    pass


class ConvergenceError(PotentialBoundsError):
    """Raised when a numerical procedure fails its own consistency contract."""
    pass


class MonotonicityError(ConvergenceError):
    """Raised when a monotone iteration takes a step in the wrong direction."""
    pass


class PrincipleViolationError(PotentialBoundsError):
    """Raised when a caller asks for hard failure on a violated principle check."""
    pass
