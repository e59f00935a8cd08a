"""Exception types shared across the package."""

from __future__ import annotations


class LindrandError(Exception):
    """Base class for all package errors."""


class PauliParseError(LindrandError, ValueError):
    """A Pauli label could not be parsed.

    Attributes:
        position: index of the offending character in the label, or ``None``
            when the failure is about the label as a whole (length mismatch).
    """

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class CapacityError(LindrandError, ValueError):
    """A dense construction was requested above the dense qubit limit."""


class ModelError(LindrandError, ValueError):
    """The Lindblad model document or terms are invalid."""


class ConfigurationError(LindrandError, ValueError):
    """Run parameters violate a precondition (e.g. ``r < t * ||L||``)."""


class DomainError(LindrandError, ValueError):
    """A scalar parameter lies outside the domain of a construction."""


class ConsistencyError(LindrandError, RuntimeError):
    """An internal numerical identity failed beyond tolerance."""


class StateError(LindrandError, ValueError):
    """A density matrix is invalid or has been numerically corrupted."""
