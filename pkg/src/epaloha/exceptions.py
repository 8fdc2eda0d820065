from typing import List, Optional


class EpalohaError(Exception):
    """Base exception for all epaloha errors."""
    pass


class ConfigError(EpalohaError):
    """Base class for configuration problems."""
    pass


class MissingVariableError(ConfigError):
    """Raised when a required configuration key is missing."""
    pass


class ValidationError(ConfigError):
    """Raised when a configuration violates one or more constraints.

    Attributes:
        errors: every violated constraint, in field order, cross-field checks last.
    """

    def __init__(self, message: str, errors: Optional[List[str]] = None):
        super().__init__(message)
        self.errors = list(errors) if errors else [message]


class TypeCastingError(ConfigError):
    """Raised when a configuration value cannot be cast to the declared type."""
    pass


class FrozenInstanceError(ConfigError):
    """Raised when attempting to modify a frozen configuration instance."""
    pass


class DomainError(EpalohaError, ValueError):
    """Raised when an analytic formula is evaluated outside its domain."""
    pass


class OracleSizeError(EpalohaError):
    """Raised when a brute-force enumeration would exceed its size cap."""
    pass


class DecodeError(EpalohaError):
    """Raised when a feedback bit string cannot be decoded."""
    pass


class SimulationError(EpalohaError):
    """Raised when the protocol engine reaches a state the model rules out."""
    pass


class UsageError(EpalohaError):
    """Raised on command-line misuse (exit code 2)."""
    pass
