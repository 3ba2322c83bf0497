"""Exception types shared across the package."""


class QPError(Exception):
    """Base class for all package errors."""


class ConfigurationError(QPError, ValueError):
    """Invalid parameters or configuration document."""


class ResonanceError(QPError, ValueError):
    """A closed-form expression hit a resonant (near-zero) denominator."""


class ResonanceWarning(UserWarning):
    """Forcing frequencies satisfy a low-order integer relation."""


class NonFiniteStateError(QPError, FloatingPointError):
    """Integration produced a non-finite state."""

    def __init__(self, step_index, message=None):
        self.step_index = step_index
        super().__init__(message or f"non-finite state produced at step {step_index}")


class InsufficientCheckpointsError(QPError, ValueError):
    pass


class EscapedTrajectoryError(QPError, ValueError):
    """Operation requires a converging (non-escaped) trajectory."""


class DomainMismatchError(QPError, ValueError):
    pass


class FieldFileError(QPError, IOError):
    """Malformed or corrupted field / partition file."""
