"""Exception hierarchy shared across the package."""


class QHybridError(Exception):
    """Base class for all package errors."""


class ValidationError(QHybridError, ValueError):
    """Raised when an argument violates a documented precondition."""


class CapacityError(ValidationError):
    """Raised when a register would exceed the simulator's qubit ceiling."""


class MalformedStateError(QHybridError):
    """Raised when a statevector cannot be decoded as a valid image."""


class DatasetError(QHybridError):
    """Raised for unreadable or structurally invalid datasets."""


class SplitError(DatasetError):
    """Raised when a dataset cannot be split as requested."""


class DivergedTrainingError(QHybridError, FloatingPointError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"training diverged (non-finite loss) at epoch {epoch}")
