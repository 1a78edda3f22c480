"""Exception types shared across the package."""


class WildfireError(Exception):
    """Base class for every error this package raises deliberately."""


class DimensionError(WildfireError):
    """Operand ranks or extents do not line up (bad matmul dims, rank mismatch, ...)."""


class ShapeError(DimensionError):
    """A tensor has the right rank but wrong extents for the operation."""


class ConfigError(WildfireError):
    """An experiment or model configuration is malformed or inconsistent."""


class ValidationError(WildfireError):
    """An input value fails a documented precondition."""


class DatasetError(WildfireError):
    """A dataset root, manifest, or record is unusable."""


class DecodeError(DatasetError):
    """An image byte stream cannot be decoded.

    ``offset`` is the byte position at which decoding failed, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class FormatError(WildfireError):
    """A serialized artifact (checkpoint, fixture) violates its format.

    ``offset`` is the byte position of the violation, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class TransferError(WildfireError):
    """Parameters cannot be transferred into a model (name/shape mismatch)."""


class TrainingError(WildfireError):
    """Training became unusable (non-finite loss, empty split, ...)."""


class StorageError(WildfireError):
    """An artifact could not be written or read back."""


class StateError(WildfireError):
    """An operation was called in the wrong order (backward before forward, ...)."""


class InconsistencyError(WildfireError):
    """Reported metrics admit no (or no unique) integer confusion matrix."""


class ReportError(WildfireError):
    """Run artifacts required by a report are missing or malformed."""
