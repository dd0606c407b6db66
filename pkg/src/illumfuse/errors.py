"""Exception types shared across the package."""


class IllumFuseError(Exception):
    """Base class for all package errors."""


class ShapeError(IllumFuseError, ValueError):
    pass


class FormatError(IllumFuseError, ValueError):
    """Raised when an image file cannot be decoded."""


class ArgumentError(IllumFuseError, ValueError):
    pass


class DatasetError(IllumFuseError):
    """Raised for missing, unmatched or inconsistent image pairs."""


class CheckpointError(IllumFuseError):
    """Raised when a checkpoint is missing, corrupt, or of the wrong kind."""
