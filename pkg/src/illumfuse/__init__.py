"""Illumination-aware infrared/visible image fusion."""

from .errors import (ArgumentError, CheckpointError, DatasetError, FormatError,
                     IllumFuseError, ShapeError)

__version__ = "0.1.0"

__all__ = ["ArgumentError", "CheckpointError", "DatasetError", "FormatError",
           "IllumFuseError", "ShapeError", "__version__"]
