"""Batch image embedding extraction writing GEOB1 containers."""

from .errors import (
    BadMagic,
    DatasetUnavailable,
    IoError,
    ModelUnavailable,
    NonFiniteEntry,
    TruncatedFile,
    VfmError,
)
from .extract import ExtractJob, extract
from .geob import verify_container, write_container
from .models import MODELS, load_model

__version__ = "0.1.0"

__all__ = [
    "BadMagic",
    "DatasetUnavailable",
    "ExtractJob",
    "IoError",
    "MODELS",
    "ModelUnavailable",
    "NonFiniteEntry",
    "TruncatedFile",
    "VfmError",
    "extract",
    "load_model",
    "verify_container",
    "write_container",
    "__version__",
]
