"""Cross-cutting components: errors and logging.

``gssc.core.store`` is imported directly; it depends on the geometry and
render packages, which themselves import from here.
"""

from .errors import (
    BdRateError,
    CheckpointMismatchError,
    ConfigurationError,
    CorruptStreamError,
    DatasetError,
    DimensionError,
    FormatError,
    GsscError,
    NumericError,
    StaleContextError,
    TruncatedStreamError,
    ValidationError,
    handle_error,
    safe_execute,
)
from .logging import setup_logging

__all__ = [
    "BdRateError",
    "CheckpointMismatchError",
    "ConfigurationError",
    "CorruptStreamError",
    "DatasetError",
    "DimensionError",
    "FormatError",
    "GsscError",
    "NumericError",
    "StaleContextError",
    "TruncatedStreamError",
    "ValidationError",
    "handle_error",
    "safe_execute",
    "setup_logging",
]
