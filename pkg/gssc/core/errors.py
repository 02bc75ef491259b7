"""
gssc custom exceptions and error handling.
"""

from typing import Any, Optional


class GsscError(Exception):
    """Base exception for all gssc errors."""

    exit_code = 1

    def __init__(self, message: str, details: Optional[Any] = None):
        super().__init__(message)
        self.message = message
        self.details = details


class DimensionError(GsscError):
    """Tensor shape or rank mismatch."""

    exit_code = 2


class ConfigurationError(GsscError):
    """Errors related to configuration."""

    exit_code = 2


class ValidationError(GsscError):
    """Errors related to data validation."""

    exit_code = 2


class FormatError(GsscError):
    """Malformed container, tensor or camera file."""

    exit_code = 2


class CorruptStreamError(FormatError):
    """Payload lengths or field values do not describe a valid stream."""


class TruncatedStreamError(FormatError):
    """The stream ended before decoding finished."""


class CheckpointMismatchError(GsscError):
    """Decoder parameters differ from the ones the stream was encoded with."""

    exit_code = 3


class StaleContextError(GsscError):
    """Cross-view exchange attempted with features from different frames."""


class NumericError(GsscError):
    """NaN/Inf values or a diverging optimisation."""

    exit_code = 4


class BdRateError(NumericError):
    """BD-rate inputs that cannot be integrated."""


class DatasetError(GsscError):
    """Errors related to on-disk sequences."""

    exit_code = 2


def handle_error(logger, error: Exception, context: str = "") -> None:
    """Handle and log errors consistently."""
    error_msg = f"{context}: {str(error)}" if context else str(error)

    if isinstance(error, GsscError):
        logger.error(f"gssc error - {error_msg}")
        if error.details:
            logger.debug(f"Error details: {error.details}")
    else:
        logger.error(f"Unexpected error - {error_msg}")
        logger.exception("Full traceback:")


def safe_execute(func, logger, context: str = "", default_return=None):
    """Safely execute a function with error handling."""
    try:
        return func()
    except Exception as e:
        handle_error(logger, e, context)
        return default_return
