"""
Logging configuration for gssc.

The console shows warnings and errors unless debug mode is on; the optional
``gssc.log`` file keeps INFO (or DEBUG) records from every ``gssc.*`` module,
including per-frame payload sizes and training losses.
"""

import logging
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.logging import RichHandler

PACKAGE_LOGGER = "gssc"
LOG_FILE = "gssc.log"
FILE_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s"


class GsscLogger:
    """Owns the handlers of the package logger for one CLI invocation."""

    def __init__(self,
                 log_dir: Optional[Path] = None,
                 debug_mode: bool = False,
                 console: Optional[Console] = None):
        self.log_dir = log_dir
        self.debug_mode = debug_mode
        # stdout carries command results; diagnostics go to stderr
        self.console = console or Console(stderr=True)
        self.logger = self._setup_logger()

    @property
    def level(self) -> int:
        return logging.DEBUG if self.debug_mode else logging.INFO

    def _console_handler(self) -> logging.Handler:
        handler = RichHandler(console=self.console, show_time=False, show_path=False,
                              markup=False, rich_tracebacks=self.debug_mode)
        handler.setLevel(logging.DEBUG if self.debug_mode else logging.WARNING)
        handler.setFormatter(logging.Formatter("%(message)s"))
        return handler

    def _file_handler(self, log_dir: Path) -> logging.Handler:
        log_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(log_dir / LOG_FILE, encoding="utf-8")
        handler.setLevel(self.level)
        handler.setFormatter(logging.Formatter(FILE_FORMAT))
        return handler

    def _setup_logger(self) -> logging.Logger:
        logger = logging.getLogger(PACKAGE_LOGGER)
        for handler in logger.handlers:
            handler.close()
        logger.handlers.clear()
        logger.setLevel(self.level)
        logger.propagate = False
        logger.addHandler(self._console_handler())

        if self.log_dir:
            try:
                logger.addHandler(self._file_handler(self.log_dir))
                logger.info(f"Logging to {self.log_dir / LOG_FILE}")
            except OSError as e:
                logger.warning(f"Could not set up file logging: {e}")
        return logger

    def get_logger(self) -> logging.Logger:
        return self.logger


def setup_logging(log_dir: Optional[Path] = None,
                  debug_mode: bool = False,
                  console: Optional[Console] = None) -> logging.Logger:
    """Set up gssc logging and return the package logger."""
    return GsscLogger(log_dir, debug_mode, console).get_logger()
