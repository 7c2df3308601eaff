"""
Centralized logging configuration for the network-formation toolkit.
Every module logs through a child of the 'netform' logger.
"""
import io
import logging
import os
import sys
import time
from contextlib import contextmanager
from typing import Iterator, Optional, TextIO

# Define logger levels
DEBUG = logging.DEBUG
INFO = logging.INFO
WARNING = logging.WARNING
ERROR = logging.ERROR
CRITICAL = logging.CRITICAL

ROOT_NAME = 'netform'
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(name)s - %(message)s'

# Create the main application logger
logger = logging.getLogger(ROOT_NAME)

def setup_logging(level: int = logging.INFO,
                  log_file: Optional[str] = None,
                  file_handler_level: int = logging.DEBUG) -> None:
    """
    Configure the application logger with console and optional file output.

    Args:
        level: Logging level for console output
        log_file: Optional path to log file
        file_handler_level: Logging level for file output
    """
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    # Base level is the lowest of console/file so both handlers see their records
    logger.setLevel(min(level, file_handler_level if log_file else level))

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(console_handler)

    if log_file:
        log_dir = os.path.dirname(log_file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)

        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setLevel(file_handler_level)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(file_handler)

def get_logger(name: Optional[str] = None) -> logging.Logger:
    """
    Get the application logger or one of its children.

    Args:
        name: Module name; 'components.simulator' becomes 'netform.simulator'

    Returns:
        The configured logger instance
    """
    if not name:
        return logger
    short = name.rsplit('.', 1)[-1]
    return logger.getChild(short)

@contextmanager
def log_stage(name: str, target_logger: Optional[logging.Logger] = None) -> Iterator[None]:
    """Log the start of a pipeline stage and its wall-clock duration."""
    log = target_logger or logger
    log.info(f'{name}: started')
    start = time.perf_counter()
    try:
        yield
    except Exception:
        log.warning(f'{name}: failed after {time.perf_counter() - start:.1f}s')
        raise
    log.info(f'{name}: finished in {time.perf_counter() - start:.1f}s')

class LogCapture:
    """Context manager to capture log output to a string buffer."""

    def __init__(self, target_logger: Optional[logging.Logger] = None, level: int = logging.DEBUG):
        """
        Initialize log capture.

        Args:
            target_logger: Logger to capture (defaults to application logger)
            level: Minimum log level to capture
        """
        self.logger = target_logger or logger
        self.level = level
        self.string_io: Optional[io.StringIO] = None
        self.string_handler: Optional[logging.Handler] = None
        self.previous_level: Optional[int] = None

    def __enter__(self) -> TextIO:
        self.string_io = io.StringIO()
        self.string_handler = logging.StreamHandler(self.string_io)
        self.string_handler.setLevel(self.level)
        self.string_handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))

        self.previous_level = self.logger.level
        if self.level < self.previous_level:
            self.logger.setLevel(self.level)

        self.logger.addHandler(self.string_handler)
        return self.string_io

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.string_handler:
            self.logger.removeHandler(self.string_handler)
        if self.previous_level is not None and self.logger.level != self.previous_level:
            self.logger.setLevel(self.previous_level)

# Initialize with default settings
setup_logging()
