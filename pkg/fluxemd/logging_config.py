"""
Structured logging setup for FLUXEMD.

Log records go to stderr as JSON lines so that stdout stays reserved for
key=value summaries and tables.
"""
import logging
import sys
from typing import Optional, TextIO

from pythonjsonlogger import jsonlogger

from .config import LOG_LEVEL

LOGGER_NAME = "fluxemd"
LOG_FORMAT = "%(asctime)s %(name)s %(levelname)s %(message)s"


def configure_logging(level: Optional[str] = None, stream: Optional[TextIO] = None) -> logging.Logger:
    """
    Install a single JSON handler on the package logger.

    Args:
        level: Log level name; falls back to LOG_LEVEL from the environment.
        stream: Target stream, stderr by default.

    Returns:
        The configured package logger.
    """
    handler = logging.StreamHandler(stream if stream is not None else sys.stderr)
    handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))

    logger = logging.getLogger(LOGGER_NAME)
    for old in list(logger.handlers):
        logger.removeHandler(old)
    logger.addHandler(handler)
    logger.setLevel((level or LOG_LEVEL).upper())
    logger.propagate = False
    return logger
