# Structured logging module for ptde
# Wraps stdlib logging so every record carries a metadata dict, and maps PTDE_LOG onto levels

import functools
import logging
import os
import sys
from typing import Any, Callable, Dict, Optional

ROOT_LOGGER_NAME = "ptde"
DEFAULT_LOGGER = logging.getLogger(ROOT_LOGGER_NAME)

# PTDE_LOG values and the levels they select
LOG_LEVELS = {
    "quiet": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class StructuredLogger:
    """
    Structured logger that attaches metadata to every record.

    Metadata given at construction is merged under the per-call metadata, so a
    learner can tag all of its records with e.g. the variant and seed once.
    """

    def __init__(
        self,
        logger: Optional[logging.Logger] = None,
        default_metadata: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize a structured logger.

        Args:
            logger: Logger instance to use (defaults to the ptde root logger)
            default_metadata: Metadata included with all log messages
        """
        self.logger = logger or DEFAULT_LOGGER
        self.default_metadata = default_metadata or {}

    def bind(self, **metadata: Any) -> "StructuredLogger":
        """Return a logger on the same channel with extra default metadata."""
        return StructuredLogger(self.logger, {**self.default_metadata, **metadata})

    def _log(self, level: int, msg: str, metadata: Optional[Dict[str, Any]] = None, **kwargs) -> None:
        combined = {**self.default_metadata}
        if metadata:
            combined.update(metadata)

        extra = kwargs.pop("extra", {})
        extra["metadata"] = combined
        self.logger.log(level, msg, extra=extra, **kwargs)

    def debug(self, msg: str, metadata: Optional[Dict[str, Any]] = None, **kwargs) -> None:
        """Log a debug message with metadata."""
        self._log(logging.DEBUG, msg, metadata, **kwargs)

    def info(self, msg: str, metadata: Optional[Dict[str, Any]] = None, **kwargs) -> None:
        """Log an info message with metadata."""
        self._log(logging.INFO, msg, metadata, **kwargs)

    def warning(self, msg: str, metadata: Optional[Dict[str, Any]] = None, **kwargs) -> None:
        """Log a warning message with metadata."""
        self._log(logging.WARNING, msg, metadata, **kwargs)

    def error(self, msg: str, metadata: Optional[Dict[str, Any]] = None, **kwargs) -> None:
        """Log an error message with metadata."""
        self._log(logging.ERROR, msg, metadata, **kwargs)

    def critical(self, msg: str, metadata: Optional[Dict[str, Any]] = None, **kwargs) -> None:
        """Log a critical message with metadata."""
        self._log(logging.CRITICAL, msg, metadata, **kwargs)


class MetadataFormatter(logging.Formatter):
    """Renders the record's metadata as trailing key=value pairs."""

    def format(self, record: logging.LogRecord) -> str:
        line = super().format(record)
        metadata = getattr(record, "metadata", None)
        if metadata:
            pairs = " ".join(f"{key}={value}" for key, value in metadata.items())
            line = f"{line} | {pairs}"
        return line


def get_logger(name: Optional[str] = None, default_metadata: Optional[Dict[str, Any]] = None) -> StructuredLogger:
    """
    Get a structured logger.

    Args:
        name: Logger name (appended to the 'ptde' namespace)
        default_metadata: Default metadata to include with all log messages

    Returns:
        StructuredLogger instance
    """
    logger_name = f"{ROOT_LOGGER_NAME}.{name}" if name else ROOT_LOGGER_NAME
    return StructuredLogger(logger=logging.getLogger(logger_name), default_metadata=default_metadata)


def configure_logging(level: Optional[str] = None, stream=None) -> int:
    """
    Configure the ptde logger from an explicit level name or the PTDE_LOG variable.

    Args:
        level: One of 'quiet', 'info', 'debug'; read from PTDE_LOG when omitted
        stream: Output stream for the handler (defaults to stderr)

    Returns:
        The numeric logging level that was applied
    """
    name = (level or os.environ.get("PTDE_LOG", "info")).strip().lower()
    unknown = name not in LOG_LEVELS
    numeric = LOG_LEVELS.get(name, logging.INFO)

    root = logging.getLogger(ROOT_LOGGER_NAME)
    root.setLevel(numeric)
    for handler in list(root.handlers):
        if getattr(handler, "_ptde_handler", False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(MetadataFormatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    handler._ptde_handler = True
    root.addHandler(handler)

    if unknown:
        get_logger().warning(f"Unknown PTDE_LOG value {name!r}, using 'info'", metadata={"requested": name})
    return numeric


def with_logging(
    func: Optional[Callable] = None,
    *,
    logger: Optional[StructuredLogger] = None,
    level: int = logging.DEBUG,
) -> Callable:
    """
    Decorator that logs calls to a function and any exception it raises.

    Args:
        func: Function to decorate
        logger: Logger to use (defaults to one named after the function's module)
        level: Level of the call record
    """

    def decorator(func: Callable) -> Callable:
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            log = logger or get_logger(func.__module__.removeprefix(f"{ROOT_LOGGER_NAME}."))
            log._log(level, f"Calling {func.__name__}", metadata={"function": func.__name__})
            try:
                return func(*args, **kwargs)
            except Exception as e:
                log.error(
                    f"Exception in {func.__name__}: {e}",
                    metadata={
                        "function": func.__name__,
                        "exception": str(e),
                        "exception_type": type(e).__name__,
                    },
                )
                raise

        return wrapper

    if func is None:
        return decorator
    return decorator(func)
