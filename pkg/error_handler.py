"""
Error Handling and Logging System for the ISAC Array Partitioning Toolkit
Exception hierarchy, rotating log files, run health tracking and operation timing.
"""

import logging
import os
import time
import traceback
from datetime import datetime
from functools import wraps
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Callable, Dict, Optional

import colorlog
from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class ISACError(Exception):
    """Root of every error raised by the toolkit."""


class ConfigurationError(ISACError):
    """Malformed or out-of-range scenario/experiment configuration."""

    def __init__(self, message: str, line_number: Optional[int] = None, key: Optional[str] = None):
        self.line_number = line_number
        self.key = key
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class InvalidPartitionError(ISACError, ValueError):
    """Partition vector violating the binary or transmit-count rules."""


class DegenerateGeometryError(ISACError):
    """The beamwidth broadening denominator vanished."""


class InfeasibleDesignError(ISACError):
    """SINR targets cannot be met under the power budget, or the state lost feasibility."""


class SolverError(ISACError):
    """Convex solver input was malformed/non-convex or the backend failed."""


class ISACErrorHandler:
    """
    Central error bookkeeping and logging for experiment runs.
    """

    def __init__(self, log_dir: Optional[str] = None, log_level: Optional[str] = None,
                 log_to_file: Optional[bool] = None):
        self.log_dir = Path(log_dir or os.getenv('ISAC_LOG_DIR', 'logs'))
        self.log_level = (log_level or os.getenv('ISAC_LOG_LEVEL', 'INFO')).upper()
        if log_to_file is None:
            log_to_file = os.getenv('ISAC_LOG_TO_FILE', '1').lower() not in ('0', 'false', 'no')
        self.log_to_file = log_to_file

        self.error_counts: Dict[str, Dict[str, Any]] = {}
        self.last_errors: Dict[str, str] = {}
        self.run_status = {"status": "healthy", "last_check": datetime.now()}

        self._setup_logging()

    def _setup_logging(self):
        """Attach console and rotating file handlers to the toolkit loggers."""
        log_files = {
            "main": "main.log",
            "errors": "errors.log",
            "performance": "performance.log"
        }
        level = getattr(logging, self.log_level, logging.INFO)

        if self.log_to_file:
            self.log_dir.mkdir(parents=True, exist_ok=True)

        # Library modules log under "modules.*"; route them through the same console handler.
        root_logger = logging.getLogger("modules")
        root_logger.setLevel(level)
        if not root_logger.handlers:
            root_logger.addHandler(self._console_handler(level))

        self.loggers: Dict[str, logging.Logger] = {}
        for log_type, filename in log_files.items():
            logger = logging.getLogger(f"isac.{log_type}")
            logger.setLevel(level)
            logger.propagate = False

            if not logger.handlers:
                logger.addHandler(self._console_handler(level if log_type != "performance" else logging.WARNING))
                if self.log_to_file:
                    file_handler = RotatingFileHandler(
                        self.log_dir / filename,
                        maxBytes=10 * 1024 * 1024,
                        backupCount=5
                    )
                    file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
                    logger.addHandler(file_handler)

            self.loggers[log_type] = logger

        self.logger = self.loggers["main"]

    @staticmethod
    def _console_handler(level: int) -> logging.Handler:
        handler = colorlog.StreamHandler()
        handler.setLevel(level)
        handler.setFormatter(colorlog.ColoredFormatter(
            '%(log_color)s' + LOG_FORMAT,
            log_colors={
                'DEBUG': 'cyan',
                'INFO': 'green',
                'WARNING': 'yellow',
                'ERROR': 'red',
                'CRITICAL': 'bold_red'
            }
        ))
        return handler

    def handle_error(self, error: Exception, context: str = "", operation: str = "") -> Dict:
        """Record an error, log it with its context and return a standard response."""
        error_key = f"{context}_{type(error).__name__}"
        current_time = datetime.now()

        if error_key not in self.error_counts:
            self.error_counts[error_key] = {"count": 0, "first_seen": current_time, "last_seen": current_time}
        self.error_counts[error_key]["count"] += 1
        self.error_counts[error_key]["last_seen"] = current_time
        self.last_errors[error_key] = str(error)

        error_msg = f"Error in {context} - {operation}: {error}"
        if not isinstance(error, ISACError):
            error_msg += f"\nTraceback: {traceback.format_exc()}"

        # Infeasible trials do not degrade run health.
        if isinstance(error, InfeasibleDesignError):
            self.loggers["errors"].warning(error_msg)
        else:
            self.loggers["errors"].error(error_msg)

        self._update_run_status(error)
        return self._get_error_response(error, context)

    def _update_run_status(self, error: Exception):
        total_errors = sum(info["count"] for info in self.error_counts.values())
        faults = sum(
            info["count"] for key, info in self.error_counts.items()
            if not key.endswith(InfeasibleDesignError.__name__)
        )

        if isinstance(error, (MemoryError, SystemError, OSError)):
            self.run_status["status"] = "critical"
        elif faults > 0 and self.run_status["status"] != "critical":
            self.run_status["status"] = "degraded"

        self.run_status["last_check"] = datetime.now()
        self.run_status["total_errors"] = total_errors

    def _get_error_response(self, error: Exception, context: str) -> Dict:
        return {
            "success": False,
            "error_type": type(error).__name__,
            "error_message": str(error),
            "context": context,
            "timestamp": datetime.now().isoformat()
        }

    def get_run_health(self) -> Dict:
        """Get current run health status."""
        return {
            "status": self.run_status["status"],
            "last_check": self.run_status["last_check"].isoformat(),
            "total_errors": self.run_status.get("total_errors", 0),
            "error_summary": {
                key: {
                    "count": info["count"],
                    "last_seen": info["last_seen"].isoformat(),
                    "last_error": self.last_errors.get(key, "")
                }
                for key, info in self.error_counts.items()
            }
        }

    def reset_error_counts(self):
        """Reset error tracking between experiments."""
        self.error_counts.clear()
        self.last_errors.clear()
        self.run_status["status"] = "healthy"
        self.logger.info("Error counts reset")


_default_handler: Optional[ISACErrorHandler] = None


def get_error_handler() -> ISACErrorHandler:
    """Process-wide handler, built on first use."""
    global _default_handler
    if _default_handler is None:
        _default_handler = ISACErrorHandler()
    return _default_handler


def log_operation(operation_name: str):
    """Decorator for timing and error logging of operations."""
    def decorator(func: Callable) -> Callable:
        @wraps(func)
        def wrapper(*args, **kwargs) -> Any:
            error_handler = getattr(args[0], 'error_handler', None) if args else None
            if not isinstance(error_handler, ISACErrorHandler):
                error_handler = get_error_handler()
            start_time = time.time()

            try:
                error_handler.loggers["performance"].debug(f"Starting {operation_name}")
                result = func(*args, **kwargs)
                duration = time.time() - start_time
                error_handler.loggers["performance"].info(
                    f"{operation_name} completed in {duration:.2f}s"
                )
                return result

            except Exception as e:
                duration = time.time() - start_time
                error_handler.handle_error(e, operation_name, func.__name__)
                error_handler.loggers["performance"].info(
                    f"{operation_name} failed after {duration:.2f}s: {e}"
                )
                raise

        return wrapper
    return decorator
