# utils/logging_config.py
import logging
import logging.handlers
import os
import json
from datetime import datetime, timezone
from typing import Dict, Any, Optional
import traceback


_RESERVED_RECORD_KEYS = frozenset([
    'name', 'msg', 'args', 'levelname', 'levelno', 'pathname', 'filename',
    'module', 'lineno', 'funcName', 'created', 'msecs', 'relativeCreated',
    'thread', 'threadName', 'processName', 'process', 'getMessage', 'exc_info',
    'exc_text', 'stack_info', 'taskName', 'message',
])


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class JsonFormatter(logging.Formatter):
    """JSON formatter for structured logging"""

    def format(self, record):
        log_entry = {
            "timestamp": _utc_now(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        # Add extra fields if present
        if hasattr(record, 'event_type'):
            for key, value in record.__dict__.items():
                if key not in _RESERVED_RECORD_KEYS:
                    log_entry[key] = value

        return json.dumps(log_entry, default=str)


class SystemLogger:
    """Logger for sampling runs, inference calls and errors"""

    def __init__(self, name: str = "herdcrf.system"):
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.INFO)
        self._file_handler: Optional[logging.Handler] = None

        # Console handler on stderr; stdout is reserved for command output
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.WARNING)
        console_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        ))

        if not self.logger.handlers:
            self.logger.addHandler(console_handler)

    def enable_file_output(self, log_file: str, max_bytes: int = 10 * 1024 * 1024,
                           backup_count: int = 5):
        """Attach a rotating JSON file handler (idempotent)"""
        if self._file_handler is not None:
            return
        os.makedirs(os.path.dirname(log_file) or ".", exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file, maxBytes=max_bytes, backupCount=backup_count
        )
        file_handler.setFormatter(JsonFormatter())
        self.logger.addHandler(file_handler)
        self._file_handler = file_handler

    def log_run_execution(self, method: str, run_id: str,
                          execution_time: float, success: bool, error: Optional[str] = None):
        """Log one sampling run (divmbest or herding)"""
        level = logging.INFO if success else logging.ERROR
        self.logger.log(level, "run_execution", extra={
            "event_type": "run_execution",
            "method": method,
            "run_id": run_id,
            "execution_time_ms": round(execution_time * 1000, 2),
            "success": success,
            "error": error,
        })

    def log_inference(self, method: str, node_count: int, converged: bool, iterations: int):
        """Log a MAP inference call; non-converged calls are warnings"""
        level = logging.DEBUG if converged else logging.WARNING
        self.logger.log(level, "map_inference", extra={
            "event_type": "map_inference",
            "method": method,
            "node_count": node_count,
            "converged": converged,
            "iterations": iterations,
        })

    def log_validation_error(self, error: str, source: str):
        """Log rejected inputs"""
        self.logger.warning("validation_error", extra={
            "event_type": "validation_error",
            "error": error,
            "source_preview": source[:100] + "..." if len(source) > 100 else source,
        })

    def log_error(self, error: Exception, context: Dict[str, Any]):
        """Log errors with full context"""
        self.logger.error("system_error", extra={
            "event_type": "system_error",
            "error_type": type(error).__name__,
            "error_message": str(error),
            "traceback": traceback.format_exc(),
            "context": context,
        })


# Global logger instance
system_logger = SystemLogger()


def setup_logging(log_level: str = "INFO", log_dir: Optional[str] = None,
                  enable_file: bool = False):
    """Setup application-wide logging configuration"""

    level = getattr(logging, log_level.upper(), logging.INFO)
    logging.getLogger().setLevel(level)
    system_logger.logger.setLevel(level)

    # Disable noisy third-party loggers
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("numexpr").setLevel(logging.WARNING)

    if enable_file and log_dir:
        system_logger.enable_file_output(os.path.join(log_dir, "herdcrf.log"))

    system_logger.logger.info("logging_initialized", extra={
        "event_type": "system_startup",
        "log_level": log_level,
        "file_logging": bool(enable_file and log_dir),
    })
