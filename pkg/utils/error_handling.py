"""utils/error_handling.py

Centralized error handling for the command-line entry points: maps the
library's exception hierarchy onto the documented exit-code contract so that
every command reports failures the same way.
"""
from __future__ import annotations

import functools
import json
import logging
import sys
from typing import Callable

from utils.validation import CapacityError, InstanceParseError, ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE_ERROR = 1
EXIT_VALIDATION_ERROR = 2
EXIT_CAPACITY_ERROR = 3
EXIT_ALL_RUNS_FAILED = 4


def exit_code_for(exc: BaseException) -> int:
    """Return the CLI exit code for an exception raised by a command."""
    if isinstance(exc, (InstanceParseError, json.JSONDecodeError, OSError)):
        return EXIT_PARSE_ERROR
    if isinstance(exc, CapacityError):
        return EXIT_CAPACITY_ERROR
    if isinstance(exc, ValidationError):
        return EXIT_VALIDATION_ERROR
    return EXIT_VALIDATION_ERROR


def handle_exceptions(rethrow: bool = False):
    """Decorator to centrally handle exceptions for top-level commands.

    - Logs the full traceback at DEBUG and a one-line diagnostic on stderr.
    - Converts the exception into the exit code contract.
    - Optionally re-raises the exception for upstream handling (when used in tests).
    """

    def decorator(func: Callable[..., int]):
        @functools.wraps(func)
        def wrapper(*args, **kwargs) -> int:
            try:
                return func(*args, **kwargs)
            except Exception as exc:
                logger.debug("Unhandled exception in %s", func.__name__, exc_info=True)
                if rethrow:
                    raise
                code = exit_code_for(exc)
                print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
                return code

        return wrapper

    return decorator
