"""
Error handling utilities for CLI commands.

This module maps exception families to process exit codes and user-facing
messages, so every subcommand reports failures the same way.
"""

import functools
from typing import Any, Callable, Dict, Optional, ParamSpec, Type, TypeVar

from pydantic import ValidationError

from app.core.logging import get_logger
from app.services.lasso.exceptions import (
    DimensionMismatchError,
    EnumerationLimitError,
    IntegrationError,
    OracleError,
    ProblemValidationError,
    SingularSystemError,
)

logger = get_logger(__name__)

T = TypeVar("T")
P = ParamSpec("P")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_ORACLE = 4
EXIT_IO = 5
EXIT_INTERNAL = 70


class CommandError(Exception):
    """A CLI command failed; carries the exit code and the message to print."""

    def __init__(self, message: str, exit_code: int = EXIT_INTERNAL) -> None:
        super().__init__(message)
        self.message = message
        self.exit_code = exit_code


class ErrorMapping:
    """Centralized error mapping configuration."""

    # Input error mappings
    VALIDATION_ERRORS: Dict[Type[Exception], tuple[int, str]] = {
        ProblemValidationError: (EXIT_USAGE, "Invalid problem"),
        DimensionMismatchError: (EXIT_USAGE, "Dimension mismatch"),
        EnumerationLimitError: (EXIT_USAGE, "Instance too large for enumeration"),
        ValidationError: (EXIT_USAGE, "Invalid configuration"),
        ValueError: (EXIT_USAGE, "Invalid input value"),
    }

    # Flow and integrator error mappings
    NUMERICAL_ERRORS: Dict[Type[Exception], tuple[int, str]] = {
        SingularSystemError: (EXIT_NUMERICAL, "Linear solve failed"),
        IntegrationError: (EXIT_NUMERICAL, "Integration failed"),
    }

    ORACLE_ERRORS: Dict[Type[Exception], tuple[int, str]] = {
        OracleError: (EXIT_ORACLE, "Reference solver failed"),
    }

    # File operation error mappings
    FILE_ERRORS: Dict[Type[Exception], tuple[int, str]] = {
        FileNotFoundError: (EXIT_IO, "File not found"),
        PermissionError: (EXIT_IO, "Permission denied"),
        OSError: (EXIT_IO, "File system error"),
    }


def get_error_mapping(error: Exception) -> tuple[int, str]:
    """
    Get the exit code and message for an exception.

    Args:
        error: The exception to map

    Returns:
        Tuple of (exit_code, user_message)
    """
    error_type = type(error)

    for error_map in [
        ErrorMapping.VALIDATION_ERRORS,
        ErrorMapping.NUMERICAL_ERRORS,
        ErrorMapping.ORACLE_ERRORS,
        ErrorMapping.FILE_ERRORS,
    ]:
        for exception_type, (exit_code, message) in error_map.items():
            if issubclass(error_type, exception_type):
                return exit_code, message

    return EXIT_INTERNAL, "Internal error"


def log_error_with_context(
    error: Exception,
    operation: str,
    context: Optional[Dict[str, Any]] = None,
    log_level: str = "error",
) -> None:
    """
    Log an error with structured context information.

    Args:
        error: The exception to log
        operation: Description of the operation that failed
        context: Additional context information
        log_level: Log level (error, warning, info)
    """
    log_context: Dict[str, Any] = {
        "operation": operation,
        "error_type": type(error).__name__,
        "error_message": str(error),
    }
    flow_time = getattr(error, "flow_time", None)
    if flow_time is not None:
        log_context["flow_time"] = flow_time

    if context:
        log_context.update(context)

    log_message = f"{operation} failed"

    if log_level == "error":
        logger.error(log_message, exc_info=True, **log_context)
    elif log_level == "warning":
        logger.warning(log_message, **log_context)
    elif log_level == "info":
        logger.info(log_message, **log_context)


def to_command_error(
    error: Exception,
    operation: str,
    context: Optional[Dict[str, Any]] = None,
) -> CommandError:
    """Log an error and convert it to a CommandError with the mapped exit code."""
    exit_code, default_message = get_error_mapping(error)
    log_error_with_context(
        error,
        operation,
        context,
        log_level="error" if exit_code == EXIT_INTERNAL else "warning",
    )
    return CommandError(f"{default_message}: {error}", exit_code=exit_code)


def with_error_handling(
    operation: str,
    context: Optional[Dict[str, Any]] = None,
) -> Callable[[Callable[P, T]], Callable[P, T]]:
    """
    Decorator converting any failure of a command into a CommandError.

    Args:
        operation: Description of the operation being performed
        context: Additional context for logging

    Returns:
        Decorator function
    """

    def decorator(func: Callable[P, T]) -> Callable[P, T]:
        @functools.wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
            try:
                return func(*args, **kwargs)
            except CommandError:
                raise
            except Exception as e:
                raise to_command_error(e, operation, context) from e

        return wrapper

    return decorator
