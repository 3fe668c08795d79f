import time
from functools import wraps
from typing import Any, Callable, TypeVar

from app.core.logging import get_logger

F = TypeVar("F", bound=Callable[..., Any])
logger = get_logger(__name__)


def timing_decorator(func: F) -> F:
    """
    A decorator that logs the execution time of a function.
    """

    @wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:  # noqa: ANN401
        start_time = time.monotonic()
        try:
            return func(*args, **kwargs)
        finally:
            total_time = time.monotonic() - start_time
            logger.info(
                "Performance",
                function=func.__name__,
                seconds=round(total_time, 4),
            )

    return wrapper  # type: ignore[return-value]
