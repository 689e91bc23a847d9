"""
Timing utilities.
"""
import time
from functools import wraps
from typing import Callable

from .logging import get_logger


logger = get_logger("Performance")


def measure_time(func: Callable) -> Callable:
    """Decorator to log function execution time at DEBUG level."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        start_time = time.perf_counter()
        result = func(*args, **kwargs)
        elapsed_time = time.perf_counter() - start_time
        logger.debug(f"{func.__name__} took {elapsed_time:.2f} seconds")
        return result
    return wrapper
