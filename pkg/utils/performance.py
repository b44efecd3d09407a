"""
Timing helpers for icpgen.
Wall-clock measurement for training epochs and for the expensive evaluation calls.
"""

import functools
import time
from typing import Callable, Optional

from utils.logger_config import get_logger

logger = get_logger(__name__)


class Stopwatch:
    """
    Context manager measuring elapsed wall-clock seconds.

    Example:
        with Stopwatch() as watch:
            run_epoch()
        seconds = watch.elapsed
    """

    def __init__(self):
        self._start: Optional[float] = None
        self._stop: Optional[float] = None

    def __enter__(self) -> "Stopwatch":
        self._start = time.perf_counter()
        self._stop = None
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        self._stop = time.perf_counter()

    @property
    def elapsed(self) -> float:
        if self._start is None:
            return 0.0
        end = self._stop if self._stop is not None else time.perf_counter()
        return end - self._start


def measure_time(func: Optional[Callable] = None, *,
                 label: Optional[str] = None,
                 slow_threshold: float = 30.0):
    """
    Decorator logging how long a call took.

    Durations are logged at DEBUG; anything above `slow_threshold` seconds is
    logged as a warning.

    Example:
        @measure_time
        def hungarian(costs):
            ...

        @measure_time(label="emd", slow_threshold=5.0)
        def estimate_emd(...):
            ...
    """
    def decorator(f):
        name = label or f.__name__

        @functools.wraps(f)
        def wrapper(*args, **kwargs):
            start_time = time.perf_counter()
            try:
                return f(*args, **kwargs)
            finally:
                duration = time.perf_counter() - start_time
                if duration > slow_threshold:
                    logger.warning(f"Slow call detected: {name} took {duration:.2f}s",
                                   extra={"call": name, "seconds": duration})
                else:
                    logger.debug(f"{name} completed in {duration:.3f}s")
        return wrapper

    if func is not None:
        return decorator(func)
    return decorator
