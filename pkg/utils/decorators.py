import functools
import traceback
from typing import Any, Callable, Optional

from utils.logger_config import get_logger
from utils.run_context import get_run_id

logger = get_logger(__name__)


def safe_execution(fallback_value: Optional[Any] = None, reraise: bool = True):
    """
    Decorator that centralizes exception handling and logging.

    Parameters:
    - fallback_value: value to return if an exception happens and reraise is False.
    - reraise: if True, the exception is re-raised after logging; if False, fallback_value is returned.
    """
    def decorator(func: Callable):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            try:
                return func(*args, **kwargs)
            except Exception as exc:
                try:
                    rid = get_run_id()
                except Exception:
                    # reading the context must never break logging
                    rid = None

                logger.error(
                    {
                        "error": str(exc),
                        "error_type": type(exc).__name__,
                        "traceback": traceback.format_exc(),
                        "function": getattr(func, "__qualname__", func.__name__),
                        "run_id": rid,
                    }
                )

                if reraise:
                    raise
                return fallback_value
        return wrapper
    return decorator
