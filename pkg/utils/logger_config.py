import logging
import os
from datetime import datetime
from logging.handlers import TimedRotatingFileHandler

try:
    from pythonjsonlogger.json import JsonFormatter as _BaseJsonFormatter
except ImportError:  # python-json-logger < 3
    from pythonjsonlogger.jsonlogger import JsonFormatter as _BaseJsonFormatter

from utils.config_loader import get, getboolean, getint
from utils.run_context import get_run_id

ROOT_LOGGER_NAME = "icpgen"


class JsonFormatter(_BaseJsonFormatter):
    """JSON formatter: run id, time, level, module, message plus any `extra` fields."""

    def add_fields(self, log_record, record, message_dict):
        super().add_fields(log_record, record, message_dict)
        log_record["run_id"] = getattr(record, "run_id", get_run_id())
        log_record["time"] = datetime.fromtimestamp(record.created).strftime("%Y-%m-%d %H:%M:%S")
        log_record["level"] = record.levelname
        log_record["module"] = record.name


class RunIdFilter(logging.Filter):
    """Injects the current run_id into each log record."""

    def filter(self, record):
        record.run_id = get_run_id()
        return True


def _configure_root() -> logging.Logger:
    root = logging.getLogger(ROOT_LOGGER_NAME)
    if getattr(root, "_configured", False):
        return root

    level_name = (get("logging", "log_level", fallback="INFO") or "INFO").upper()
    root.setLevel(getattr(logging, level_name, logging.INFO))

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(JsonFormatter())
    console_handler.addFilter(RunIdFilter())

    # Prevent duplicates
    root.handlers.clear()
    root.addHandler(console_handler)

    if getboolean("logging", "log_to_file", fallback=False):
        log_dir = get("logging", "log_dir", fallback="logs")
        os.makedirs(log_dir, exist_ok=True)
        file_handler = TimedRotatingFileHandler(
            os.path.join(log_dir, get("logging", "log_file", fallback="icpgen.log")),
            when="midnight",
            interval=1,
            backupCount=getint("logging", "backup_count", fallback=7),
            encoding="utf-8",
        )
        file_handler.setFormatter(JsonFormatter())
        file_handler.addFilter(RunIdFilter())
        root.addHandler(file_handler)

    root.propagate = False
    root._configured = True
    return root


def get_logger(name: str = ROOT_LOGGER_NAME) -> logging.Logger:
    """Return a logger under the shared `icpgen` hierarchy."""
    root = _configure_root()
    if name == ROOT_LOGGER_NAME:
        return root
    return root.getChild(name)


def attach_file_handler(path: str) -> logging.Handler:
    """Mirror all project logs into `path` (one file per run); returns the handler."""
    handler = logging.FileHandler(path, encoding="utf-8")
    handler.setFormatter(JsonFormatter())
    handler.addFilter(RunIdFilter())
    _configure_root().addHandler(handler)
    return handler


def detach_handler(handler: logging.Handler) -> None:
    root = _configure_root()
    root.removeHandler(handler)
    handler.close()
