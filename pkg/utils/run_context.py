import uuid
import contextvars

_run_id_var = contextvars.ContextVar("run_id", default=None)


def set_run_id(run_id: str = None) -> str:
    """Create or set the run ID for this execution context."""
    if run_id is None:
        run_id = uuid.uuid4().hex[:12]
    _run_id_var.set(run_id)
    return run_id


def get_run_id() -> str:
    """Retrieve the current run ID, or "-" outside a run."""
    return _run_id_var.get() or "-"


def clear_run_id():
    """Clear the run ID once a command has finished."""
    _run_id_var.set(None)
