"""
Input validation for icpgen.
Exception hierarchy shared by every module plus the array checks the numerical code relies on.
"""

from typing import Any, Dict, Optional, Sequence

import numpy as np

from utils.logger_config import get_logger

logger = get_logger(__name__)


class ValidationError(Exception):
    """Base exception for invalid inputs, configurations and files."""

    def __init__(self, message: str, field: Optional[str] = None,
                 details: Optional[Dict[str, Any]] = None):
        self.message = message
        self.field = field
        self.details = details or {}
        super().__init__(self.message)

    def __str__(self) -> str:
        if self.field:
            return f"{self.field}: {self.message}"
        return self.message


class DimensionMismatchError(ValidationError):
    """Array shapes or counts that should agree do not."""


class ConfigError(ValidationError):
    """Experiment configuration that cannot be run."""


class DatasetFormatError(ValidationError):
    """A data file that does not follow its declared format."""


class BadMagicNumberError(DatasetFormatError):
    """IDX file whose magic number is not the expected one."""


class TruncatedFileError(DatasetFormatError):
    """IDX file shorter than its header announces."""


class CheckpointError(ValidationError):
    """Checkpoint missing, malformed or inconsistent with the requested use."""


def as_matrix(values: Any, name: str = "batch", dim: Optional[int] = None) -> np.ndarray:
    """
    Coerce `values` to a 2-D float64 array (rows are samples).

    A 1-D input is read as a single row. Raises DimensionMismatchError when the
    column count differs from `dim`.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionMismatchError(
            f"expected a 2-D array, got {arr.ndim} dimensions",
            field=name,
            details={"shape": arr.shape},
        )
    if dim is not None and arr.shape[1] != dim:
        raise DimensionMismatchError(
            f"expected {dim} columns, got {arr.shape[1]}",
            field=name,
            details={"expected": dim, "actual": arr.shape[1]},
        )
    return arr


def require_same_shape(a: np.ndarray, b: np.ndarray, names: Sequence[str] = ("a", "b")) -> None:
    if a.shape != b.shape:
        raise DimensionMismatchError(
            f"shape mismatch between {names[0]} {a.shape} and {names[1]} {b.shape}",
            field=names[1],
            details={names[0]: a.shape, names[1]: b.shape},
        )


def require_finite(arr: np.ndarray, name: str = "values") -> None:
    if not np.all(np.isfinite(arr)):
        raise ValidationError("values must be finite (no NaN or Inf)", field=name)


def require_probability_vector(probabilities: Any, name: str = "probabilities",
                               tol: float = 1e-9) -> np.ndarray:
    """Return `probabilities` as a float vector after checking it is a pmf."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValidationError("probabilities must be a non-empty vector", field=name)
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValidationError("probabilities must be finite and nonnegative", field=name,
                              details={"probabilities": p.tolist()})
    if abs(p.sum() - 1.0) > tol:
        raise ValidationError(
            f"probabilities must sum to 1 (sum={p.sum():.12g})",
            field=name,
            details={"sum": float(p.sum())},
        )
    return p


def require_one_hot(y: np.ndarray, name: str = "y") -> np.ndarray:
    """
    Check that every row of `y` is one-hot (a single exact 1, zeros elsewhere).

    Returns the hot index of each row. Exact comparison: one-hot targets are
    always generated, never computed.
    """
    arr = np.atleast_2d(y)
    ones = arr == 1.0
    zeros = arr == 0.0
    valid = (ones.sum(axis=-1) == 1) & np.all(ones | zeros, axis=-1)
    if not np.all(valid):
        bad = int(np.flatnonzero(~valid)[0])
        logger.debug(f"Rejected non one-hot row {bad} in {name}")
        raise ValidationError("target must be one-hot", field=name, details={"row": bad})
    return np.argmax(ones, axis=-1)
