"""Distance metrics d(y, ŷ) and their gradients with respect to the prediction.

The same metric drives the closest-point matching and the supervised loss.
All functions accept single vectors or row batches (distances are taken
row-wise along the last axis).
"""

import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.logger_config import get_logger
from utils.validation import (
    ConfigError,
    DimensionMismatchError,
    require_one_hot,
    require_same_shape,
)

logger = get_logger(__name__)

SQEUCLIDEAN = "sqeuclidean"
CONDITIONED = "conditioned"
SOFTMAX_XENT = "softmax_xent"
EUCLIDEAN = "euclidean"

METRIC_KINDS = (SQEUCLIDEAN, CONDITIONED, SOFTMAX_XENT, EUCLIDEAN)


@dataclass(frozen=True)
class MetricSpec:
    """Named distance with its parameters; `z_dim` is only used by the conditioned kind."""

    kind: str = SQEUCLIDEAN
    z_dim: Optional[int] = None

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigError(
                f"unknown metric '{self.kind}'; expected one of {', '.join(METRIC_KINDS)}",
                field="metric",
            )
        if self.kind == CONDITIONED and (self.z_dim is None or int(self.z_dim) < 1):
            raise ConfigError("conditioned metric needs a positive z_dim", field="metric.z_dim")

    @classmethod
    def from_tag(cls, tag: str, z_dim: Optional[int] = None) -> "MetricSpec":
        return cls(kind=tag, z_dim=z_dim if tag == CONDITIONED else None)

    @property
    def is_squared_euclidean(self) -> bool:
        # the conditioned distance is the squared distance of the [z; y] concatenation
        return self.kind in (SQEUCLIDEAN, CONDITIONED)

    def check_dim(self, dim: int) -> None:
        if self.kind == CONDITIONED and not self.z_dim < dim:
            raise DimensionMismatchError(
                f"z_dim {self.z_dim} must be smaller than the vector dimension {dim}",
                field="metric.z_dim",
            )

    def to_tag(self) -> str:
        return self.kind


def _pair(a, b, names=("a", "b")):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    require_same_shape(a, b, names)
    return a, b


def squared_euclidean(a, b):
    """Σ_i (a_i − b_i)² over the last axis."""
    a, b = _pair(a, b)
    return np.sum(np.square(a - b), axis=-1)


def euclidean(a, b):
    return np.sqrt(squared_euclidean(a, b))


def conditioned_distance(u, v, z_dim: int):
    """
    Distance between [z₁; y₁] and [z₂; y₂]: squared z-block difference plus squared y-block difference.
    """
    u, v = _pair(u, v, ("u", "v"))
    if not 0 < z_dim < u.shape[-1]:
        raise DimensionMismatchError(
            f"z_dim {z_dim} incompatible with vector dimension {u.shape[-1]}", field="z_dim"
        )
    dz = u[..., :z_dim] - v[..., :z_dim]
    dy = u[..., z_dim:] - v[..., z_dim:]
    return np.sum(np.square(dz), axis=-1) + np.sum(np.square(dy), axis=-1)


def log_sum_exp(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    m = np.max(v, axis=-1, keepdims=True)
    return np.squeeze(m, axis=-1) + np.log(np.sum(np.exp(v - m), axis=-1))


def softmax(v) -> np.ndarray:
    """Softmax over the last axis with max-subtraction."""
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - np.max(v, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_cross_entropy(y, y_hat):
    """−log softmax(ŷ)_c where c is the hot index of the one-hot y."""
    y, y_hat = _pair(y, y_hat, ("y", "y_hat"))
    hot = require_one_hot(y)
    logits = np.atleast_2d(y_hat)
    picked = logits[np.arange(logits.shape[0]), hot]
    loss = np.maximum(log_sum_exp(logits) - picked, 0.0)
    return loss if y.ndim > 1 else float(loss[0])


def distance(spec: MetricSpec, y, y_hat):
    """d(y, ŷ) under `spec`."""
    if spec.kind == SQEUCLIDEAN:
        return squared_euclidean(y, y_hat)
    if spec.kind == CONDITIONED:
        return conditioned_distance(y, y_hat, spec.z_dim)
    if spec.kind == EUCLIDEAN:
        return euclidean(y, y_hat)
    return softmax_cross_entropy(y, y_hat)


def distance_gradient(spec: MetricSpec, y, y_hat) -> np.ndarray:
    """∂d(y, ŷ)/∂ŷ, row-wise for batches."""
    y, y_hat = _pair(y, y_hat, ("y", "y_hat"))
    if spec.kind == CONDITIONED:
        spec.check_dim(y.shape[-1])
    if spec.is_squared_euclidean:
        return 2.0 * (y_hat - y)
    if spec.kind == EUCLIDEAN:
        diff = y_hat - y
        norm = np.sqrt(np.sum(np.square(diff), axis=-1, keepdims=True))
        return np.divide(diff, norm, out=np.zeros_like(diff), where=norm > 0)
    require_one_hot(y)
    # fused softmax - one-hot form
    return softmax(y_hat) - y
