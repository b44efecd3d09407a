"""Bijective correspondences between target samples and network predictions.

Greedy closest points, the alternating variant, the exact minimum-cost
assignment and the empirical earth mover distance built on it.
"""

import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.metrics import pairwise_distances

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.config_loader import getint, worker_threads
from utils.logger_config import get_logger
from utils.performance import measure_time
from utils.validation import DimensionMismatchError, ValidationError, as_matrix, require_one_hot
from src.distances import EUCLIDEAN, SOFTMAX_XENT, MetricSpec, log_sum_exp

logger = get_logger(__name__)

MATERIALIZE_LIMIT = getint("matching", "materialize_limit", fallback=20000)
# below this many cells threads cost more than they save
_PARALLEL_MIN_CELLS = 4_000_000


@dataclass
class Assignment:
    """permutation[i] = j means target i is matched to prediction j."""

    permutation: np.ndarray
    per_pair_distance: np.ndarray
    total_cost: float
    method: str = "greedy"

    def __len__(self) -> int:
        return int(self.permutation.shape[0])

    @property
    def mean_cost(self) -> float:
        return self.total_cost / max(len(self), 1)

    def is_bijection(self) -> bool:
        n = len(self)
        return bool(np.array_equal(np.sort(self.permutation), np.arange(n)))

    def inverse(self) -> np.ndarray:
        """inverse[j] = i: the target matched to prediction j."""
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(len(self))
        return inv


@dataclass
class EmdEstimate:
    value: float
    metric: str
    method: str
    sample_count: int

    def as_dict(self) -> dict:
        return {"emd": self.value, "metric": self.metric, "method": self.method,
                "sample_count": self.sample_count}


def _check_sets(targets, predictions):
    targets = as_matrix(targets, name="targets")
    predictions = as_matrix(predictions, name="predictions")
    if targets.shape[0] != predictions.shape[0]:
        raise DimensionMismatchError(
            f"need equal counts, got {targets.shape[0]} targets and {predictions.shape[0]} predictions",
            field="predictions",
        )
    if targets.shape[1] != predictions.shape[1]:
        raise DimensionMismatchError(
            f"dimension mismatch: {targets.shape[1]} vs {predictions.shape[1]}", field="predictions"
        )
    return targets, predictions


def _scipy_metric(metric: MetricSpec) -> str:
    return "euclidean" if metric.kind == EUCLIDEAN else "sqeuclidean"


def pairwise_costs(targets, predictions, metric: MetricSpec,
                   n_jobs: Optional[int] = None) -> np.ndarray:
    """Cost matrix C with C[i, j] = d(target_i, prediction_j)."""
    targets, predictions = _check_sets(targets, predictions)
    if targets.shape[1]:
        metric.check_dim(targets.shape[1])
    if metric.kind == SOFTMAX_XENT:
        hot = require_one_hot(targets, name="targets")
        costs = log_sum_exp(predictions)[None, :] - predictions[:, hot].T
        return np.maximum(costs, 0.0)

    n_jobs = n_jobs or worker_threads()
    if n_jobs > 1 and targets.shape[0] * predictions.shape[0] >= _PARALLEL_MIN_CELLS:
        return pairwise_distances(targets, predictions, metric=_scipy_metric(metric), n_jobs=n_jobs)
    return cdist(targets, predictions, metric=_scipy_metric(metric))


class CostOracle:
    """
    Row/column access to the cost matrix.

    Small problems materialize the full matrix; above `materialize_limit`
    samples each query computes its distances on the fly.
    """

    def __init__(self, targets, predictions, metric: MetricSpec,
                 materialize_limit: Optional[int] = None):
        self.targets, self.predictions = _check_sets(targets, predictions)
        self.metric = metric
        self.n = self.targets.shape[0]
        if self.n == 0:
            raise ValidationError("cannot match empty sample sets", field="targets")
        limit = MATERIALIZE_LIMIT if materialize_limit is None else materialize_limit
        self._matrix = pairwise_costs(self.targets, self.predictions, metric) if self.n <= limit else None
        if self._matrix is None:
            logger.debug(f"Cost matrix for N={self.n} exceeds {limit}; computing distances per query")
            if metric.kind == SOFTMAX_XENT:
                self._hot = require_one_hot(self.targets, name="targets")
                self._lse = log_sum_exp(self.predictions)

    @property
    def materialized(self) -> bool:
        return self._matrix is not None

    def row(self, i: int) -> np.ndarray:
        """Distances from target i to every prediction."""
        if self._matrix is not None:
            return self._matrix[i]
        if self.metric.kind == SOFTMAX_XENT:
            return np.maximum(self._lse - self.predictions[:, self._hot[i]], 0.0)
        return cdist(self.targets[i:i + 1], self.predictions, metric=_scipy_metric(self.metric))[0]

    def column(self, j: int) -> np.ndarray:
        """Distances from every target to prediction j."""
        if self._matrix is not None:
            return self._matrix[:, j]
        if self.metric.kind == SOFTMAX_XENT:
            return np.maximum(self._lse[j] - self.predictions[j, self._hot], 0.0)
        return cdist(self.targets, self.predictions[j:j + 1], metric=_scipy_metric(self.metric))[:, 0]


def _nearest(distances: np.ndarray, available: np.ndarray) -> int:
    # argmin returns the first minimum, so ties go to the lowest remaining index
    return int(np.argmin(np.where(available, distances, np.inf)))


def _finish(permutation: np.ndarray, oracle: CostOracle, method: str) -> Assignment:
    if oracle.materialized:
        per_pair = oracle._matrix[np.arange(oracle.n), permutation]
    else:
        per_pair = np.array([oracle.row(i)[permutation[i]] for i in range(oracle.n)], dtype=np.float64)
    return Assignment(
        permutation=permutation,
        per_pair_distance=per_pair,
        total_cost=float(np.sum(per_pair)),
        method=method,
    )


def greedy_match(targets, predictions, metric: MetricSpec, rng: np.random.Generator,
                 materialize_limit: Optional[int] = None) -> Assignment:
    """
    Closest-point matching in random target order.

    Targets are visited in one uniformly random permutation; each takes the
    nearest prediction not consumed by an earlier target.
    """
    oracle = CostOracle(targets, predictions, metric, materialize_limit)
    n = oracle.n

    available = np.ones(n, dtype=bool)
    permutation = np.empty(n, dtype=np.int64)
    for i in rng.permutation(n):
        j = _nearest(oracle.row(i), available)
        permutation[i] = j
        available[j] = False
    return _finish(permutation, oracle, "greedy")


def alternating_match(targets, predictions, metric: MetricSpec, rng: np.random.Generator,
                      target_side_probability: float = 0.5,
                      materialize_limit: Optional[int] = None) -> Assignment:
    """
    Closest-point matching that flips a coin over which side picks.

    With probability `target_side_probability` a random remaining target takes
    its nearest remaining prediction; otherwise a random remaining prediction
    takes its nearest remaining target.
    """
    if not 0.0 <= target_side_probability <= 1.0:
        raise ValidationError("target_side_probability must lie in [0, 1]",
                              field="target_side_probability")
    oracle = CostOracle(targets, predictions, metric, materialize_limit)
    n = oracle.n

    targets_left = np.ones(n, dtype=bool)
    predictions_left = np.ones(n, dtype=bool)
    remaining_targets = list(range(n))
    remaining_predictions = list(range(n))
    permutation = np.empty(n, dtype=np.int64)

    def take(pool: list, k: int) -> int:
        # swap-remove keeps draws O(1)
        pool[k], pool[-1] = pool[-1], pool[k]
        return pool.pop()

    while remaining_targets:
        if rng.random() < target_side_probability:
            i = take(remaining_targets, int(rng.integers(len(remaining_targets))))
            j = _nearest(oracle.row(i), predictions_left)
            remaining_predictions.remove(j)
        else:
            j = take(remaining_predictions, int(rng.integers(len(remaining_predictions))))
            i = _nearest(oracle.column(j), targets_left)
            remaining_targets.remove(i)
        permutation[i] = j
        targets_left[i] = False
        predictions_left[j] = False
    return _finish(permutation, oracle, "alternating")


@measure_time(label="hungarian", slow_threshold=10.0)
def hungarian(costs) -> Assignment:
    """Minimum-total-cost perfect matching of a square cost matrix (O(N³))."""
    c = np.asarray(costs, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionMismatchError(f"cost matrix must be square, got shape {c.shape}", field="costs")
    if not np.all(np.isfinite(c)):
        raise ValidationError("cost matrix must be finite", field="costs")
    if c.shape[0] == 0:
        raise ValidationError("cost matrix must not be empty", field="costs")
    rows, cols = linear_sum_assignment(c)
    permutation = np.empty(c.shape[0], dtype=np.int64)
    permutation[rows] = cols
    per_pair = c[np.arange(c.shape[0]), permutation]
    return Assignment(permutation=permutation, per_pair_distance=per_pair,
                      total_cost=float(np.sum(per_pair)), method="hungarian")


def match(method: str, targets, predictions, metric: MetricSpec,
          rng: np.random.Generator) -> Assignment:
    """Dispatch on the configured matching variant."""
    if method == "greedy":
        return greedy_match(targets, predictions, metric, rng)
    if method == "alternating":
        return alternating_match(targets, predictions, metric, rng)
    if method == "hungarian":
        return hungarian(pairwise_costs(targets, predictions, metric))
    raise ValidationError(f"unknown matching method '{method}'", field="matching")


def empirical_emd(sample_p, sample_q, metric: MetricSpec) -> float:
    """Optimal assignment cost between two equal-size samples divided by the sample count."""
    return estimate_emd(sample_p, sample_q, metric).value


@measure_time(label="emd", slow_threshold=10.0)
def estimate_emd(sample_p, sample_q, metric: MetricSpec, approx: bool = False,
                 rng: Optional[np.random.Generator] = None) -> EmdEstimate:
    """
    Empirical EMD record. Exact (optimal assignment) unless `approx`, in which
    case the greedy matching gives an upper bound.
    """
    sample_p, sample_q = _check_sets(sample_p, sample_q)
    n = sample_p.shape[0]
    if n == 0:
        raise ValidationError("cannot compute EMD of empty samples", field="sample_p")
    if approx:
        assignment = greedy_match(sample_p, sample_q, metric, rng or np.random.default_rng(0))
        method = "greedy-upper-bound"
    else:
        assignment = hungarian(pairwise_costs(sample_p, sample_q, metric))
        method = "hungarian"
    return EmdEstimate(value=assignment.total_cost / n, metric=metric.kind,
                       method=method, sample_count=n)
