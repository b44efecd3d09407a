"""The outer iterative-closest-points loop.

Each epoch samples an origin batch and a target batch, maps the origin batch
through the network, matches predictions to targets, turns the matching into
ordered (input, regression target) pairs and runs supervised minibatch
updates on them.
"""

import os
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.config_loader import getint
from utils.logger_config import get_logger
from utils.performance import Stopwatch
from utils.validation import DimensionMismatchError, ValidationError
from src.checkpoint import save_checkpoint
from src.distances import MetricSpec, distance_gradient
from src.distributions import TargetSource, build_target_source, sample_origin
from src.experiment import TrainConfig
from src.matching import Assignment, EmdEstimate, estimate_emd, match
from src.network import (
    AdamState,
    DenseNetwork,
    adam_step,
    check_finite_outputs,
    clip_output_gradient,
    init_network,
)

logger = get_logger(__name__)

EXACT_EMD_LIMIT = getint("evaluation", "exact_emd_limit", fallback=2000)
PMF_REFERENCE_REPETITIONS = getint("evaluation", "pmf_reference_repetitions", fallback=10000)


@dataclass
class OrderedPairs:
    """Supervised set: row i pairs a network input with the target it must reproduce."""

    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return int(self.inputs.shape[0])


@dataclass
class EpochRecord:
    epoch: int
    matched_cost_sum: float
    matched_cost_mean: float
    emd: Optional[float] = None
    pmf_error: Optional[float] = None
    seconds: float = 0.0


@dataclass
class MetricsHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[EpochRecord]:
        return iter(self.records)

    def __getitem__(self, index: int) -> EpochRecord:
        return self.records[index]

    def matched_cost_means(self) -> np.ndarray:
        return np.array([r.matched_cost_mean for r in self.records])

    def to_frame(self, include_seconds: bool = True) -> pd.DataFrame:
        columns = ["epoch", "matched_cost_sum", "matched_cost_mean", "emd", "pmf_error"]
        if include_seconds:
            columns.append("seconds")
        rows = [{c: getattr(r, c) for c in columns} for r in self.records]
        frame = pd.DataFrame(rows, columns=columns)
        return frame.astype({"epoch": "int64", "emd": "float64", "pmf_error": "float64"})


@dataclass
class EpochOutcome:
    network: DenseNetwork
    adam: AdamState
    record: EpochRecord
    assignment: Assignment
    pairs: OrderedPairs
    origin_batch: np.ndarray
    target_batch: np.ndarray


@dataclass
class TrainResult:
    network: DenseNetwork
    adam: AdamState
    history: MetricsHistory
    last_epoch: Optional[EpochOutcome] = None


@dataclass
class GeneratedBatch:
    outputs: np.ndarray
    labels: Optional[np.ndarray] = None
    conditioning: Optional[np.ndarray] = None


def seed_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Independent (training, evaluation) generators so evaluation never shifts training."""
    train_seq, eval_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(train_seq), np.random.default_rng(eval_seq)


def new_network(config: TrainConfig, source: TargetSource) -> Tuple[DenseNetwork, AdamState]:
    net = init_network(config.layer_dims(source.dim), config.seed)
    opt = config.optimizer
    adam = AdamState.for_parameters(net.parameters(), learning_rate=opt.learning_rate,
                                    beta1=opt.beta1, beta2=opt.beta2, epsilon=opt.epsilon)
    return net, adam


def network_inputs(origin_batch: np.ndarray, conditioning: Optional[np.ndarray]) -> np.ndarray:
    """[z; x] rows for conditioned networks, x rows otherwise."""
    if conditioning is None or conditioning.shape[1] == 0:
        return origin_batch
    return np.hstack([conditioning, origin_batch])


def matching_predictions(outputs: np.ndarray, conditioning: Optional[np.ndarray]) -> np.ndarray:
    """Predictions as seen by the matcher: the input z replaces the predicted ẑ."""
    if conditioning is None or conditioning.shape[1] == 0:
        return outputs
    return np.hstack([conditioning, outputs[:, conditioning.shape[1]:]])


def build_ordered_pairs(origin_batch: np.ndarray, target_batch: np.ndarray,
                        assignment: Assignment, z_dim: int = 0) -> OrderedPairs:
    """
    Pair each target with the origin sample whose prediction it was matched to.

    Conditioned inputs carry the target's own z: ([z_i; x_j], [z_i; y_i]).
    """
    matched_x = origin_batch[assignment.permutation]
    conditioning = target_batch[:, :z_dim] if z_dim else None
    return OrderedPairs(inputs=network_inputs(matched_x, conditioning), targets=target_batch.copy())


def _check_compatible(net: DenseNetwork, config: TrainConfig, source: TargetSource) -> None:
    if source.z_dim != config.z_dim:
        raise DimensionMismatchError(
            f"data source has z_dim {source.z_dim}, config expects {config.z_dim}", field="target"
        )
    expected_in = config.z_dim + config.origin.dim
    if net.input_dim != expected_in or net.output_dim != source.dim:
        raise DimensionMismatchError(
            f"network {net.input_dim}->{net.output_dim} does not fit config "
            f"{expected_in}->{source.dim}",
            field="layer_dims",
        )


def supervised_pass(net: DenseNetwork, adam: AdamState, pairs: OrderedPairs, metric: MetricSpec,
                    minibatch: int, clip_bound: float,
                    rng: np.random.Generator) -> Tuple[DenseNetwork, AdamState]:
    """One pass of minibatch Adam over a random partition of `pairs`."""
    order = rng.permutation(len(pairs))
    for start in range(0, len(order), minibatch):
        idx = order[start:start + minibatch]
        outputs, cache = net.forward(pairs.inputs[idx])
        grad = distance_gradient(metric, pairs.targets[idx], outputs)
        grads = net.backward(cache, clip_output_gradient(grad, clip_bound))
        params, adam = adam_step(adam, net.parameters(), grads)
        net = net.with_parameters(params)
    return net, adam


def train_epoch(net: DenseNetwork, adam: AdamState, config: TrainConfig, source: TargetSource,
                rng: np.random.Generator, epoch: int = 1,
                eval_rng: Optional[np.random.Generator] = None) -> EpochOutcome:
    """Sample, map, match, pair, and fit for one matching batch."""
    _check_compatible(net, config, source)
    n = config.matching_batch
    with Stopwatch() as watch:
        origin_batch = sample_origin(config.origin, n, rng)
        target_batch = source.sample(n, rng)
        if target_batch.shape[0] != n:
            raise ValidationError("data source returned no samples", field="target")
        conditioning = target_batch[:, :config.z_dim] if config.z_dim else None

        outputs = net.predict(network_inputs(origin_batch, conditioning))
        check_finite_outputs(outputs)
        assignment = match(config.matching, target_batch,
                           matching_predictions(outputs, conditioning), config.metric, rng)
        pairs = build_ordered_pairs(origin_batch, target_batch, assignment, config.z_dim)

        # matched cost belongs to the network that produced the assignment
        record = EpochRecord(epoch=epoch, matched_cost_sum=assignment.total_cost,
                             matched_cost_mean=assignment.mean_cost)

        for _ in range(config.supervised_passes_per_epoch):
            net, adam = supervised_pass(net, adam, pairs, config.metric, config.supervised_minibatch,
                                        config.clip_bound, rng)

        if eval_rng is not None:
            if source.probabilities is not None:
                generated = generate(net, config, config.pmf_sample_size, eval_rng)
                record.pmf_error = pmf_error(generated.labels, source.probabilities)
            if config.emd_sample_size and epoch % config.emd_interval == 0:
                estimate = evaluate_emd(net, config, source, config.emd_sample_size, eval_rng,
                                        approx=config.emd_sample_size > EXACT_EMD_LIMIT)
                record.emd = estimate.value
    record.seconds = watch.elapsed

    logger.info(
        f"Epoch {epoch}: matched cost mean {record.matched_cost_mean:.6g}",
        extra={"epoch": epoch, "matched_cost_sum": record.matched_cost_sum,
               "emd": record.emd, "pmf_error": record.pmf_error, "seconds": record.seconds},
    )
    return EpochOutcome(network=net, adam=adam, record=record, assignment=assignment, pairs=pairs,
                        origin_batch=origin_batch, target_batch=target_batch)


def train(config: TrainConfig, source: Optional[TargetSource] = None,
          checkpoint_dir: Optional[str] = None, checkpoint_interval: int = 0,
          checkpoint_config: Optional[Dict[str, Any]] = None,
          on_epoch: Optional[Callable[[EpochOutcome], None]] = None) -> TrainResult:
    """
    Run `config.epochs` epochs from a freshly initialized network.

    (seed, config, dataset) fully determine the result. Checkpoints are written
    every `checkpoint_interval` epochs when `checkpoint_dir` is given.
    """
    source = source or build_target_source(config.target)
    net, adam = new_network(config, source)
    rng, eval_rng = seed_streams(config.seed)
    history = MetricsHistory()
    outcome = None
    logger.info("Training started", extra={"experiment": config.name, "epochs": config.epochs,
                                           "matching": config.matching, "seed": config.seed,
                                           "layer_dims": net.layer_dims})
    for epoch in range(1, config.epochs + 1):
        outcome = train_epoch(net, adam, config, source, rng, epoch, eval_rng)
        net, adam = outcome.network, outcome.adam
        history.append(outcome.record)
        if on_epoch is not None:
            on_epoch(outcome)
        if checkpoint_dir and checkpoint_interval and epoch % checkpoint_interval == 0:
            save_checkpoint(os.path.join(checkpoint_dir, f"checkpoint_epoch{epoch:05d}.json"),
                            net, adam, config.seed, epoch, checkpoint_config or config.to_dict())
    return TrainResult(network=net, adam=adam, history=history, last_epoch=outcome)


def generate(net: DenseNetwork, config: TrainConfig, count: int, rng: np.random.Generator,
             conditioning=None) -> GeneratedBatch:
    """
    Map fresh origin noise through the network.

    Conditioned networks need one z row per requested sample and return full
    [ẑ; ŷ] outputs; categorical targets also get argmax class labels.
    """
    if config.conditioned:
        if conditioning is None:
            raise ValidationError("conditioned network needs conditioning values", field="conditioning")
        z = np.asarray(conditioning, dtype=np.float64).reshape(-1, config.z_dim) \
            if np.size(conditioning) else np.empty((0, config.z_dim))
        if count is not None and count != z.shape[0]:
            raise DimensionMismatchError(
                f"count {count} differs from {z.shape[0]} conditioning rows", field="conditioning"
            )
        count = z.shape[0]
    else:
        if conditioning is not None:
            raise ValidationError("unconditioned network does not accept conditioning", field="conditioning")
        z = None
    expected_in = config.z_dim + config.origin.dim
    if net.input_dim != expected_in:
        raise DimensionMismatchError(
            f"network input {net.input_dim} does not match config input {expected_in}", field="layer_dims"
        )
    if count == 0:
        outputs = np.empty((0, net.output_dim))
    else:
        outputs = net.predict(network_inputs(sample_origin(config.origin, count, rng), z))
    labels = np.argmax(outputs, axis=1) if config.target.categorical else None
    return GeneratedBatch(outputs=outputs, labels=labels, conditioning=z)


def evaluate_emd(net: DenseNetwork, config: TrainConfig, source: TargetSource, sample_size: int,
                 rng: np.random.Generator, approx: bool = False) -> EmdEstimate:
    """
    Empirical EMD between `sample_size` generated samples and fresh target samples.

    Conditioned networks are asked for the z values of the target sample.
    """
    if sample_size > EXACT_EMD_LIMIT and not approx:
        raise ValidationError(
            f"exact EMD is limited to {EXACT_EMD_LIMIT} samples; use the greedy upper bound",
            field="sample_size",
            details={"sample_size": sample_size, "limit": EXACT_EMD_LIMIT},
        )
    targets = source.sample(sample_size, rng)
    conditioning = targets[:, :config.z_dim] if config.z_dim else None
    generated = generate(net, config, sample_size, rng, conditioning)
    predictions = matching_predictions(generated.outputs, conditioning)
    return estimate_emd(targets, predictions, config.metric, approx=approx, rng=rng)


def pmf_error(labels, true_probabilities) -> float:
    """Mean over categories of |empirical frequency − true probability|."""
    p = np.asarray(true_probabilities, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= p.size):
        raise ValidationError("labels out of range", field="labels",
                              details={"categories": int(p.size)})
    counts = np.bincount(labels, minlength=p.size).astype(np.float64)
    frequencies = counts / labels.size if labels.size else counts
    return float(np.mean(np.abs(frequencies - p)))


def pmf_reference(true_probabilities, sample_size: int = 1000,
                  repetitions: int = PMF_REFERENCE_REPETITIONS,
                  rng: Optional[np.random.Generator] = None) -> float:
    """Mean pmf error of `sample_size`-draw samples from the true distribution itself."""
    p = np.asarray(true_probabilities, dtype=np.float64)
    rng = rng or np.random.default_rng(0)
    counts = rng.multinomial(sample_size, p, size=repetitions)
    errors = np.mean(np.abs(counts / sample_size - p), axis=1)
    return float(np.mean(errors))
