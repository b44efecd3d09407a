"""Experiment configuration: JSON documents parsed into validated dataclasses.

Optimizer and training defaults come from config/config.ini; a JSON document
only needs to name what differs. Every error names the offending field.
"""

import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Tuple

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.config_loader import getfloat, getint
from utils.logger_config import get_logger
from utils.validation import ConfigError, ValidationError
from src.distances import CONDITIONED, SOFTMAX_XENT, MetricSpec
from src.distributions import OriginSpec, TargetSpec

logger = get_logger(__name__)

MATCHING_VARIANTS = ("greedy", "alternating")

_TRAIN_KEYS = {
    "name", "matching", "conditioned", "matching_batch", "supervised_minibatch", "epochs",
    "hidden_dims", "metric", "origin", "target", "optimizer", "clip_bound", "seed",
    "supervised_passes_per_epoch", "emd_sample_size", "emd_interval", "pmf_sample_size",
}
_EXPERIMENT_KEYS = {"output_dir", "checkpoint_interval", "export_assignments", "export_samples"}
_OPTIMIZER_KEYS = {"learning_rate", "beta1", "beta2", "epsilon"}


def _int(value: Any, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", field=name)
    if value < minimum:
        raise ConfigError(f"must be at least {minimum}, got {value}", field=name)
    return int(value)


def _float(value: Any, name: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value):
        raise ConfigError(f"expected a number, got {value!r}", field=name)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value}", field=name)
    return float(value)


def _section(d: Dict[str, Any], key: str) -> Dict[str, Any]:
    value = d.get(key, {})
    if not isinstance(value, dict):
        raise ConfigError("expected an object", field=key)
    return value


def _reject_unknown(d: Dict[str, Any], allowed, prefix: str = "") -> None:
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown field(s): {', '.join(unknown)}",
                          field=f"{prefix}{unknown[0]}")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = field(default_factory=lambda: getfloat("optimizer", "learning_rate", fallback=1e-3))
    beta1: float = field(default_factory=lambda: getfloat("optimizer", "beta1", fallback=0.9))
    beta2: float = field(default_factory=lambda: getfloat("optimizer", "beta2", fallback=0.999))
    epsilon: float = field(default_factory=lambda: getfloat("optimizer", "epsilon", fallback=1e-8))

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "OptimizerConfig":
        _reject_unknown(d, _OPTIMIZER_KEYS, "optimizer.")
        values = {k: _float(v, f"optimizer.{k}", positive=True) for k, v in d.items()}
        for beta in ("beta1", "beta2"):
            if beta in values and not values[beta] < 1.0:
                raise ConfigError("must lie in (0, 1)", field=f"optimizer.{beta}")
        return cls(**values)


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run (together with the dataset)."""

    target: TargetSpec
    name: str = "custom"
    matching: str = "greedy"
    matching_batch: int = 500
    supervised_minibatch: int = 100
    epochs: int = 50
    hidden_dims: Tuple[int, ...] = (50, 50, 50)
    metric: MetricSpec = field(default_factory=MetricSpec)
    origin: OriginSpec = field(default_factory=OriginSpec)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    clip_bound: float = field(default_factory=lambda: getfloat("training", "clip_bound", fallback=0.1))
    seed: int = field(default_factory=lambda: getint("training", "seed", fallback=0))
    supervised_passes_per_epoch: int = field(
        default_factory=lambda: getint("training", "supervised_passes_per_epoch", fallback=1))
    emd_sample_size: int = 0
    emd_interval: int = 1
    pmf_sample_size: int = field(default_factory=lambda: getint("evaluation", "pmf_sample_size", fallback=1000))

    def __post_init__(self):
        if self.matching not in MATCHING_VARIANTS:
            raise ConfigError(f"matching must be one of {', '.join(MATCHING_VARIANTS)}", field="matching")
        if self.matching_batch < 1 or self.supervised_minibatch < 1:
            raise ConfigError("batch sizes must be positive", field="matching_batch")
        if self.supervised_minibatch > self.matching_batch:
            raise ConfigError(
                f"supervised_minibatch ({self.supervised_minibatch}) must not exceed "
                f"matching_batch ({self.matching_batch})",
                field="supervised_minibatch",
            )
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative", field="epochs")
        if any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden layer widths must be positive", field="hidden_dims")
        if not self.clip_bound > 0:
            raise ConfigError("clip_bound must be positive", field="clip_bound")
        if self.supervised_passes_per_epoch < 1:
            raise ConfigError("supervised_passes_per_epoch must be positive",
                              field="supervised_passes_per_epoch")
        if self.emd_interval < 1:
            raise ConfigError("emd_interval must be positive", field="emd_interval")
        if self.conditioned and self.metric.kind == SOFTMAX_XENT:
            raise ConfigError("conditioned categorical training is not supported", field="metric")
        if self.metric.kind == CONDITIONED and not self.conditioned:
            raise ConfigError("the conditioned metric needs a conditioned target", field="metric")
        if self.metric.kind == CONDITIONED and self.metric.z_dim != self.target.z_dim:
            raise ConfigError("metric z_dim differs from the target conditioning width", field="metric.z_dim")
        if self.target.categorical != (self.metric.kind == SOFTMAX_XENT):
            raise ConfigError("multinoulli targets go with the softmax_xent metric and vice versa",
                              field="metric")

    @property
    def conditioned(self) -> bool:
        return self.target.conditioned

    @property
    def z_dim(self) -> int:
        return self.target.z_dim

    def layer_dims(self, target_dim: int) -> List[int]:
        """Network dims for a target of width `target_dim` (z block included)."""
        return [self.z_dim + self.origin.dim, *self.hidden_dims, target_dim]

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "TrainConfig":
        _reject_unknown(d, _TRAIN_KEYS)
        target_doc = dict(_section(d, "target"))
        if "kind" not in target_doc:
            raise ConfigError("target kind is required", field="target.kind")
        if "conditioned" in d:
            target_doc["conditioned"] = bool(d["conditioned"])
        try:
            target = TargetSpec(**target_doc)
        except TypeError as e:
            raise ConfigError(f"invalid target fields: {e}", field="target") from e
        try:
            origin = OriginSpec(**_section(d, "origin"))
        except TypeError as e:
            raise ConfigError(f"invalid origin fields: {e}", field="origin") from e

        tag = d.get("metric", SOFTMAX_XENT if target.categorical else "sqeuclidean")
        if not isinstance(tag, str):
            raise ConfigError("metric must be a string tag", field="metric")
        metric = MetricSpec.from_tag(tag, z_dim=target.z_dim or None)

        kwargs: Dict[str, Any] = {
            "target": target,
            "origin": origin,
            "metric": metric,
            "optimizer": OptimizerConfig.from_dict(_section(d, "optimizer")),
        }
        if "name" in d:
            kwargs["name"] = str(d["name"])
        if "matching" in d:
            kwargs["matching"] = d["matching"]
        for key, minimum in (("matching_batch", 1), ("supervised_minibatch", 1), ("epochs", 0),
                             ("seed", 0), ("supervised_passes_per_epoch", 1),
                             ("emd_sample_size", 0), ("emd_interval", 1), ("pmf_sample_size", 1)):
            if key in d:
                kwargs[key] = _int(d[key], key, minimum)
        if "clip_bound" in d:
            kwargs["clip_bound"] = _float(d["clip_bound"], "clip_bound", positive=True)
        if "hidden_dims" in d:
            if not isinstance(d["hidden_dims"], list):
                raise ConfigError("expected a list of widths", field="hidden_dims")
            kwargs["hidden_dims"] = tuple(_int(h, "hidden_dims", 1) for h in d["hidden_dims"])
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        target = {k: v for k, v in asdict(self.target).items() if v is not None}
        return {
            "name": self.name,
            "matching": self.matching,
            "conditioned": self.conditioned,
            "matching_batch": self.matching_batch,
            "supervised_minibatch": self.supervised_minibatch,
            "epochs": self.epochs,
            "hidden_dims": list(self.hidden_dims),
            "metric": self.metric.to_tag(),
            "origin": asdict(self.origin),
            "target": target,
            "optimizer": asdict(self.optimizer),
            "clip_bound": self.clip_bound,
            "seed": self.seed,
            "supervised_passes_per_epoch": self.supervised_passes_per_epoch,
            "emd_sample_size": self.emd_sample_size,
            "emd_interval": self.emd_interval,
            "pmf_sample_size": self.pmf_sample_size,
        }


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig
    output_dir: str = "runs/experiment"
    checkpoint_interval: int = field(default_factory=lambda: getint("training", "checkpoint_interval", fallback=10))
    export_assignments: bool = False
    export_samples: int = 0

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object", field="<root>")
        _reject_unknown(d, _TRAIN_KEYS | _EXPERIMENT_KEYS)
        train = TrainConfig.from_dict({k: v for k, v in d.items() if k in _TRAIN_KEYS})
        kwargs: Dict[str, Any] = {"train": train}
        if "output_dir" in d:
            kwargs["output_dir"] = str(d["output_dir"])
        if "checkpoint_interval" in d:
            kwargs["checkpoint_interval"] = _int(d["checkpoint_interval"], "checkpoint_interval", 0)
        if "export_assignments" in d:
            kwargs["export_assignments"] = bool(d["export_assignments"])
        if "export_samples" in d:
            kwargs["export_samples"] = _int(d["export_samples"], "export_samples", 0)
        return cls(**kwargs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.train.to_dict(),
            "output_dir": self.output_dir,
            "checkpoint_interval": self.checkpoint_interval,
            "export_assignments": self.export_assignments,
            "export_samples": self.export_samples,
        }

    def with_overrides(self, seed: Optional[int] = None, epochs: Optional[int] = None,
                       output_dir: Optional[str] = None) -> "ExperimentConfig":
        train = self.train
        if seed is not None:
            train = replace(train, seed=_int(seed, "seed"))
        if epochs is not None:
            train = replace(train, epochs=_int(epochs, "epochs"))
        return replace(self, train=train, output_dir=output_dir or self.output_dir)


def load_config_document(path: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}", field="config")
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path} at line {e.lineno}, column {e.colno}: {e.msg}",
                              field="config", details={"line": e.lineno, "column": e.colno}) from e
    return doc


def parse_experiment(doc: Dict[str, Any]) -> ExperimentConfig:
    """Parse a config document; any invalid value surfaces as ConfigError."""
    try:
        return ExperimentConfig.from_dict(doc)
    except ConfigError:
        raise
    except ValidationError as e:
        raise ConfigError(e.message, field=e.field, details=e.details) from e


def load_experiment(path: str) -> ExperimentConfig:
    config = parse_experiment(load_config_document(path))
    logger.info("Loaded experiment config", extra={"path": path, "experiment": config.train.name})
    return config
