"""JSON checkpoints for a network, its Adam state and the run that produced it."""

import json
import os
import sys
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.logger_config import get_logger
from utils.validation import CheckpointError, ValidationError
from src.network import AdamState, DenseNetwork

logger = get_logger(__name__)

CHECKPOINT_FORMAT = "icpgen-checkpoint/1"


@dataclass
class Checkpoint:
    network: DenseNetwork
    adam: Optional[AdamState]
    seed: int
    epoch: int
    config: Optional[Dict[str, Any]] = None


def _flat(arr: np.ndarray) -> list:
    # float() keeps repr precision, so every value round-trips exactly
    return [float(x) for x in np.asarray(arr, dtype=np.float64).ravel(order="C")]


def checkpoint_to_dict(network: DenseNetwork, adam: Optional[AdamState], seed: int, epoch: int,
                       config: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "layer_dims": [int(d) for d in network.layer_dims],
        "weights": [_flat(w) for w in network.weights],
        "biases": [_flat(b) for b in network.biases],
        "activation": {"hidden": network.hidden_activation, "output": network.output_activation},
        "adam": None,
        "seed": int(seed),
        "epoch": int(epoch),
    }
    if adam is not None:
        doc["adam"] = {
            "first_moment": [_flat(m) for m in adam.first_moment],
            "second_moment": [_flat(v) for v in adam.second_moment],
            "step_count": int(adam.step_count),
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "epsilon": adam.epsilon,
            "learning_rate": adam.learning_rate,
        }
    if config is not None:
        doc["config"] = config
    return doc


def checkpoint_from_dict(doc: Dict[str, Any]) -> Checkpoint:
    try:
        dims = [int(d) for d in doc["layer_dims"]]
        shapes = [(dims[l], dims[l + 1]) for l in range(len(dims) - 1)]
        weights = [np.asarray(w, dtype=np.float64).reshape(shape)
                   for w, shape in zip(doc["weights"], shapes)]
        biases = [np.asarray(b, dtype=np.float64).reshape(shape[1])
                  for b, shape in zip(doc["biases"], shapes)]
        activation = doc.get("activation", {})
        network = DenseNetwork(
            layer_dims=dims,
            weights=weights,
            biases=biases,
            hidden_activation=activation.get("hidden", "bipolar-selu"),
            output_activation=activation.get("output", "linear"),
        )
        adam = None
        if doc.get("adam"):
            a = doc["adam"]
            param_shapes = [p.shape for p in network.parameters()]
            adam = AdamState(
                first_moment=[np.asarray(m, dtype=np.float64).reshape(s)
                              for m, s in zip(a["first_moment"], param_shapes)],
                second_moment=[np.asarray(v, dtype=np.float64).reshape(s)
                               for v, s in zip(a["second_moment"], param_shapes)],
                step_count=int(a["step_count"]),
                beta1=float(a["beta1"]),
                beta2=float(a["beta2"]),
                epsilon=float(a["epsilon"]),
                learning_rate=float(a["learning_rate"]),
            )
        return Checkpoint(network=network, adam=adam, seed=int(doc["seed"]),
                          epoch=int(doc["epoch"]), config=doc.get("config"))
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, ValidationError) as e:
        raise CheckpointError(f"malformed checkpoint: {e}", field="checkpoint") from e


def save_checkpoint(path: str, network: DenseNetwork, adam: Optional[AdamState], seed: int,
                    epoch: int, config: Optional[Dict[str, Any]] = None) -> str:
    doc = checkpoint_to_dict(network, adam, seed, epoch, config)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp_path = f"{path}.tmp"
    with open(tmp_path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
    os.replace(tmp_path, path)
    logger.info("Checkpoint written", extra={"path": path, "epoch": epoch})
    return path


def load_checkpoint(path: str) -> Checkpoint:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint not found: {path}", field="checkpoint")
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"checkpoint is not valid JSON (line {e.lineno}): {path}",
                              field="checkpoint") from e
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint must be a JSON object", field="checkpoint")
    checkpoint = checkpoint_from_dict(doc)
    logger.debug(f"Loaded checkpoint {path} (epoch {checkpoint.epoch})")
    return checkpoint
