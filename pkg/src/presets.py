"""Named experiment documents for the low-dimensional, MNIST and categorical runs.

Each preset is a plain config dictionary in the same shape a JSON config file
has; `preset_document` returns a deep copy so callers can edit it freely.
"""

import copy
import os
import sys
from typing import Any, Dict, List

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.validation import ConfigError

MNIST_DIR = os.getenv("ICPGEN_MNIST_DIR", os.path.join("data", "mnist"))

_LOW_DIM = {
    "matching": "greedy",
    "matching_batch": 500,
    "supervised_minibatch": 100,
    "hidden_dims": [50, 50, 50],
    "origin": {"dim": 6},
}

PRESETS: Dict[str, Dict[str, Any]] = {
    "gmm3": {
        **_LOW_DIM,
        "epochs": 50,
        "target": {"kind": "gmm3"},
        "emd_sample_size": 500,
        "emd_interval": 10,
    },
    "gmm3-conditioned": {
        **_LOW_DIM,
        "epochs": 50,
        "conditioned": True,
        "metric": "conditioned",
        "target": {"kind": "gmm3"},
    },
    "sinusoid-conditioned": {
        **_LOW_DIM,
        "epochs": 100,
        "conditioned": True,
        "metric": "conditioned",
        "target": {"kind": "noisy_sinusoid"},
    },
    # one Bernoulli and one uniform input dimension
    "sinusoid-mixed2d": {
        **_LOW_DIM,
        "epochs": 100,
        "origin": {"dim": 2},
        "target": {"kind": "noisy_sinusoid"},
    },
    "swissroll": {
        **_LOW_DIM,
        "epochs": 100,
        "origin": {"dim": 2, "mixed": False},
        "target": {"kind": "swiss_roll"},
    },
    "mnist-conditioned": {
        "matching": "greedy",
        "matching_batch": 10000,
        "supervised_minibatch": 100,
        "epochs": 100,
        "hidden_dims": [300, 300, 300],
        "origin": {"dim": 20},
        "conditioned": True,
        "metric": "conditioned",
        "target": {
            "kind": "mnist",
            "images_path": os.path.join(MNIST_DIR, "train-images-idx3-ubyte"),
            "labels_path": os.path.join(MNIST_DIR, "train-labels-idx1-ubyte"),
        },
    },
    "mnist-smallbatch": {
        "matching": "greedy",
        "matching_batch": 100,
        "supervised_minibatch": 100,
        "epochs": 1000,
        "hidden_dims": [300, 300, 300],
        "origin": {"dim": 20},
        "conditioned": True,
        "metric": "conditioned",
        "target": {
            "kind": "mnist",
            "images_path": os.path.join(MNIST_DIR, "train-images-idx3-ubyte"),
            "labels_path": os.path.join(MNIST_DIR, "train-labels-idx1-ubyte"),
        },
    },
    "multinoulli": {
        **_LOW_DIM,
        "epochs": 200,
        "origin": {"dim": 20},
        "metric": "softmax_xent",
        # per-unit clipping at 0.1 breaks the zero sum of softmax(y_hat) - y and collapses the pmf
        "clip_bound": 10.0,
        "target": {"kind": "multinoulli", "probabilities": [0.1, 0.15, 0.2, 0.25, 0.3]},
        "pmf_sample_size": 1000,
    },
}


def preset_names() -> List[str]:
    return sorted(PRESETS)


def preset_document(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(preset_names())}",
                          field="preset")
    doc = copy.deepcopy(PRESETS[name])
    doc["name"] = name
    doc.setdefault("output_dir", os.path.join("runs", name))
    return doc
