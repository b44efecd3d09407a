"""CSV artifacts of a run: convergence curves, timings, samples and assignments.

All files are comma separated with one header row. Floats are written with 17
significant digits so that reading and re-writing a file reproduces it.
"""

import json
import os
import sys
from typing import Any, Dict, Iterable, Optional

import numpy as np
import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.logger_config import get_logger
from utils.validation import ValidationError
from src.matching import Assignment

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"

CONVERGENCE_CSV = "convergence.csv"
TIMING_CSV = "timing.csv"
RESOLVED_CONFIG = "resolved_config.json"
ASSIGNMENT_CSV = "assignment.csv"
SAMPLES_CSV = "samples.csv"
CHECKPOINT_DIR = "checkpoints"
RUN_LOG = "run.log"
RUN_ARTIFACTS = (CONVERGENCE_CSV, TIMING_CSV, RESOLVED_CONFIG, ASSIGNMENT_CSV, SAMPLES_CSV, CHECKPOINT_DIR,
                 RUN_LOG)


def write_csv(frame: pd.DataFrame, path: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


def read_csv(path: str) -> pd.DataFrame:
    if not os.path.exists(path):
        raise ValidationError(f"CSV file not found: {path}", field="path")
    return pd.read_csv(path, float_precision="round_trip")


def write_history(history, run_dir: str) -> Dict[str, str]:
    """convergence.csv holds the deterministic columns; wall-clock seconds go to timing.csv."""
    frame = history.to_frame(include_seconds=True)
    return {
        "convergence": write_csv(frame.drop(columns=["seconds"]), os.path.join(run_dir, CONVERGENCE_CSV)),
        "timing": write_csv(frame[["epoch", "seconds"]], os.path.join(run_dir, TIMING_CSV)),
    }


def assignment_frame(assignment: Assignment) -> pd.DataFrame:
    return pd.DataFrame({
        "target_index": np.arange(len(assignment), dtype=np.int64),
        "prediction_index": assignment.permutation.astype(np.int64),
        "distance": assignment.per_pair_distance.astype(np.float64),
    })


def write_assignment(assignment: Assignment, path: str) -> str:
    return write_csv(assignment_frame(assignment), path)


def samples_frame(samples: np.ndarray, z_dim: int = 0, labels: Optional[np.ndarray] = None) -> pd.DataFrame:
    """z columns first, then y columns; an integer label column for categorical samples."""
    samples = np.asarray(samples, dtype=np.float64)
    width = samples.shape[1] if samples.ndim == 2 else 0
    columns = [f"z{k}" for k in range(z_dim)] + [f"y{k}" for k in range(width - z_dim)]
    frame = pd.DataFrame(samples.reshape(-1, width) if width else samples.reshape(0, 0), columns=columns)
    if labels is not None:
        frame["label"] = np.asarray(labels, dtype=np.int64)
    return frame


def write_samples(samples: np.ndarray, path: str, z_dim: int = 0,
                  labels: Optional[np.ndarray] = None) -> str:
    return write_csv(samples_frame(samples, z_dim, labels), path)


def read_conditioning_column(path: str, column: Optional[str] = None) -> np.ndarray:
    """z values from a CSV; the first column unless `column` names one."""
    frame = read_csv(path)
    if frame.shape[1] == 0:
        raise ValidationError(f"no columns in {path}", field="condition")
    name = column or frame.columns[0]
    if name not in frame.columns:
        raise ValidationError(f"column '{name}' not in {path}", field="condition")
    return frame[name].to_numpy(dtype=np.float64)


def write_json(doc: Dict[str, Any], path: str) -> str:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def existing_artifacts(run_dir: str, names: Iterable[str] = RUN_ARTIFACTS) -> list:
    return [n for n in names if os.path.exists(os.path.join(run_dir, n))]
