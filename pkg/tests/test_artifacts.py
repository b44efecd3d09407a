import os

import numpy as np
import pandas as pd
import pytest

from src import artifacts
from src.matching import Assignment
from src.trainer import EpochRecord, MetricsHistory
from utils.validation import ValidationError


def _history():
    history = MetricsHistory()
    history.append(EpochRecord(1, 12.5, 0.125, emd=None, seconds=0.25))
    history.append(EpochRecord(2, 0.1 + 0.2, 0.1 / 3, emd=1.0 / 7, seconds=0.5))
    return history


def test_history_split_between_files(tmp_path):
    paths = artifacts.write_history(_history(), str(tmp_path))
    convergence = pd.read_csv(paths["convergence"])
    timing = pd.read_csv(paths["timing"])
    assert "seconds" not in convergence.columns
    assert list(timing.columns) == ["epoch", "seconds"]
    assert timing["seconds"].tolist() == [0.25, 0.5]
    assert np.isnan(convergence["emd"].iloc[0])


def test_csv_rewrite_is_byte_stable(tmp_path):
    first = artifacts.write_history(_history(), str(tmp_path))["convergence"]
    again = str(tmp_path / "again.csv")
    artifacts.write_csv(artifacts.read_csv(first), again)
    assert open(first, "rb").read() == open(again, "rb").read()


def test_floats_survive_the_round_trip(tmp_path):
    values = np.random.default_rng(0).normal(size=(6, 2))
    path = artifacts.write_samples(values, str(tmp_path / "s.csv"))
    np.testing.assert_array_equal(artifacts.read_csv(path).to_numpy(), values)


def test_assignment_columns(tmp_path):
    a = Assignment(np.array([2, 0, 1]), np.array([0.5, 1.5, 2.0]), 4.0)
    path = artifacts.write_assignment(a, str(tmp_path / "a.csv"))
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["target_index", "prediction_index", "distance"]
    assert frame["prediction_index"].tolist() == [2, 0, 1]
    assert frame["distance"].sum() == pytest.approx(a.total_cost)


def test_samples_frame_columns():
    frame = artifacts.samples_frame(np.zeros((3, 4)), z_dim=1)
    assert list(frame.columns) == ["z0", "y0", "y1", "y2"]
    labelled = artifacts.samples_frame(np.zeros((2, 3)), labels=np.array([2, 0]))
    assert list(labelled.columns) == ["y0", "y1", "y2", "label"]
    assert labelled["label"].dtype == np.int64


def test_empty_samples_write_header_only(tmp_path):
    path = artifacts.write_samples(np.empty((0, 2)), str(tmp_path / "empty.csv"))
    assert open(path).read() == "y0,y1\n"


def test_conditioning_column(tmp_path):
    path = tmp_path / "z.csv"
    path.write_text("a,b\n1,0.5\n2,0.25\n")
    assert artifacts.read_conditioning_column(str(path)).tolist() == [1.0, 2.0]
    assert artifacts.read_conditioning_column(str(path), "b").tolist() == [0.5, 0.25]
    with pytest.raises(ValidationError):
        artifacts.read_conditioning_column(str(path), "c")
    with pytest.raises(ValidationError):
        artifacts.read_conditioning_column(str(tmp_path / "missing.csv"))


def test_existing_artifacts(tmp_path):
    assert artifacts.existing_artifacts(str(tmp_path)) == []
    artifacts.write_json({"b": 1, "a": 2}, os.path.join(str(tmp_path), artifacts.RESOLVED_CONFIG))
    os.makedirs(tmp_path / artifacts.CHECKPOINT_DIR)
    assert artifacts.existing_artifacts(str(tmp_path)) == [artifacts.RESOLVED_CONFIG, artifacts.CHECKPOINT_DIR]
    text = (tmp_path / artifacts.RESOLVED_CONFIG).read_text()
    assert text.index('"a"') < text.index('"b"')
