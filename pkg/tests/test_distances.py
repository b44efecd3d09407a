import math

import numpy as np
import pytest

from src.distances import (
    MetricSpec,
    conditioned_distance,
    distance,
    distance_gradient,
    euclidean,
    softmax,
    softmax_cross_entropy,
    squared_euclidean,
)
from utils.validation import ConfigError, DimensionMismatchError, ValidationError


def test_squared_euclidean_examples():
    assert squared_euclidean([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert squared_euclidean([1.0, 2.0], [4.0, 6.0]) == 25.0
    assert euclidean([1.0, 2.0], [4.0, 6.0]) == 5.0


def test_squared_euclidean_matches_loop():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=20), rng.normal(size=20)
    total = 0.0
    for ai, bi in zip(a, b):
        total += (ai - bi) * (ai - bi)
    assert squared_euclidean(a, b) == pytest.approx(total, abs=1e-12)
    assert squared_euclidean(a, b) == squared_euclidean(b, a)


def test_squared_euclidean_rejects_mismatch():
    with pytest.raises(DimensionMismatchError):
        squared_euclidean([1.0, 2.0], [1.0, 2.0, 3.0])


def test_conditioned_distance_examples():
    assert conditioned_distance([3.0, 5.0, 5.0], [1.0, 5.0, 5.0], z_dim=1) == 4.0
    assert conditioned_distance([2.0, 0.0, 0.0], [2.0, 1.0, 1.0], z_dim=1) == 2.0


def test_conditioned_equals_squared_on_concatenation():
    rng = np.random.default_rng(1)
    u, v = rng.normal(size=(30, 5)), rng.normal(size=(30, 5))
    np.testing.assert_allclose(conditioned_distance(u, v, z_dim=2), squared_euclidean(u, v), rtol=1e-12)


def test_conditioned_distance_bad_z_dim():
    with pytest.raises(DimensionMismatchError):
        conditioned_distance([1.0, 2.0], [1.0, 2.0], z_dim=2)


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])
    big = softmax([1000.0, 0.0])
    assert np.all(np.isfinite(big))
    assert big[0] == pytest.approx(1.0) and big[1] == pytest.approx(0.0, abs=1e-300)
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(softmax(v), np.exp(v) / np.exp(v).sum(), atol=1e-12)


def test_softmax_shift_invariance():
    v = np.random.default_rng(2).normal(size=(5, 4))
    p = softmax(v)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax(v + 7.5), p, atol=1e-12)


@pytest.mark.parametrize("k", [2, 3, 7])
def test_cross_entropy_uniform_logits(k):
    y = np.eye(k)[k - 1]
    assert softmax_cross_entropy(y, np.zeros(k)) == pytest.approx(math.log(k), abs=1e-15)


def test_cross_entropy_closed_forms():
    assert softmax_cross_entropy([1.0, 0.0], [10.0, -10.0]) == pytest.approx(math.log1p(math.exp(-20)), rel=1e-5)
    # −log(e⁰ / (e² + e⁰ + e⁰))
    expected = math.log(math.exp(2.0) + 2.0)
    assert softmax_cross_entropy([0.0, 1.0, 0.0], [2.0, 0.0, 0.0]) == pytest.approx(expected, rel=1e-12)


def test_cross_entropy_requires_one_hot():
    with pytest.raises(ValidationError):
        softmax_cross_entropy([0.5, 0.5], [0.0, 0.0])


def test_gradient_examples():
    y = np.array([0.3, -1.2])
    assert np.array_equal(distance_gradient(MetricSpec("sqeuclidean"), y, y), np.zeros(2))
    np.testing.assert_allclose(
        distance_gradient(MetricSpec("softmax_xent"), np.array([1.0, 0.0]), np.array([0.0, 0.0])),
        [-0.5, 0.5],
    )
    assert np.array_equal(distance_gradient(MetricSpec("euclidean"), y, y), np.zeros(2))


@pytest.mark.parametrize("spec", [
    MetricSpec("sqeuclidean"),
    MetricSpec("conditioned", z_dim=1),
    MetricSpec("euclidean"),
    MetricSpec("softmax_xent"),
])
def test_gradient_matches_finite_differences(spec):
    rng = np.random.default_rng(3)
    h = 1e-5
    for _ in range(20):
        y_hat = rng.normal(size=4)
        y = np.eye(4)[rng.integers(4)] if spec.kind == "softmax_xent" else rng.normal(size=4)
        analytic = distance_gradient(spec, y, y_hat)
        numeric = np.empty(4)
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            numeric[k] = (float(distance(spec, y, y_hat + e)) - float(distance(spec, y, y_hat - e))) / (2 * h)
        rel = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-2)
        assert np.max(rel) < 1e-6


def test_metric_spec_validation():
    with pytest.raises(ConfigError):
        MetricSpec("manhattan")
    with pytest.raises(ConfigError):
        MetricSpec("conditioned")
    assert MetricSpec.from_tag("sqeuclidean", z_dim=1).z_dim is None
    assert MetricSpec.from_tag("conditioned", z_dim=1).to_tag() == "conditioned"
    with pytest.raises(DimensionMismatchError):
        MetricSpec("conditioned", z_dim=3).check_dim(3)
