import io
import json
import logging
import os
from dataclasses import replace

import numpy as np
import pytest

from src.distances import MetricSpec, distance
from src.distributions import OriginSpec, TargetSource, TargetSpec, build_target_source
from src.experiment import TrainConfig, parse_experiment
from src.matching import pairwise_costs
from src.network import AdamState, DenseNetwork, init_network
from src.presets import preset_document
from src.trainer import (
    EpochRecord,
    MetricsHistory,
    OrderedPairs,
    evaluate_emd,
    generate,
    matching_predictions,
    network_inputs,
    new_network,
    pmf_error,
    pmf_reference,
    seed_streams,
    supervised_pass,
    train,
    train_epoch,
)
from utils.logger_config import JsonFormatter, get_logger
from utils.validation import DimensionMismatchError, ValidationError

SQ = MetricSpec("sqeuclidean")


def _config(**overrides):
    values = dict(target=TargetSpec(kind="gmm3"), matching_batch=40, supervised_minibatch=10, epochs=3,
                  hidden_dims=(8, 8), seed=0)
    values.update(overrides)
    return TrainConfig(**values)


def _constant_network(value, input_dim):
    value = np.asarray(value, dtype=float)
    return DenseNetwork([input_dim, value.size], [np.zeros((input_dim, value.size))], [value.copy()])


# ---------------------------------------------------------------------------
# Epoch mechanics
# ---------------------------------------------------------------------------
def test_zero_loss_fixed_point():
    target = np.array([1.5, -0.5])
    config = _config(hidden_dims=(), origin=OriginSpec(dim=2, bernoulli_p=0.0))
    source = TargetSource.from_records([target])
    net = _constant_network(target, 2)
    adam = AdamState.for_parameters(net.parameters())

    outcome = train_epoch(net, adam, config, source, np.random.default_rng(0))
    assert outcome.record.matched_cost_sum == 0.0
    assert all(np.array_equal(p, q) for p, q in zip(net.parameters(), outcome.network.parameters()))
    assert outcome.adam.step_count == 4


def test_ordered_pairs_unconditioned():
    config = _config()
    source = TargetSource.from_records(np.random.default_rng(1).normal(size=(100, 2)))
    net, adam = new_network(config, source)
    outcome = train_epoch(net, adam, config, source, np.random.default_rng(2))
    pairs = outcome.pairs
    assert len(pairs) == config.matching_batch
    assert np.array_equal(pairs.targets, outcome.target_batch)
    # every origin sample is used exactly once as an input
    assert np.array_equal(np.sort(pairs.inputs, axis=0), np.sort(outcome.origin_batch, axis=0))
    assert np.array_equal(pairs.inputs, outcome.origin_batch[outcome.assignment.permutation])


def test_ordered_pairs_carry_target_z():
    config = _config(target=TargetSpec(kind="noisy_sinusoid", conditioned=True),
                     metric=MetricSpec("conditioned", z_dim=1))
    source = build_target_source(config.target)
    net, adam = new_network(config, source)
    assert net.layer_dims == [7, 8, 8, 2]
    outcome = train_epoch(net, adam, config, source, np.random.default_rng(3))
    pairs = outcome.pairs
    assert np.array_equal(pairs.inputs[:, :1], pairs.targets[:, :1])
    assert np.array_equal(pairs.inputs[:, 1:], outcome.origin_batch[outcome.assignment.permutation])


def test_matched_cost_recomputes_from_batches():
    config = _config(matching="alternating")
    source = TargetSource.from_records(np.random.default_rng(4).normal(size=(60, 2)))
    net, adam = new_network(config, source)
    rng = np.random.default_rng(5)
    outcome = train_epoch(net, adam, config, source, rng)

    outputs = net.predict(outcome.origin_batch)
    costs = pairwise_costs(outcome.target_batch, outputs, SQ)
    perm = outcome.assignment.permutation
    recomputed = float(np.sum(costs[np.arange(len(perm)), perm]))
    assert outcome.record.matched_cost_sum == pytest.approx(recomputed, rel=1e-12)
    assert outcome.record.matched_cost_mean == pytest.approx(recomputed / config.matching_batch, rel=1e-12)

    # replaying the same seed gives the same assignment
    again = train_epoch(net, adam, config, source, np.random.default_rng(5))
    assert np.array_equal(again.assignment.permutation, perm)


def test_conditioned_matching_uses_input_z():
    z = np.array([[1.0], [2.0]])
    outputs = np.array([[9.0, 0.3], [9.0, 0.4]])
    np.testing.assert_array_equal(matching_predictions(outputs, z), [[1.0, 0.3], [2.0, 0.4]])
    np.testing.assert_array_equal(network_inputs(np.zeros((2, 2)), z), [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    assert matching_predictions(outputs, None) is outputs


def test_supervised_pass_reduces_pair_loss():
    rng = np.random.default_rng(6)
    net = init_network([4, 8, 2], seed=6)
    pairs = OrderedPairs(inputs=rng.random((20, 4)), targets=rng.normal(size=(20, 2)) + 2.0)
    adam = AdamState.for_parameters(net.parameters(), learning_rate=1e-4)

    def pair_loss(n):
        return float(np.sum(distance(SQ, pairs.targets, n.predict(pairs.inputs))))

    before = pair_loss(net)
    trained, adam = supervised_pass(net, adam, pairs, SQ, minibatch=20, clip_bound=1e9, rng=rng)
    assert pair_loss(trained) < before
    assert adam.step_count == 1


def test_train_epoch_checks_dimensions():
    config = _config()
    source = TargetSource.from_records(np.zeros((5, 2)))
    with pytest.raises(DimensionMismatchError):
        train_epoch(init_network([5, 2], seed=0), None, config, source, np.random.default_rng(0))
    conditioned = TargetSource.from_records(np.zeros((5, 2)), z_dim=1)
    with pytest.raises(DimensionMismatchError):
        train_epoch(init_network([6, 2], seed=0), None, config, conditioned, np.random.default_rng(0))


def test_empty_data_source_rejected():
    config = _config()
    source = TargetSource(lambda n, rng: np.empty((0, 2)), dim=2)
    net, adam = new_network(config, source)
    with pytest.raises(ValidationError):
        train_epoch(net, adam, config, source, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------
def test_zero_epochs_returns_initial_network():
    config = _config(epochs=0, seed=4)
    result = train(config)
    initial = init_network(config.layer_dims(2), seed=4)
    assert len(result.history) == 0
    assert all(np.array_equal(p, q) for p, q in zip(initial.parameters(), result.network.parameters()))


def test_training_is_deterministic():
    config = _config(epochs=3, emd_sample_size=30, emd_interval=2)
    a = train(config)
    b = train(config)
    frame_a = a.history.to_frame(include_seconds=False)
    frame_b = b.history.to_frame(include_seconds=False)
    assert frame_a.equals(frame_b)
    assert all(np.array_equal(p, q) for p, q in zip(a.network.parameters(), b.network.parameters()))
    assert np.isnan(frame_a["emd"].iloc[0]) and not np.isnan(frame_a["emd"].iloc[1])


def test_training_start_is_logged_with_experiment_name():
    stream = io.StringIO()
    handler = logging.StreamHandler(stream)
    handler.setFormatter(JsonFormatter())
    logger = get_logger("src.trainer")
    logger.addHandler(handler)
    try:
        train(_config(epochs=1, name="tiny-gmm3"))
    finally:
        logger.removeHandler(handler)
    records = [json.loads(line) for line in stream.getvalue().splitlines()]
    started = [r for r in records if r["message"] == "Training started"]
    assert started[0]["experiment"] == "tiny-gmm3"
    assert any(r.get("epoch") == 1 for r in records)


def test_history_records_each_epoch():
    seen = []
    result = train(_config(epochs=3), on_epoch=lambda outcome: seen.append(outcome.record.epoch))
    assert seen == [1, 2, 3]
    assert [r.epoch for r in result.history] == [1, 2, 3]
    assert result.last_epoch.record is result.history[-1]
    assert all(r.matched_cost_mean == pytest.approx(r.matched_cost_sum / 40) for r in result.history)
    assert all(r.seconds > 0 for r in result.history)


def test_checkpoints_every_interval(tmp_path):
    train(_config(epochs=4), checkpoint_dir=str(tmp_path), checkpoint_interval=2)
    assert sorted(os.listdir(tmp_path)) == ["checkpoint_epoch00002.json", "checkpoint_epoch00004.json"]


def test_categorical_training_logs_pmf_error():
    config = _config(target=TargetSpec(kind="multinoulli", probabilities=[0.2, 0.3, 0.5]),
                     metric=MetricSpec("softmax_xent"), epochs=2, pmf_sample_size=200)
    result = train(config)
    assert all(0.0 <= r.pmf_error <= 1.0 for r in result.history)


def test_history_frame_columns():
    history = MetricsHistory()
    history.append(EpochRecord(epoch=1, matched_cost_sum=4.0, matched_cost_mean=0.1, seconds=0.5))
    assert list(history.to_frame().columns) == ["epoch", "matched_cost_sum", "matched_cost_mean", "emd",
                                                "pmf_error", "seconds"]
    assert "seconds" not in history.to_frame(include_seconds=False).columns
    assert history.matched_cost_means().tolist() == [0.1]


def test_seed_streams_are_independent():
    train_rng, eval_rng = seed_streams(3)
    again, _ = seed_streams(3)
    assert train_rng.random() == again.random()
    assert seed_streams(3)[0].random() != eval_rng.random()


# ---------------------------------------------------------------------------
# Generation and evaluation
# ---------------------------------------------------------------------------
def test_generate_unconditioned():
    config = _config()
    net = init_network(config.layer_dims(2), seed=0)
    batch = generate(net, config, 25, np.random.default_rng(0))
    assert batch.outputs.shape == (25, 2) and batch.labels is None
    assert generate(net, config, 0, np.random.default_rng(0)).outputs.shape == (0, 2)
    with pytest.raises(ValidationError):
        generate(net, config, 5, np.random.default_rng(0), conditioning=[1.0] * 5)


def test_generate_conditioned_attaches_requested_z():
    config = _config(target=TargetSpec(kind="noisy_sinusoid", conditioned=True),
                     metric=MetricSpec("conditioned", z_dim=1))
    net = init_network(config.layer_dims(2), seed=0)
    z = np.repeat(np.arange(10.0), 10)
    batch = generate(net, config, None, np.random.default_rng(0), conditioning=z)
    assert batch.outputs.shape == (100, 2)
    assert np.array_equal(batch.conditioning[:, 0], z)
    with pytest.raises(ValidationError):
        generate(net, config, 5, np.random.default_rng(0))
    with pytest.raises(DimensionMismatchError):
        generate(net, config, 7, np.random.default_rng(0), conditioning=z)


def test_generate_categorical_labels():
    config = _config(target=TargetSpec(kind="multinoulli", probabilities=[0.5, 0.5]),
                     metric=MetricSpec("softmax_xent"))
    net = init_network(config.layer_dims(2), seed=1)
    batch = generate(net, config, 1000, np.random.default_rng(1))
    assert batch.labels.shape == (1000,)
    assert set(np.unique(batch.labels)) <= {0, 1}
    assert np.array_equal(batch.labels, np.argmax(batch.outputs, axis=1))


def test_pmf_error_examples():
    assert pmf_error([0, 1, 1, 0], [0.5, 0.5]) == 0.0
    assert pmf_error([0] * 600 + [1] * 400, [0.5, 0.5]) == pytest.approx(0.1)
    with pytest.raises(ValidationError):
        pmf_error([0, 2], [0.5, 0.5])


def test_pmf_reference_matches_binomial_spread():
    # mean |f − 0.5| of a 1000-draw fair coin is sqrt(0.25/1000)·sqrt(2/π)
    expected = np.sqrt(0.25 / 1000) * np.sqrt(2 / np.pi)
    assert pmf_reference([0.5, 0.5], 1000, 10000, np.random.default_rng(0)) == pytest.approx(expected, rel=0.05)


def test_emd_zero_for_replicated_target():
    target = np.array([2.0, -1.0])
    config = _config(hidden_dims=())
    net = _constant_network(target, 6)
    estimate = evaluate_emd(net, config, TargetSource.from_records([target]), 100, np.random.default_rng(0))
    assert estimate.value == 0.0 and estimate.method == "hungarian"


def test_emd_size_cap():
    config = _config()
    source = TargetSource.from_records(np.zeros((3, 2)))
    net = init_network(config.layer_dims(2), seed=0)
    with pytest.raises(ValidationError):
        evaluate_emd(net, config, source, 2001, np.random.default_rng(0))


# ---------------------------------------------------------------------------
# Experiment-scale checks (run with `pytest -m slow`)
# ---------------------------------------------------------------------------
def _preset_config(name, **overrides):
    doc = preset_document(name)
    doc.update(overrides)
    return parse_experiment(doc).train


@pytest.mark.slow
def test_gmm3_convergence():
    config = _preset_config("gmm3", emd_sample_size=0, seed=0)
    source = build_target_source(config.target)
    initial, _ = new_network(config, source)
    result = train(config, source)
    costs = result.history.matched_cost_means()
    assert costs[-1] <= 0.25 * costs[0]

    rng = np.random.default_rng(123)
    before = evaluate_emd(initial, config, source, 500, rng).value
    after = evaluate_emd(result.network, config, source, 500, rng).value
    assert after * 4 <= before


@pytest.mark.slow
def test_conditioned_sinusoid():
    config = _preset_config("sinusoid-conditioned", seed=0)
    result = train(config)
    rng = np.random.default_rng(7)
    z = rng.uniform(1.0, 5.0, size=500)
    outputs = generate(result.network, config, None, rng, conditioning=z).outputs
    assert np.mean(np.abs(outputs[:, 1] - np.sin(z))) <= 3 * 0.1
    assert np.mean(np.abs(outputs[:, 0] - z)) <= 0.05


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_categorical_reaches_reference(seed):
    config = _preset_config("multinoulli", seed=seed)
    reference = pmf_reference(config.target.probabilities, 1000, 10000, np.random.default_rng(seed))
    result = train(config)
    assert min(r.pmf_error for r in result.history) < reference


@pytest.mark.slow
@pytest.mark.skipif(not os.getenv("ICPGEN_MNIST_DIR"), reason="ICPGEN_MNIST_DIR not set")
def test_reduced_mnist():
    config = _preset_config("mnist-conditioned", epochs=20, matching_batch=2000, seed=0)
    config = replace(config, target=replace(config.target, subset=10000))
    result = train(config)
    costs = result.history.matched_cost_means()
    assert costs[-1] <= 0.5 * costs[0]
    z = np.repeat(np.arange(10.0), 10)
    outputs = generate(result.network, config, None, np.random.default_rng(0), conditioning=z).outputs
    assert np.mean(np.abs(outputs[:, 0] - z) <= 0.25) >= 0.9
