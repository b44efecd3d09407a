"""
Command-line front end: train, sample, eval and presets.

    python -m src.cli train --preset gmm3 --seed 1 --out runs/gmm3
    python -m src.cli sample --checkpoint runs/gmm3/checkpoints/final.json --count 2000 --out gmm3.csv
    python -m src.cli eval --checkpoint runs/gmm3/checkpoints/final.json --sample-size 500
    python -m src.cli presets

Exit status is 0 on success, 2 for invalid configs, checkpoints or
arguments, and 1 for any other failure.
"""

import argparse
import json
import os
import shutil
import sys
from dataclasses import replace
from typing import List, Optional

import numpy as np

sys.path.append(os.path.dirname(os.path.dirname(__file__)))
from utils.decorators import safe_execution
from utils.logger_config import attach_file_handler, detach_handler, get_logger
from utils.run_context import clear_run_id, set_run_id
from utils.validation import ValidationError
from src import artifacts
from src.checkpoint import load_checkpoint, save_checkpoint
from src.distances import METRIC_KINDS, MetricSpec
from src.distributions import build_target_source
from src.experiment import ExperimentConfig, TrainConfig, load_config_document, parse_experiment
from src.presets import preset_document, preset_names
from src.trainer import evaluate_emd, generate, matching_predictions, pmf_error, pmf_reference, train

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_INVALID = 2

FINAL_CHECKPOINT = "final.json"
MNIST_LABELS = 10


def _config_document(args) -> dict:
    if args.config and args.preset:
        raise ValidationError("give either --config or --preset, not both", field="config")
    if args.config:
        return load_config_document(args.config)
    if args.preset:
        return preset_document(args.preset)
    raise ValidationError("one of --config or --preset is required", field="config")


def resolve_experiment(args) -> ExperimentConfig:
    """Config document plus command-line overrides."""
    experiment = parse_experiment(_config_document(args))
    return experiment.with_overrides(seed=args.seed, epochs=getattr(args, "epochs", None),
                                     output_dir=args.out)


def prepare_run_dir(run_dir: str, overwrite: bool) -> None:
    existing = artifacts.existing_artifacts(run_dir)
    if existing and not overwrite:
        raise ValidationError(
            f"{run_dir} already holds run artifacts ({', '.join(existing)}); pass --overwrite to replace them",
            field="out",
        )
    for name in existing:
        path = os.path.join(run_dir, name)
        if os.path.isdir(path):
            shutil.rmtree(path)
        else:
            os.remove(path)
    os.makedirs(run_dir, exist_ok=True)


def _checkpoint_config(checkpoint) -> TrainConfig:
    if not checkpoint.config:
        raise ValidationError("checkpoint carries no experiment config", field="checkpoint")
    return parse_experiment(checkpoint.config).train


def parse_conditioning(spec: str, config: TrainConfig, column: Optional[str] = None) -> np.ndarray:
    """
    "each:k" asks for k samples of every discrete condition value (the ten
    digit labels); anything else is a CSV file of z values.
    """
    if spec.startswith("each:"):
        if config.target.kind != "mnist":
            raise ValidationError("'each:k' needs a target with discrete condition values",
                                  field="condition")
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError as e:
            raise ValidationError(f"bad repetition count in '{spec}'", field="condition") from e
        if k < 0:
            raise ValidationError("repetition count must be nonnegative", field="condition")
        labels = np.repeat(np.arange(MNIST_LABELS, dtype=np.float64), k)
        return labels / 9.0 if config.target.normalize_labels else labels
    return artifacts.read_conditioning_column(spec, column)


@safe_execution()
def cmd_train(args) -> int:
    experiment = resolve_experiment(args)
    run_dir = experiment.output_dir
    prepare_run_dir(run_dir, args.overwrite)
    handler = attach_file_handler(os.path.join(run_dir, artifacts.RUN_LOG))
    try:
        resolved = experiment.to_dict()
        artifacts.write_json(resolved, os.path.join(run_dir, artifacts.RESOLVED_CONFIG))
        config = experiment.train
        checkpoint_dir = os.path.join(run_dir, artifacts.CHECKPOINT_DIR)
        result = train(config, checkpoint_dir=checkpoint_dir,
                       checkpoint_interval=experiment.checkpoint_interval,
                       checkpoint_config=resolved)
        save_checkpoint(os.path.join(checkpoint_dir, FINAL_CHECKPOINT), result.network, result.adam,
                        config.seed, len(result.history), resolved)
        artifacts.write_history(result.history, run_dir)

        if experiment.export_assignments and result.last_epoch is not None:
            artifacts.write_assignment(result.last_epoch.assignment,
                                       os.path.join(run_dir, artifacts.ASSIGNMENT_CSV))
        if experiment.export_samples:
            rng = np.random.default_rng(config.seed)
            conditioning = None
            if config.conditioned:
                source = build_target_source(config.target)
                conditioning = source.sample(experiment.export_samples, rng)[:, :config.z_dim]
            batch = generate(result.network, config, experiment.export_samples, rng, conditioning)
            samples = matching_predictions(batch.outputs, batch.conditioning)
            artifacts.write_samples(samples, os.path.join(run_dir, artifacts.SAMPLES_CSV),
                                    z_dim=config.z_dim, labels=batch.labels)
    finally:
        detach_handler(handler)

    logger.info("Training run finished", extra={"run_dir": run_dir, "epochs": len(result.history)})
    print(run_dir)
    return EXIT_OK


@safe_execution()
def cmd_sample(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    config = _checkpoint_config(checkpoint)
    out = args.out or "samples.csv"
    if os.path.exists(out) and not args.overwrite:
        raise ValidationError(f"{out} exists; pass --overwrite to replace it", field="out")

    conditioning = None
    count = args.count
    if config.conditioned:
        if not args.condition:
            raise ValidationError("conditioned checkpoint needs --condition", field="condition")
        conditioning = parse_conditioning(args.condition, config, args.column)
        count = None
    elif args.condition:
        raise ValidationError("unconditioned checkpoint does not accept --condition", field="condition")

    seed = checkpoint.seed if args.seed is None else args.seed
    batch = generate(checkpoint.network, config, count, np.random.default_rng(seed), conditioning)
    # z columns carry the requested conditioning, not the network's echo of it
    samples = matching_predictions(batch.outputs, batch.conditioning)
    artifacts.write_samples(samples, out, z_dim=config.z_dim, labels=batch.labels)
    logger.info("Samples written", extra={"path": out, "rows": int(batch.outputs.shape[0])})
    print(out)
    return EXIT_OK


@safe_execution()
def cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    config = _checkpoint_config(checkpoint)
    if args.config or args.preset:
        # evaluate against another target of the same shape
        other = parse_experiment(_config_document(args)).train
        config = replace(config, target=other.target, metric=other.metric)
    if args.metric:
        config = replace(config, metric=MetricSpec.from_tag(args.metric, z_dim=config.z_dim or None))

    seed = checkpoint.seed if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    source = build_target_source(config.target)
    estimate = evaluate_emd(checkpoint.network, config, source, args.sample_size, rng, approx=args.approx)
    report = estimate.as_dict()
    report["epoch"] = checkpoint.epoch
    if source.probabilities is not None:
        generated = generate(checkpoint.network, config, config.pmf_sample_size, rng)
        report["pmf_error"] = pmf_error(generated.labels, source.probabilities)
        report["pmf_reference"] = pmf_reference(source.probabilities, config.pmf_sample_size, rng=rng)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icpgen", description="Iterative closest points training for generative networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="experiment JSON document")
        p.add_argument("--preset", choices=preset_names(), help="named experiment")
        p.add_argument("--seed", type=int, help="override the configured seed")

    p_train = sub.add_parser("train", help="run a training experiment")
    add_config_flags(p_train)
    p_train.add_argument("--epochs", type=int, help="override the configured epoch count")
    p_train.add_argument("--out", help="run directory")
    p_train.add_argument("--overwrite", action="store_true", help="replace existing run artifacts")
    p_train.set_defaults(func=cmd_train)

    p_sample = sub.add_parser("sample", help="generate samples from a checkpoint")
    p_sample.add_argument("--checkpoint", required=True)
    p_sample.add_argument("--count", type=int, default=1000)
    p_sample.add_argument("--condition", help="'each:k' or a CSV file of z values")
    p_sample.add_argument("--column", help="z column of the --condition CSV")
    p_sample.add_argument("--seed", type=int)
    p_sample.add_argument("--out", help="output CSV")
    p_sample.add_argument("--overwrite", action="store_true")
    p_sample.set_defaults(func=cmd_sample)

    p_eval = sub.add_parser("eval", help="empirical EMD (and pmf error) of a checkpoint")
    add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--sample-size", type=int, default=500)
    p_eval.add_argument("--metric", choices=METRIC_KINDS)
    p_eval.add_argument("--approx", action="store_true", help="greedy upper bound instead of the exact assignment")
    p_eval.set_defaults(func=cmd_eval)

    p_presets = sub.add_parser("presets", help="list named experiments")
    p_presets.set_defaults(func=cmd_presets)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    set_run_id()
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        clear_run_id()


if __name__ == "__main__":
    sys.exit(main())
