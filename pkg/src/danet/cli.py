"""Command-line entry point: train, gradcheck, and report subcommands.

Experiments are described by an :class:`ExperimentConfig` assembled from
three layers with fixed precedence: command-line flags beat values from the
JSON config file, which beat built-in defaults. The config file holds two
optional sections::

    {
      "model": {"num_stages": 2, "window_size": 16, ...},
      "train": {"epochs": 50, "seed": 3, ...}
    }

Section keys mirror the ModelConfig / TrainConfig fields. ``num_classes``
may not appear in the file: it always comes from the training labels.

A training run writes three artifacts under ``<out>/<dataset>_seed<seed>/``:
``checkpoint.json`` (weights), ``history.json`` (per-epoch loss/accuracy),
and ``eval.json`` (one test-accuracy fragment that ``report`` can merge).
Reruns with the same inputs produce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from danet.data import (
    ParseError,
    SchemaError,
    VocabularyError,
    pad_to_multiple,
    parse_ts_file,
    zscore_normalize,
)
from danet.evaluation import build_report
from danet.gradcheck import run_gradcheck
from danet.network import (
    ModelConfig,
    padded_sequence_length,
    save_checkpoint,
)
from danet.tensor import ShapeError
from danet.training import TrainConfig, evaluate_split, train_model

__all__ = ["ExperimentConfig", "cmd_train", "cmd_gradcheck", "cmd_report", "main"]

METHOD_NAME = "DA-Net"

# fields whose values the config file may set, with the types they must have
_MODEL_FIELDS = {
    "num_stages": int,
    "merge_factor": int,
    "window_size": int,
    "channel_schedule": tuple,
    "heads_schedule": tuple,
    "blocks_schedule": tuple,
    "top_u_factor": float,
    "mlp_ratio": int,
    "reduction_width": int,
}
_TRAIN_FIELDS = {
    "batch_size": int,
    "epochs": int,
    "alpha": float,
    "beta1": float,
    "beta2": float,
    "epsilon": float,
    "seed": int,
}


class ConfigError(ValueError):
    """A config file or override value is malformed or of the wrong type."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one command invocation needs, after precedence merging."""

    data_dir: str = "data"
    dataset: str = ""
    model_overrides: dict = field(default_factory=dict)
    train_overrides: dict = field(default_factory=dict)
    out_dir: str = "runs"
    tolerance: float = 1e-4


def _check_section(section: str, overrides: dict, fields: dict) -> dict:
    """Validate one config section against its known fields and types."""
    if not isinstance(overrides, dict):
        raise ConfigError(f"config section {section!r} must be an object")
    cleaned = {}
    for key, value in overrides.items():
        if key not in fields:
            known = ", ".join(sorted(fields))
            raise ConfigError(f"{section}.{key}: unknown field (known: {known})")
        want = fields[key]
        if want is tuple:
            if not isinstance(value, (list, tuple)) or not value or any(
                isinstance(v, bool) or not isinstance(v, int) for v in value
            ):
                raise ConfigError(f"{section}.{key}: expected a list of ints, got {value!r}")
            cleaned[key] = tuple(value)
        elif want is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
            cleaned[key] = float(value)
        else:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{section}.{key}: expected an int, got {value!r}")
            cleaned[key] = value
    return cleaned


def load_config_file(path: str) -> tuple[dict, dict]:
    """Read and type-check a JSON config file's model/train sections."""
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        payload = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{config_path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{config_path}: top level must be an object")
    unknown = set(payload) - {"model", "train"}
    if unknown:
        raise ConfigError(f"{config_path}: unknown sections {sorted(unknown)}")
    if "num_classes" in payload.get("model", {}):
        raise ConfigError("model.num_classes comes from the dataset labels; remove it")
    model = _check_section("model", payload.get("model", {}), _MODEL_FIELDS)
    train = _check_section("train", payload.get("train", {}), _TRAIN_FIELDS)
    return model, train


def _json_dump(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def cmd_train(config: ExperimentConfig) -> int:
    """Train on one dataset and write checkpoint/history/eval artifacts."""
    if not config.dataset:
        print("error: --dataset is required for train", file=sys.stderr)
        return 1
    dataset_dir = Path(config.data_dir) / config.dataset
    train_path = dataset_dir / f"{config.dataset}_TRAIN.ts"
    test_path = dataset_dir / f"{config.dataset}_TEST.ts"
    for path in (train_path, test_path):
        if not path.is_file():
            print(f"error: missing dataset file: {path}", file=sys.stderr)
            return 1

    # resolve both configs before touching data or disk so type errors
    # cannot leave partial artifacts behind
    train_cfg = TrainConfig(**_check_section("train", config.train_overrides, _TRAIN_FIELDS))

    train_ds = parse_ts_file(str(train_path))
    test_ds = parse_ts_file(str(test_path))
    if train_ds.class_names != test_ds.class_names:
        print(
            f"error: label vocabulary differs between {train_path} and {test_path}",
            file=sys.stderr,
        )
        return 1

    model_kwargs = _check_section("model", config.model_overrides, _MODEL_FIELDS)
    model_cfg = ModelConfig(num_classes=train_ds.n_classes, **model_kwargs)

    train_ds, stats = zscore_normalize(train_ds)
    test_ds, _ = zscore_normalize(test_ds, stats)
    target = padded_sequence_length(
        max(train_ds.n_timestamps, test_ds.n_timestamps), model_cfg
    )
    train_ds = pad_to_multiple(train_ds, target)
    test_ds = pad_to_multiple(test_ds, target)

    params, history = train_model(train_ds, train_cfg, model_cfg)
    test_acc, _ = evaluate_split(params, test_ds, model_cfg, train_cfg.batch_size)

    run_dir = Path(config.out_dir) / f"{config.dataset}_seed{train_cfg.seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(str(run_dir / "checkpoint.json"), model_cfg, params)
    _json_dump(run_dir / "history.json", history)
    _json_dump(
        run_dir / "eval.json",
        {
            "method": METHOD_NAME,
            "dataset": train_ds.name,
            "n_classes": train_ds.n_classes,
            "seed": train_cfg.seed,
            "accuracy": test_acc,
        },
    )
    print(f"test accuracy {test_acc:.4f}")
    return 0


def cmd_gradcheck(config: ExperimentConfig) -> int:
    """Finite-difference check of every layer; 0 iff all within tolerance."""
    return run_gradcheck(tolerance=config.tolerance)


def _load_fragment(path: Path) -> dict:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("method", "dataset", "n_classes", "accuracy"):
        if key not in payload:
            raise ConfigError(f"{path}: fragment missing field {key!r}")
    acc = payload["accuracy"]
    if isinstance(acc, bool) or not isinstance(acc, (int, float)) or not 0.0 <= acc <= 1.0:
        raise ConfigError(f"{path}: accuracy {acc!r} outside [0, 1]")
    return payload


def cmd_report(result_dir: str, out_dir: str | None = None) -> int:
    """Merge eval fragments under ``result_dir`` into one comparison table.

    Fragments are ``*.json`` files directly in the directory (except a
    previously written ``report.json``) plus ``*/eval.json`` one level down.
    Repeated (method, dataset) pairs, e.g. reruns with different seeds, are
    averaged.
    """
    root = Path(result_dir)
    if not root.is_dir():
        print(f"error: not a directory: {root}", file=sys.stderr)
        return 1
    paths = sorted(p for p in root.glob("*.json") if p.name != "report.json")
    paths += sorted(root.glob("*/eval.json"))
    if not paths:
        print(f"error: no evaluation fragments found in {root}", file=sys.stderr)
        return 1

    accs: dict[str, dict[str, list[float]]] = {}
    class_counts: dict[str, int] = {}
    for path in paths:
        frag = _load_fragment(path)
        method, ds = str(frag["method"]), str(frag["dataset"])
        count = frag["n_classes"]
        if ds in class_counts and class_counts[ds] != count:
            raise ConfigError(
                f"{path}: {ds} has {count} classes but an earlier fragment said "
                f"{class_counts[ds]}"
            )
        class_counts[ds] = count
        accs.setdefault(method, {}).setdefault(ds, []).append(float(frag["accuracy"]))

    results = {
        method: {ds: sum(vals) / len(vals) for ds, vals in row.items()}
        for method, row in accs.items()
    }
    report = build_report(results, class_counts)
    target = Path(out_dir) if out_dir else root
    target.mkdir(parents=True, exist_ok=True)
    (target / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_text())
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="danet", description="Dual-attention time series classification."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train on one UEA dataset and evaluate")
    train.add_argument("--data", default="data", help="directory holding <name>/<name>_TRAIN.ts")
    train.add_argument("--dataset", required=True, help="dataset name, e.g. BasicMotions")
    train.add_argument("--config", default=None, help="JSON file with model/train sections")
    train.add_argument("--seed", type=int, default=None, help="training seed (overrides file)")
    train.add_argument("--epochs", type=int, default=None, help="epoch count (overrides file)")
    train.add_argument("--out", default="runs", help="directory for run artifacts")

    grad = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    grad.add_argument("--tolerance", type=float, default=1e-4,
                      help="max relative error accepted per layer")

    report = sub.add_parser("report", help="merge eval fragments into a comparison table")
    report.add_argument("results", help="directory containing eval fragments")
    report.add_argument("--out", default=None, help="where to write report.json (default: results dir)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            model_over: dict = {}
            train_over: dict = {}
            if args.config:
                model_over, train_over = load_config_file(args.config)
            if args.seed is not None:
                train_over["seed"] = args.seed
            if args.epochs is not None:
                train_over["epochs"] = args.epochs
            return cmd_train(
                ExperimentConfig(
                    data_dir=args.data,
                    dataset=args.dataset,
                    model_overrides=model_over,
                    train_overrides=train_over,
                    out_dir=args.out,
                )
            )
        if args.command == "gradcheck":
            return cmd_gradcheck(ExperimentConfig(tolerance=args.tolerance))
        return cmd_report(args.results, args.out)
    except (ConfigError, ParseError, SchemaError, VocabularyError, ShapeError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
