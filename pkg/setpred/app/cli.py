"""Command-line interface: ``set-predict {generate|train|eval|infer|benchmark|verify}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tomllib
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..api_models import Architecture, SynthConfig, TrainConfig
from ..benchmark import run_benchmark
from ..config import MODEL_DEFAULTS, SYNTH_DEFAULTS, TRAIN_DEFAULTS, VERIFY_DEFAULTS
from ..data import cardinality_stats, generate, read_dataset, split, write_dataset
from ..engine import TrainingEngine
from ..io_artifact import (
    build_artifact,
    load_artifact,
    save_artifact,
    write_predictions_parquet,
    write_report_json,
    write_report_text,
    write_training_log,
)
from ..service import SetPredictor
from ..utils import dumps_exact, format_float
from ..verification import run_verify

logger = logging.getLogger(__name__)

PROG = "set-predict"
SPLIT_NAMES = ("train", "val", "test")


def setup_logging(level: str = "INFO") -> None:
    """Send log records to stderr so stdout only carries command results."""
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def load_config(path: Path) -> dict:
    """Read a TOML configuration file.

    参数
    ----
    path : Path
        TOML 文件。顶层键作用于所有子命令，``[<子命令>]`` 表只作用于对应子命令；键名与长参数名一致
        （短横线或下划线均可）。命令行显式给出的参数优先。
    """
    with Path(path).open("rb") as handle:
        return tomllib.load(handle)


def _normalise(table: dict) -> dict:
    return {str(key).replace("-", "_"): value for key, value in table.items()}


def _add_network_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--hidden", type=int, nargs="*", default=list(MODEL_DEFAULTS.hidden_widths),
                        help="Hidden layer widths of the shared trunk.")
    parser.add_argument("--dropout", type=float, default=MODEL_DEFAULTS.dropout_rate, help="Hidden-layer dropout rate.")


def _add_training_flags(parser: argparse.ArgumentParser) -> None:
    _add_network_flags(parser)
    parser.add_argument("--gamma", type=float, default=TRAIN_DEFAULTS.gamma, help="L2 weight regularisation.")
    parser.add_argument("--bce-mode", choices=["full", "positive_only"], default=TRAIN_DEFAULTS.bce_mode)
    parser.add_argument("--lr", type=float, default=TRAIN_DEFAULTS.base_lr, help="Initial learning rate.")
    parser.add_argument("--lr-decay", type=float, default=TRAIN_DEFAULTS.lr_decay, help="Per-epoch decay factor.")
    parser.add_argument("--momentum", type=float, default=TRAIN_DEFAULTS.momentum)
    parser.add_argument("--epochs", type=int, default=TRAIN_DEFAULTS.epochs)
    parser.add_argument("--batch-size", type=int, default=TRAIN_DEFAULTS.batch_size)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--u", type=float, default=MODEL_DEFAULTS.hyper_volume_unit, help="Hyper-volume unit U.")
    parser.add_argument("--tune-u", action="store_true", help="Select U on the validation set.")
    parser.add_argument("--target", choices=["c", "o", "i"], default="o", help="F1 family used for tuning.")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    """Build the top-level parser and return it together with the subcommand parsers."""
    parser = argparse.ArgumentParser(prog=PROG, description="Joint cardinality and label set prediction")
    parser.add_argument("--config", type=Path, help="TOML file whose keys mirror the long flags.")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)
    commands: dict[str, argparse.ArgumentParser] = {}

    gen = sub.add_parser("generate", help="Generate a synthetic dataset and split it.")
    gen.add_argument("--l", type=int, default=SYNTH_DEFAULTS.input_dim, help="Feature dimension.")
    gen.add_argument("--M", type=int, default=SYNTH_DEFAULTS.num_labels, help="Number of labels.")
    gen.add_argument("--n", type=int, default=SYNTH_DEFAULTS.num_samples, help="Number of samples.")
    gen.add_argument("--max-cardinality", type=int, default=SYNTH_DEFAULTS.max_cardinality)
    gen.add_argument("--prototype-scale", type=float, default=SYNTH_DEFAULTS.prototype_scale)
    gen.add_argument("--noise-scale", type=float, default=SYNTH_DEFAULTS.noise_scale)
    gen.add_argument("--orthogonal-prototypes", action=argparse.BooleanOptionalAction, default=True)
    gen.add_argument("--fractions", type=float, nargs=3, default=list(SYNTH_DEFAULTS.split_fractions))
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, help="Output directory for train/val/test JSONL files.")
    commands["generate"] = gen

    train = sub.add_parser("train", help="Train a joint model and write an artifact.")
    train.add_argument("--train", type=Path, help="Training JSONL dataset.")
    train.add_argument("--val", type=Path, help="Validation JSONL dataset.")
    train.add_argument("--out", type=Path, help="Model artifact path (JSON).")
    train.add_argument("--log", type=Path, help="Per-epoch CSV log (default: <out>.log.csv).")
    train.add_argument("--objective", choices=["joint", "labels_only", "cardinality_only"], default="joint")
    _add_training_flags(train)
    commands["train"] = train

    ev = sub.add_parser("eval", help="Evaluate a model with one decoder.")
    ev.add_argument("--model", type=Path, help="Model artifact.")
    ev.add_argument("--data", type=Path, help="JSONL dataset.")
    ev.add_argument("--decoder", default="jds", help="jds, ds, gt, topk:<k> or topk:best.")
    ev.add_argument("--u", type=float, default=None, help="Override the stored hyper-volume unit.")
    ev.add_argument("--target", choices=["c", "o", "i"], default="o", help="F1 family for topk:best.")
    ev.add_argument("--report-json", type=Path)
    ev.add_argument("--report-text", type=Path)
    ev.add_argument("--predictions", type=Path, help="Per-sample Parquet table.")
    commands["eval"] = ev

    inf = sub.add_parser("infer", help="Decode MAP label sets.")
    inf.add_argument("--model", type=Path, help="Model artifact.")
    inf.add_argument("--data", type=Path, help="JSONL dataset (labels ignored).")
    inf.add_argument("--features", type=Path, help="File with one JSON feature array per line.")
    inf.add_argument("--u", type=float, default=None, help="Override the stored hyper-volume unit.")
    inf.add_argument("--out", type=Path, help="Write predictions here instead of stdout.")
    commands["infer"] = inf

    bench = sub.add_parser("benchmark", help="Compare JDS, DS and top-k decoding.")
    bench.add_argument("--train", type=Path)
    bench.add_argument("--val", type=Path)
    bench.add_argument("--test", type=Path)
    bench.add_argument("--report-json", type=Path)
    bench.add_argument("--report-text", type=Path)
    _add_training_flags(bench)
    commands["benchmark"] = bench

    ver = sub.add_parser("verify", help="Run the oracle verification suite.")
    ver.add_argument("--trials", type=int, default=VERIFY_DEFAULTS.trials)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--perturb-gradient", action="store_true", help=argparse.SUPPRESS)
    commands["verify"] = ver
    return parser, commands


def _require(parser: argparse.ArgumentParser, args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name) is None]
    if missing:
        parser.error(f"missing required option(s): {', '.join(missing)}")


def _train_config(args: argparse.Namespace, objective: str = "joint") -> TrainConfig:
    return TrainConfig(
        gamma=args.gamma,
        bce_mode=args.bce_mode,
        base_lr=args.lr,
        lr_decay=args.lr_decay,
        momentum=args.momentum,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        objective=objective,
    )


def _architecture(args: argparse.Namespace, input_dim: int, num_labels: int) -> Architecture:
    return Architecture(
        input_dim=input_dim, hidden_widths=list(args.hidden), num_labels=num_labels, dropout_rate=args.dropout
    )


def run_generate(args: argparse.Namespace) -> int:
    cfg = SynthConfig(
        input_dim=args.l,
        num_labels=args.M,
        num_samples=args.n,
        max_cardinality=args.max_cardinality,
        prototype_scale=args.prototype_scale,
        noise_scale=args.noise_scale,
        orthogonal_prototypes=args.orthogonal_prototypes,
        seed=args.seed,
    )
    parts = split(generate(cfg), args.fractions, args.seed)
    for name, part in zip(SPLIT_NAMES, parts):
        write_dataset(part, args.out / f"{name}.jsonl")
        counts = cardinality_stats(part).counts.tolist()
        logger.info("wrote %s split with %d samples", name, len(part))
        print(f"{name}: n={len(part)} cardinality_counts={counts}")
    return 0


def run_train(args: argparse.Namespace) -> int:
    train = read_dataset(args.train)
    val = read_dataset(args.val)
    arch = _architecture(args, train.input_dim, train.num_labels)
    cfg = _train_config(args, args.objective)
    stats = cardinality_stats(train)
    result = TrainingEngine(arch, cfg).fit(train, val, stats)

    u = args.u
    if args.tune_u:
        u, _ = SetPredictor(result.params, stats, u).tune_u(val, target=args.target)
    record = result.selected
    artifact = build_artifact(
        result.params, stats, u, cfg, result.selected_epoch, record.train_objective, record.val_objective
    )
    save_artifact(artifact, args.out)
    log_path = args.log or args.out.with_name(args.out.name + ".log.csv")
    write_training_log(result.history, log_path)
    val_text = "n/a" if record.val_objective is None else format_float(record.val_objective)
    print(
        f"selected_epoch={result.selected_epoch} train_objective={format_float(record.train_objective)} "
        f"val_objective={val_text} u={format_float(u)}"
    )
    return 0


def run_eval(args: argparse.Namespace) -> int:
    artifact = load_artifact(args.model)
    dataset = read_dataset(args.data)
    predictor = SetPredictor.from_artifact(artifact, u=args.u)
    outcome = predictor.evaluate(dataset, args.decoder, args.target)

    lines = [f"decoder={args.decoder}"]
    if outcome.k is not None:
        lines.append(f"k={outcome.k}")
    lines.append(outcome.report.format_text())
    text = "\n".join(lines)
    print(text)
    if args.report_text:
        write_report_text(text, args.report_text)
    if args.report_json:
        payload = {"decoder": args.decoder, "k": outcome.k, "u": predictor.u.u}
        payload.update(outcome.report.as_dict())
        write_report_json(payload, args.report_json)
    if args.predictions:
        write_predictions_parquet(
            args.predictions,
            [p.labels for p in outcome.predictions],
            dataset.label_sets,
            [p.log_score for p in outcome.predictions],
        )
    return 0


def read_features(path: Path, input_dim: int) -> np.ndarray:
    """Read one feature vector per line (a JSON array or an object with an ``x`` field)."""
    rows = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed line: {exc}") from exc
            values = payload.get("x") if isinstance(payload, dict) else payload
            if not isinstance(values, list) or len(values) != input_dim:
                raise ValueError(f"{path}:{lineno}: expected a feature array of length {input_dim}")
            rows.append([float(v) for v in values])
    return np.array(rows, dtype=float).reshape(len(rows), input_dim)


def run_infer(args: argparse.Namespace) -> int:
    if (args.data is None) == (args.features is None):
        raise ValueError("infer needs exactly one of --data or --features")
    artifact = load_artifact(args.model)
    predictor = SetPredictor.from_artifact(artifact, u=args.u)
    if args.data is not None:
        dataset = read_dataset(args.data)
        if dataset.num_labels != predictor.num_labels:
            raise ValueError(f"dataset has M={dataset.num_labels} labels but the model has M={predictor.num_labels}")
        features = dataset.features
    else:
        features = read_features(args.features, artifact.architecture.input_dim)

    results = predictor.infer(features) if len(features) else []
    lines = [f"{dumps_exact(r.labels.sorted())} {r.m_star} {format_float(r.log_score)}" for r in results]
    text = "".join(line + "\n" for line in lines)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def run_benchmark_command(args: argparse.Namespace) -> int:
    train, val, test = (read_dataset(path) for path in (args.train, args.val, args.test))
    arch = _architecture(args, train.input_dim, train.num_labels)
    result = run_benchmark(
        train, val, test, arch, _train_config(args), u=args.u, tune_u=args.tune_u, target=args.target
    )
    table = result.format_table()
    print(table)
    if args.report_text:
        write_report_text(table, args.report_text)
    if args.report_json:
        write_report_json(result.as_dict(), args.report_json)
    return 0


def run_verify_command(args: argparse.Namespace) -> int:
    report = run_verify(seed=args.seed, trials=args.trials, perturb_gradient=args.perturb_gradient)
    print(report.format_text())
    return 0 if report.passed else 1


HANDLERS: dict[str, Callable[[argparse.Namespace], int]] = {
    "generate": run_generate,
    "train": run_train,
    "eval": run_eval,
    "infer": run_infer,
    "benchmark": run_benchmark_command,
    "verify": run_verify_command,
}

REQUIRED: dict[str, tuple[str, ...]] = {
    "generate": ("out",),
    "train": ("train", "val", "out"),
    "eval": ("model", "data"),
    "infer": ("model",),
    "benchmark": ("train", "val", "test"),
    "verify": (),
}


def _parse(argv: Optional[Sequence[str]]) -> tuple[argparse.Namespace, argparse.ArgumentParser]:
    parser, commands = build_parser()
    args = parser.parse_args(argv)
    command_parser = commands[args.command]
    if args.config is not None:
        config = load_config(args.config)
        known = set(vars(command_parser.parse_args([])))
        shared = {k: v for k, v in _normalise(config).items() if not isinstance(v, dict) and k in known}
        # `train` names both a subcommand and a flag; only a table is a section
        section = config.get(args.command)
        table = _normalise(section) if isinstance(section, dict) else {}
        unknown = sorted(set(table) - known)
        if unknown:
            raise ValueError(f"unknown keys in [{args.command}] of {args.config}: {', '.join(unknown)}")
        command_parser.set_defaults(**{**shared, **table})
        args = parser.parse_args(argv)
    _require(command_parser, args, *REQUIRED[args.command])
    return args, command_parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit code.

    退出码：0 成功；1 校验或检查失败（数据/模型/配置错误、目标值非有限、verify 未通过）；
    2 用法错误（由 argparse 以 ``SystemExit(2)`` 给出）。
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, _ = _parse(argv)
    except (ValueError, FileNotFoundError) as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1
    setup_logging(args.log_level)
    try:
        return HANDLERS[args.command](args)
    except (ValueError, FileNotFoundError, FloatingPointError) as exc:
        print(f"{PROG} {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
