"""Command-line front end.

Subcommands: train, predict, analyze, synth, bench, ablate.  Human-facing
output goes to stdout as aligned text; machine-facing output is
schema-versioned JSON written atomically.  Exit codes: 0 on success (a fit
that merely fails to converge still succeeds, with a warning on stderr),
1 for input, file, or flag problems, 2 when a linear system turns out
singular.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace

import numpy as np

from .analysis import format_report_table, importance_report, report_to_dict
from .bench import bench_fit, bench_predict, format_result_table, result_to_dict
from .core import FeatureLayout, predict_batch
from .data import (
    SynthSpec,
    _atomic_write,
    generate,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
    split,
    standardize,
)
from .errors import ConfigError, PoseactError, SingularityError, ValidationError
from .solver import SolverConfig, fit

__all__ = ["CliConfig", "main", "run"]

ABLATION_MODES = ("full", "skeletal-only", "attribute-only")


class _Parser(argparse.ArgumentParser):
    # argparse normally exits 2 on usage problems; route them through the
    # same error path as every other bad input instead
    def error(self, message):
        raise ConfigError(message)


def _flag_float(value, flag, low=0.0, strict=False, high=None):
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{flag} must be a number, got {value!r}") from None
    if not np.isfinite(out) or out < low or (strict and out <= low):
        bound = f"> {low}" if strict else f">= {low}"
        raise ConfigError(f"{flag} must be finite and {bound}, got {value}")
    if high is not None and out >= high:
        raise ConfigError(f"{flag} must be < {high}, got {value}")
    return out


def _flag_int(value, flag, low):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{flag} must be an integer, got {value!r}")
    if value < low:
        raise ConfigError(f"{flag} must be >= {low}, got {value}")
    return value


@dataclass(frozen=True)
class CliConfig:
    """Validated shared knobs, one per flag."""

    subcommand: str
    data: str | None = None
    model: str | None = None
    out: str | None = None
    lambda1: float = 0.1
    lambda2: float = 0.1
    tol: float = 1e-6
    max_iters: int = 100
    epsilon: float = 1e-8
    seed: int = 0
    standardize: bool = False
    train_fraction: float = 0.7
    ablation: str = "full"
    min_duration: float = 2.0

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        get = lambda name, fallback: getattr(args, name, fallback)
        ablation = get("ablation", "full")
        if ablation not in ABLATION_MODES:
            raise ConfigError(f"--ablation must be one of {ABLATION_MODES}, got {ablation!r}")
        return cls(
            subcommand=args.subcommand,
            data=get("data", None),
            model=get("model", None),
            out=get("out", None),
            lambda1=_flag_float(get("lambda1", 0.1), "--lambda1"),
            lambda2=_flag_float(get("lambda2", 0.1), "--lambda2"),
            tol=_flag_float(get("tol", 1e-6), "--tol", strict=True),
            max_iters=_flag_int(get("max_iters", 100), "--max-iters", 1),
            epsilon=_flag_float(get("epsilon", 1e-8), "--epsilon", strict=True),
            seed=_flag_int(get("seed", 0), "--seed", 0),
            standardize=bool(get("standardize", False)),
            train_fraction=_flag_float(
                get("train_fraction", 0.7), "--train-fraction", strict=True, high=1.0
            ),
            ablation=ablation,
            min_duration=_flag_float(get("min_duration", 2.0), "--min-duration", strict=True),
        )

    def solver_config(self, ablation: str | None = None) -> SolverConfig:
        lam1, lam2 = self.lambda1, self.lambda2
        mode = self.ablation if ablation is None else ablation
        # dropping a norm means zeroing its weight; the loss always sees both sides
        if mode == "skeletal-only":
            lam2 = 0.0
        elif mode == "attribute-only":
            lam1 = 0.0
        return SolverConfig(
            lambda1=lam1,
            lambda2=lam2,
            tol=self.tol,
            max_iters=self.max_iters,
            epsilon=self.epsilon,
            seed=self.seed,
        )


def _parse_int_tuple(text, flag):
    try:
        return tuple(int(part) for part in str(text).split(","))
    except ValueError:
        raise ConfigError(f"{flag} must be comma-separated integers, got {text!r}") from None


def _parse_planted_joints(text, flag):
    groups = []
    for chunk in str(text).split(";"):
        groups.append(_parse_int_tuple(chunk, flag))
    return tuple(groups)


def _parse_planted_blocks(text, flag):
    groups = []
    for chunk in str(text).split(";"):
        pairs = []
        for item in chunk.split(","):
            parts = item.split(":")
            if len(parts) != 2:
                raise ConfigError(
                    f"{flag} entries look like object:modality, got {item!r}"
                )
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ConfigError(f"{flag} entries must be integer pairs, got {item!r}") from None
        groups.append(tuple(pairs))
    return tuple(groups)


def _write_json(path, doc):
    _atomic_write(path, json.dumps(doc, indent=2) + "\n", overwrite=True)


def _load_labeled(path, what):
    dataset = load_dataset(path)
    if dataset.labels is None:
        raise ValidationError(f"{what} needs labeled data, {path} has no labels")
    return dataset


def _counts_line(dataset):
    counts = dataset.class_counts()
    return "instances per class: " + ", ".join(f"{k}={v}" for k, v in counts.items())


# --- subcommands ------------------------------------------------------------


def cmd_train(cfg: CliConfig, args: argparse.Namespace) -> int:
    dataset = _load_labeled(cfg.data, "train")
    print(_counts_line(dataset))
    transform = None
    if cfg.standardize:
        dataset, transform = standardize(dataset)
    model, report = fit(dataset, cfg.solver_config())
    if transform is not None:
        model = replace(model, standardizer=transform)
    save_model(model, cfg.model, overwrite=True)
    report_path = args.report
    if report_path is None:
        report_path = str(_with_report_suffix(cfg.model))
    _write_json(
        report_path,
        {
            "schema_version": 1,
            "converged": report.converged,
            "iterations_run": report.iterations_run,
            "wall_time": report.wall_time,
            "final_objective": report.objective_trace[-1],
            "final_loss": report.loss_trace[-1],
            "objective_trace": list(report.objective_trace),
            "loss_trace": list(report.loss_trace),
            "standardized": cfg.standardize,
            "ablation": cfg.ablation,
            "class_counts": dataset.class_counts(),
        },
    )
    if not report.converged:
        print(
            f"warning: objective still moving after {report.iterations_run} iterations "
            f"(tol {cfg.tol}); model saved anyway",
            file=sys.stderr,
        )
    print(
        f"fit {'converged' if report.converged else 'stopped'} after "
        f"{report.iterations_run} iterations, objective {report.objective_trace[-1]:.6g}"
    )
    print(f"model written to {cfg.model}, report to {report_path}")
    return 0


def _with_report_suffix(model_path):
    from pathlib import Path

    p = Path(model_path)
    return p.with_name(p.stem + ".report.json")


def cmd_predict(cfg: CliConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg.model)
    dataset = load_dataset(cfg.data)
    if model.standardizer is not None:
        dataset = model.standardizer.apply(dataset)
    predicted, accuracy = predict_batch(model, dataset)
    doc = {
        "schema_version": 1,
        "classes": list(model.class_names),
        "indices": [int(i) for i in predicted],
        "predictions": [model.class_names[int(i)] for i in predicted],
    }
    if accuracy is not None:
        doc["accuracy"] = accuracy
    if cfg.out is not None:
        _write_json(cfg.out, doc)
        line = f"{len(predicted)} predictions written to {cfg.out}"
        if accuracy is not None:
            line += f", accuracy {accuracy:.4f}"
        print(line)
    else:
        print(json.dumps(doc, indent=2))
    return 0


def cmd_analyze(cfg: CliConfig, args: argparse.Namespace) -> int:
    model = load_model(cfg.model)
    report = importance_report(model, signed=args.signed)
    joints = None if args.joints is None else _parse_int_tuple(args.joints, "--joints")
    classes = None if args.classes is None else _parse_int_tuple(args.classes, "--classes")
    try:
        print(format_report_table(report, model, joints=joints, classes=classes))
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
    if joints is not None:
        print(f"selected joints: {', '.join(str(j) for j in joints)}")
    if classes is not None:
        print(f"selected classes: {', '.join(str(c) for c in classes)}")
    if cfg.out is not None:
        doc = report_to_dict(report, model)
        doc["selected_joints"] = None if joints is None else list(joints)
        doc["selected_classes"] = None if classes is None else list(classes)
        _write_json(cfg.out, doc)
        print(f"report written to {cfg.out}")
    return 0


def cmd_synth(cfg: CliConfig, args: argparse.Namespace) -> int:
    layout = FeatureLayout(
        joint_dims=_parse_int_tuple(args.joint_dims, "--joint-dims"),
        object_count=args.object_count,
        modality_dims=_parse_int_tuple(args.modality_dims, "--modality-dims"),
    )
    spec = SynthSpec(
        layout=layout,
        n_classes=args.classes,
        n_instances=args.instances,
        noise_sigma=_flag_float(args.noise_sigma, "--noise-sigma"),
        planted_joints=_parse_planted_joints(args.planted_joints, "--planted-joints"),
        planted_blocks=_parse_planted_blocks(args.planted_blocks, "--planted-blocks"),
        seed=cfg.seed,
    )
    generated = generate(spec)
    save_dataset(generated.dataset, cfg.out, overwrite=True)
    print(
        f"wrote {spec.n_instances} instances "
        f"(d_t={layout.d_t}, d_o={layout.d_o}, classes={spec.n_classes}) to {cfg.out}"
    )
    print(_counts_line(generated.dataset))
    return 0


def cmd_bench(cfg: CliConfig, args: argparse.Namespace) -> int:
    if args.mode == "predict":
        model = load_model(cfg.model)
        dataset = load_dataset(cfg.data)
        if model.standardizer is not None:
            dataset = model.standardizer.apply(dataset)
        result = bench_predict(model, dataset, min_duration_seconds=cfg.min_duration)
    else:
        dataset = _load_labeled(cfg.data, "bench --mode fit")
        result = bench_fit(
            dataset, cfg.solver_config(), repetitions=_flag_int(args.repetitions, "--repetitions", 1)
        )
    print(format_result_table(result))
    if cfg.out is not None:
        _write_json(cfg.out, result_to_dict(result))
        print(f"result written to {cfg.out}")
    return 0


def cmd_ablate(cfg: CliConfig, args: argparse.Namespace) -> int:
    dataset = _load_labeled(cfg.data, "ablate")
    train_set, test_set = split(dataset, cfg.train_fraction, cfg.seed)
    print(
        f"split {dataset.n_instances} instances into {train_set.n_instances} train / "
        f"{test_set.n_instances} test (seed {cfg.seed})"
    )
    transform = None
    if cfg.standardize:
        train_set, transform = standardize(train_set)
        test_set = transform.apply(test_set)
    rows = []
    for mode in ABLATION_MODES:
        config = cfg.solver_config(ablation=mode)
        model, report = fit(train_set, config)
        if transform is not None:
            model = replace(model, standardizer=transform)
        _, accuracy = predict_batch(model, test_set)
        if cfg.out is not None:
            path = f"{cfg.out}.{mode.replace('-', '_')}.json"
            save_model(model, path, overwrite=True)
        rows.append(
            {
                "variant": mode,
                "lambda1": config.lambda1,
                "lambda2": config.lambda2,
                "iterations_run": report.iterations_run,
                "converged": report.converged,
                "test_accuracy": accuracy,
            }
        )
    header = f"{'variant':<18}{'lambda1':>10}{'lambda2':>10}{'iters':>8}{'converged':>11}{'accuracy':>10}"
    print(header)
    for row in rows:
        print(
            f"{row['variant']:<18}{row['lambda1']:>10.4g}{row['lambda2']:>10.4g}"
            f"{row['iterations_run']:>8}{str(row['converged']):>11}{row['test_accuracy']:>10.4f}"
        )
    if cfg.out is not None:
        _write_json(
            f"{cfg.out}.comparison.json",
            {
                "schema_version": 1,
                "train_fraction": cfg.train_fraction,
                "seed": cfg.seed,
                "standardized": cfg.standardize,
                "results": rows,
            },
        )
        print(f"models and comparison written with prefix {cfg.out}")
    return 0


# --- wiring -----------------------------------------------------------------


def _add_solver_flags(parser):
    parser.add_argument("--lambda1", type=float, default=0.1, help="skeletal norm weight")
    parser.add_argument("--lambda2", type=float, default=0.1, help="attribute norm weight")
    parser.add_argument("--tol", type=float, default=1e-6, help="relative objective-decrease stop")
    parser.add_argument("--max-iters", type=int, default=100, dest="max_iters")
    parser.add_argument("--epsilon", type=float, default=1e-8, help="block-norm floor")
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="poseact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("train", help="fit a model on a labeled dataset file")
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--model", required=True, help="where to write the model")
    p.add_argument("--report", default=None, help="fit report path (default <model>.report.json)")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--ablation", choices=ABLATION_MODES, default="full")
    _add_solver_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="score a dataset file with a saved model")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="write predictions JSON here instead of stdout")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("analyze", help="joint and object importance of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="write the JSON report here")
    p.add_argument("--signed", action="store_true", help="sum raw block entries instead of norms")
    p.add_argument("--joints", default=None, help="comma-separated joint rows to show")
    p.add_argument("--classes", default=None, help="comma-separated class columns to show")
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser("synth", help="generate a planted synthetic dataset file")
    p.add_argument("--out", required=True)
    p.add_argument("--joint-dims", required=True, dest="joint_dims")
    p.add_argument("--object-count", required=True, type=int, dest="object_count")
    p.add_argument("--modality-dims", required=True, dest="modality_dims")
    p.add_argument("--classes", required=True, type=int)
    p.add_argument("--instances", required=True, type=int)
    p.add_argument("--noise-sigma", type=float, default=0.0, dest="noise_sigma")
    p.add_argument(
        "--planted-joints",
        required=True,
        dest="planted_joints",
        help="per-class joint indices, ';' between classes, ',' within (e.g. '0;1;2,3')",
    )
    p.add_argument(
        "--planted-blocks",
        required=True,
        dest="planted_blocks",
        help="per-class object:modality pairs (e.g. '0:0;0:1;1:0,1:1')",
    )
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("bench", help="measure prediction or fit throughput")
    p.add_argument("--data", required=True)
    p.add_argument("--model", default=None, help="required for --mode predict")
    p.add_argument("--out", default=None)
    p.add_argument("--mode", choices=("predict", "fit"), default="predict")
    p.add_argument("--min-duration", type=float, default=2.0, dest="min_duration")
    p.add_argument("--repetitions", type=int, default=3, help="fit repetitions for --mode fit")
    _add_solver_flags(p)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("ablate", help="compare full vs single-norm training on one split")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None, help="path prefix for the three model files")
    p.add_argument("--train-fraction", type=float, default=0.7, dest="train_fraction")
    p.add_argument("--standardize", action="store_true")
    _add_solver_flags(p)
    p.set_defaults(handler=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            raise ConfigError("a subcommand is required (train, predict, analyze, synth, bench, ablate)")
        if args.subcommand == "bench" and args.mode == "predict" and args.model is None:
            raise ConfigError("bench --mode predict needs --model")
        cfg = CliConfig.from_args(args)
        return args.handler(cfg, args)
    except SingularityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (PoseactError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:  # console-script entry point
    sys.exit(main())


if __name__ == "__main__":
    run()
