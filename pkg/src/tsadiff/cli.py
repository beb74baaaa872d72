"""Command-line interface: generate, train, detect, eval, experiment.

Configuration can come from a key=value config file (``--config``),
overridden by command-line flags. The output root defaults to the current
directory and can be set with the ``TSADIFF_OUTPUT_ROOT`` environment
variable; ``--out`` paths are resolved against it.

Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
inputs), 3 numeric failure during training or scoring.

Config file schema: one ``key = value`` pair per line, ``#`` comments.
Keys match the long option names of the subcommand being run (without the
leading dashes), e.g.::

    # train settings
    model = diffusion
    epochs = 40
    lr = 1e-3
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import diffusion, evaluation, experiments, pipeline, runner, synthgen
from .substrate import NumericError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SPLITS = ("train", "val", "test")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with code 2 on bad usage; the contract wants 1."""

    def error(self, message):
        raise UsageError(message)


def load_config_file(path) -> dict:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill options the user did not pass from the config file."""
    if getattr(args, "config", None) is None:
        return
    file_values = load_config_file(args.config)
    types = {action.dest: action.type or str
             for action in args._subparser._actions if action.dest != "help"}
    for key, raw in file_values.items():
        if key not in types:
            raise UsageError(f"config file sets unknown option {key!r}")
        if getattr(args, key, None) is None:
            args.__dict__[key] = types[key](raw)


def output_dir(out: str | None, default_name: str) -> Path:
    root = Path(os.environ.get("TSADIFF_OUTPUT_ROOT", "."))
    path = root / (out if out is not None else default_name)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _json_clean(obj):
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_json_clean(payload), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def _save_curve_csv(path: Path, curve: evaluation.MetricCurve,
                    x_name: str, y_name: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{x_name},{y_name}\n")
        for x, y in zip(curve.x, curve.y):
            fh.write(f"{x:.10g},{y:.10g}\n")


def _plot_curves(path: Path, curves, labels, x_label, y_label, title) -> None:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "tsadiff"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for curve, label in zip(curves, labels):
        ax.plot(curve.x, curve.y, label=label)
    ax.set_xlabel(x_label)
    ax.set_ylabel(y_label)
    ax.set_title(title)
    if len(curves) > 1:
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# --------------------------------------------------------------------------
# subcommands

def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else 0
    length = args.length if args.length is not None else synthgen.DEFAULT_LENGTH
    dims = args.dims if args.dims is not None else synthgen.DEFAULT_DIMS
    out = output_dir(args.out, f"{args.type}-{seed}")
    ratio = args.ratio / 100.0 if args.ratio is not None else None
    cfg = synthgen.SynthConfig(args.type, length=length, dims=dims,
                               ratio=ratio, seed=seed)
    splits, metadata = synthgen.generate_dataset(cfg)
    for name in SPLITS:
        pipeline.save_series_csv(out / f"{name}.csv", splits[name])
    metadata["splits"] = {name: {"length": splits[name].length,
                                 "anomaly_ratio": float(splits[name].labels.mean())}
                          for name in SPLITS}
    write_json(out / "metadata.json", metadata)
    print(f"wrote {', '.join(n + '.csv' for n in SPLITS)} and metadata.json to {out}")
    return EXIT_OK


def _load_dataset(dataset: str) -> tuple[dict, str]:
    """Load the three split CSVs plus the anomaly type from metadata."""
    root = Path(dataset)
    splits = {name: pipeline.load_csv(root / f"{name}.csv") for name in SPLITS}
    anomaly_type = "seasonal"
    meta_path = root / "metadata.json"
    if meta_path.exists():
        anomaly_type = json.loads(meta_path.read_text())["anomaly_type"]
    return splits, anomaly_type


def _run_config(args, model: str) -> runner.RunConfig:
    overrides = {name: getattr(args, name) for name in
                 ("window", "epochs", "batch_size", "lr", "seed", "eval_every",
                  "n_levels", "unet_channels", "diffusion_weight", "warmup_epochs")
                 if getattr(args, name, None) is not None}
    return runner.RunConfig(model=model, **overrides)


def cmd_train(args) -> int:
    splits, anomaly_type = _load_dataset(args.dataset)
    cfg = _run_config(args, args.model)
    out = output_dir(args.out, f"{args.model}-{anomaly_type}-{cfg.seed}")
    data = runner.PreparedData.from_splits(
        splits, runner.scaler_kind_for(anomaly_type), cfg.window)
    detector = runner.train_detector(cfg, data)
    runner.save_detector(out / "checkpoint.tsad", detector)
    result = detector.train_result
    start = cfg.warmup_epochs if cfg.model == "diffusion_ae" else 0
    with open(out / "loss_curve.csv", "w", encoding="utf-8") as fh:
        fh.write("epoch,loss,val_f1k_auc\n")
        val = dict(result.val_history)
        for epoch, loss in enumerate(result.epoch_losses, start=start):
            v = val.get(epoch)
            fh.write(f"{epoch},{loss:.10g},{'' if v is None else f'{v:.10g}'}\n")
    write_json(out / "train_report.json", {
        "config": asdict(cfg), "anomaly_type": anomaly_type,
        "best_epoch": result.best_epoch,
        "best_val_f1k_auc": result.best_val_metric,
        "m_star": detector.m_star, "m_candidate_aucs": detector.m_aucs,
    })
    print(f"trained {args.model}: best epoch {result.best_epoch}, "
          f"checkpoint and loss curve in {out}")
    return EXIT_OK


def cmd_detect(args) -> int:
    splits, anomaly_type = _load_dataset(args.dataset)
    features = splits["train"].dims
    try:
        detector = runner.load_detector(args.checkpoint, features)
    except RuntimeError as exc:
        raise pipeline.CsvFormatError(
            f"checkpoint incompatible with data dimensionality D={features}: {exc}"
        ) from exc
    cfg = detector.config
    data = runner.PreparedData.from_splits(
        splits, runner.scaler_kind_for(anomaly_type), cfg.window)
    out = output_dir(args.out, f"scores-{cfg.model}-{anomaly_type}")
    if cfg.model != "ae" and args.M is not None:
        detector.m_star = args.M
    elif cfg.model != "ae" and detector.m_star is None:
        detector.m_star, detector.m_aucs = diffusion.select_m(
            lambda m: detector.score(data.windows["val"], m=m, eval_seed=cfg.seed),
            data.labels["val"], cfg.m_candidates)
    for i, name in enumerate(SPLITS):
        scores = detector.score(data.windows[name], eval_seed=cfg.seed + i)
        pipeline.save_scores_csv(out / f"scores_{name}.csv", scores,
                                 data.labels[name])
    print(f"wrote per-split score CSVs to {out} (M* = {detector.m_star})")
    return EXIT_OK


def cmd_eval(args) -> int:
    out = output_dir(args.out, "eval")
    val_scores, val_labels = pipeline.load_scores_csv(args.val_scores)
    test_scores, test_labels = pipeline.load_scores_csv(args.test_scores)
    delta, val_auc = evaluation.select_threshold(val_scores, val_labels)
    f1_curve = evaluation.f1k_auc(test_scores, test_labels, delta)
    roc_curves, rock = evaluation.rock_auc(test_scores, test_labels)
    _save_curve_csv(out / "f1_vs_k.csv", f1_curve, "k", "f1")
    _plot_curves(out / "f1_vs_k.svg", [f1_curve], ["test"],
                 "K (%)", "F1 after PA%K", f"F1 vs K (AUC={f1_curve.area:.3f})")
    with open(out / "roc_k.csv", "w", encoding="utf-8") as fh:
        fh.write("k,fpr,tpr\n")
        for k, curve in enumerate(roc_curves):
            for x, y in zip(curve.x, curve.y):
                fh.write(f"{k},{x:.10g},{y:.10g}\n")
    shown = roc_curves[:: max(1, len(roc_curves) // 10)]
    _plot_curves(out / "roc_k.svg", shown,
                 [f"K={k}" for k in range(0, 101, max(1, len(roc_curves) // 10))],
                 "false positive rate", "true positive rate",
                 f"per-K ROC (mean AUC={rock:.3f})")
    report = {"delta_star": delta, "val_f1k_auc": val_auc,
              "test_f1k_auc": f1_curve.area, "test_rock_auc": rock,
              "n_val": int(val_labels.size), "n_test": int(test_labels.size)}
    write_json(out / "eval_report.json", report)
    print(f"delta*={delta:.6g}  F1_K-AUC={f1_curve.area:.4f}  "
          f"ROC_K-AUC={rock:.4f}  (artifacts in {out})")
    return EXIT_OK


def cmd_experiment(args) -> int:
    out = output_dir(args.out, args.suite)
    n_seeds = args.n_seeds if args.n_seeds is not None else len(experiments.DEFAULT_SEEDS)
    length = args.length if args.length is not None else synthgen.DEFAULT_LENGTH
    args.length = length
    seeds = tuple(range(n_seeds))
    base = _run_config(args, "diffusion_ae")
    models = tuple(args.models.split(",")) if args.models else None
    cells = experiments.run_suite(args.suite, base, seeds=seeds,
                                  length=length, models=models)
    experiments.write_cells_csv(out / "cells.csv", cells)
    rows = experiments.aggregate(cells)
    experiments.write_aggregate_csv(out / "aggregate.csv", rows)
    report = {"suite": args.suite, "seeds": list(seeds), "length": args.length,
              "n_failed": sum(c.status != "ok" for c in cells)}
    try:
        report["spearman_f1k_rock"] = experiments.metric_correlation(rows)
    except ValueError as exc:
        report["spearman_f1k_rock"] = None
        report["spearman_note"] = str(exc)
    write_json(out / "experiment_report.json", report)
    n_ok = sum(c.status == "ok" for c in cells)
    print(f"suite {args.suite}: {n_ok}/{len(cells)} cells ok; "
          f"results in {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing

def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--out", help="output directory (under TSADIFF_OUTPUT_ROOT)")


def _add_train_opts(p: _Parser) -> None:
    p.add_argument("--window", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--eval-every", type=int, dest="eval_every")
    p.add_argument("--n-levels", type=int, dest="n_levels")
    p.add_argument("--unet-channels", type=int, dest="unet_channels")
    p.add_argument("--diffusion-weight", type=float, dest="diffusion_weight")
    p.add_argument("--warmup-epochs", type=int, dest="warmup_epochs")


def build_parser() -> _Parser:
    parser = _Parser(prog="tsadiff", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic benchmark dataset")
    g.add_argument("--type", required=True,
                   choices=synthgen.ANOMALY_TYPES + ("multi",))
    g.add_argument("--seed", type=int)
    g.add_argument("--ratio", type=float, help="anomaly ratio in percent")
    g.add_argument("--length", type=int)
    g.add_argument("--dims", type=int)
    _add_common(g)
    g.set_defaults(func=cmd_generate, _subparser=g)

    t = sub.add_parser("train", help="train a detector on a generated dataset")
    t.add_argument("--model", required=True, choices=runner.MODEL_KINDS)
    t.add_argument("--dataset", required=True, help="directory from `generate`")
    _add_train_opts(t)
    _add_common(t)
    t.set_defaults(func=cmd_train, _subparser=t)

    d = sub.add_parser("detect", help="score all splits with a trained checkpoint")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--dataset", required=True)
    d.add_argument("--M", type=int, help="force a single reverse noise level")
    _add_common(d)
    d.set_defaults(func=cmd_detect, _subparser=d)

    e = sub.add_parser("eval", help="threshold on validation, metrics on test")
    e.add_argument("--val-scores", required=True, dest="val_scores")
    e.add_argument("--test-scores", required=True, dest="test_scores")
    _add_common(e)
    e.set_defaults(func=cmd_eval, _subparser=e)

    x = sub.add_parser("experiment", help="run a multi-seed experiment suite")
    x.add_argument("--suite", required=True, choices=experiments.SUITES)
    x.add_argument("--n-seeds", type=int, dest="n_seeds")
    x.add_argument("--length", type=int)
    x.add_argument("--models", help="comma-separated subset of models to run")
    _add_train_opts(x)
    _add_common(x)
    x.set_defaults(func=cmd_experiment, _subparser=x)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.CsvFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
