"""Command-line interface: file outputs, determinism, exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from tsadiff import cli, evaluation, pipeline

TINY_TRAIN = ["--window", "20", "--epochs", "1", "--eval-every", "1",
              "--unet-channels", "8", "--batch-size", "16"]


def run_cli(args, tmp_path, monkeypatch):
    monkeypatch.setenv("TSADIFF_OUTPUT_ROOT", str(tmp_path))
    return cli.main(args)


@pytest.fixture()
def dataset(tmp_path, monkeypatch):
    code = run_cli(["generate", "--type", "global", "--seed", "5",
                    "--length", "1200", "--out", "ds"], tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    return tmp_path / "ds"


def test_generate_outputs(dataset):
    for name in ("train", "val", "test"):
        series = pipeline.load_csv(dataset / f"{name}.csv")
        assert series.dims == 5
    meta = json.loads((dataset / "metadata.json").read_text())
    assert meta["anomaly_type"] == "global"
    lengths = [meta["splits"][s]["length"] for s in ("train", "val", "test")]
    assert lengths == [480, 240, 480]


def test_generate_byte_identical(tmp_path, monkeypatch):
    for out in ("a", "b"):
        run_cli(["generate", "--type", "seasonal", "--seed", "2",
                 "--length", "900", "--out", out], tmp_path, monkeypatch)
    for name in ("train.csv", "val.csv", "test.csv", "metadata.json"):
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()


def test_generate_ratio_flag(tmp_path, monkeypatch):
    run_cli(["generate", "--type", "global", "--ratio", "10", "--seed", "1",
             "--length", "5000", "--out", "r10"], tmp_path, monkeypatch)
    series = pipeline.load_csv(tmp_path / "r10" / "test.csv")
    assert abs(series.labels.mean() - 0.10) <= 0.01


def test_train_detect_eval_flow(dataset, tmp_path, monkeypatch):
    code = run_cli(["train", "--model", "diffusion", "--dataset", str(dataset),
                    "--out", "run", *TINY_TRAIN], tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    run_dir = tmp_path / "run"
    assert (run_dir / "checkpoint.tsad").exists()
    lines = (run_dir / "loss_curve.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,val_f1k_auc"
    assert len(lines) == 2  # one epoch

    code = run_cli(["detect", "--checkpoint", str(run_dir / "checkpoint.tsad"),
                    "--dataset", str(dataset), "--M", "5", "--out", "sc"],
                   tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    scores, labels = pipeline.load_scores_csv(tmp_path / "sc" / "scores_test.csv")
    assert scores.size == (1200 * 2 // 5 // 20) * 20  # l*T for the test split
    assert np.all(scores >= 0)

    code = run_cli(["eval", "--val-scores", str(tmp_path / "sc" / "scores_val.csv"),
                    "--test-scores", str(tmp_path / "sc" / "scores_test.csv"),
                    "--out", "ev"], tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    ev = tmp_path / "ev"
    report = json.loads((ev / "eval_report.json").read_text())
    assert 0.0 <= report["test_f1k_auc"] <= 1.0
    assert (ev / "f1_vs_k.svg").exists() and (ev / "roc_k.svg").exists()

    # the emitted curve CSV re-integrates to the reported AUC
    rows = (ev / "f1_vs_k.csv").read_text().splitlines()[1:]
    ks, f1s = zip(*(map(float, r.split(",")) for r in rows))
    assert np.trapezoid(f1s, ks) / 100.0 == pytest.approx(
        report["test_f1k_auc"], abs=1e-9)
    # F1 at K=0 is the maximum of the curve
    assert f1s[0] == max(f1s)


def test_train_rerun_same_best_epoch(dataset, tmp_path, monkeypatch):
    reports = []
    for out in ("r1", "r2"):
        run_cli(["train", "--model", "ae", "--dataset", str(dataset),
                 "--out", out, "--seed", "3", *TINY_TRAIN], tmp_path, monkeypatch)
        reports.append(json.loads(
            (tmp_path / out / "train_report.json").read_text()))
    assert reports[0]["best_epoch"] == reports[1]["best_epoch"]
    assert reports[0]["best_val_f1k_auc"] == reports[1]["best_val_f1k_auc"]


def test_eval_perfect_scores(tmp_path, monkeypatch):
    labels = np.zeros(200, dtype=bool)
    labels[40:60] = True
    scores = labels.astype(float)
    for name in ("val", "test"):
        pipeline.save_scores_csv(tmp_path / f"{name}.csv", scores, labels)
    code = run_cli(["eval", "--val-scores", str(tmp_path / "val.csv"),
                    "--test-scores", str(tmp_path / "test.csv"), "--out", "ev"],
                   tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    report = json.loads((tmp_path / "ev" / "eval_report.json").read_text())
    assert report["test_f1k_auc"] == pytest.approx(1.0)
    assert report["test_rock_auc"] == pytest.approx(1.0)


def test_config_file_with_flag_override(dataset, tmp_path, monkeypatch):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs = 1\nwindow = 20\nunet-channels = 8\n"
                   "batch-size = 16\neval-every = 1\n# a comment\n")
    code = run_cli(["train", "--model", "ae", "--dataset", str(dataset),
                    "--config", str(cfg), "--out", "run", "--seed", "9"],
                   tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    report = json.loads((tmp_path / "run" / "train_report.json").read_text())
    assert report["config"]["epochs"] == 1
    assert report["config"]["window"] == 20
    assert report["config"]["seed"] == 9  # flag wins over the file default


def test_exit_codes(tmp_path, monkeypatch):
    # usage: unknown option value
    assert run_cli(["train", "--model", "nope", "--dataset", "x"],
                   tmp_path, monkeypatch) == cli.EXIT_USAGE
    # usage: config file with unknown key
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("banana = 3\n")
    assert run_cli(["generate", "--type", "global", "--config", str(cfg)],
                   tmp_path, monkeypatch) == cli.EXIT_USAGE
    # data error: missing dataset directory
    assert run_cli(["train", "--model", "ae", "--dataset",
                    str(tmp_path / "missing")], tmp_path, monkeypatch) == cli.EXIT_DATA
    # data error: malformed scores CSV
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert run_cli(["eval", "--val-scores", str(bad), "--test-scores", str(bad)],
                   tmp_path, monkeypatch) == cli.EXIT_DATA


def test_checkpoint_feature_mismatch(dataset, tmp_path, monkeypatch):
    run_cli(["train", "--model", "ae", "--dataset", str(dataset),
             "--out", "run", *TINY_TRAIN], tmp_path, monkeypatch)
    code = run_cli(["generate", "--type", "global", "--seed", "1",
                    "--length", "600", "--dims", "3", "--out", "ds3"],
                   tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    code = run_cli(["detect", "--checkpoint", str(tmp_path / "run" / "checkpoint.tsad"),
                    "--dataset", str(tmp_path / "ds3"), "--out", "sc"],
                   tmp_path, monkeypatch)
    assert code == cli.EXIT_DATA


def test_experiment_suite_outputs(tmp_path, monkeypatch):
    code = run_cli(["experiment", "--suite", "multi_anomaly", "--n-seeds", "2",
                    "--length", "1200", "--models", "ae", "--out", "exp",
                    *TINY_TRAIN], tmp_path, monkeypatch)
    assert code == cli.EXIT_OK
    out = tmp_path / "exp"
    cells = (out / "cells.csv").read_text().splitlines()
    assert len(cells) == 3  # header + 2 seeds
    agg = (out / "aggregate.csv").read_text().splitlines()
    assert len(agg) == 2
    report = json.loads((out / "experiment_report.json").read_text())
    assert report["n_failed"] == 0
