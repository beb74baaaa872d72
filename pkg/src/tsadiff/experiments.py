"""Experiment suites: multi-seed grids over datasets and models.

Three suites are provided:

- ``table2_synthetic``: all three models on the five synthetic sets.
- ``ratio_study``: train/validation anomaly ratio swept over
  {1, 5, 10, 15, 20}% with the test split fixed at 5%.
- ``multi_anomaly``: four anomalous dimensions (one anomaly type each at
  1.25%), fifth dimension clean.

Each cell is a pure function of (suite config, seed): reruns reproduce
metric values bit-identically. Failed cells are recorded and the suite
continues.
"""

from __future__ import annotations

import csv
import traceback
from dataclasses import dataclass, replace, asdict

import numpy as np

from . import evaluation, runner, synthgen

SUITES = ("ratio_study", "multi_anomaly", "table2_synthetic")
RATIO_GRID = (0.01, 0.05, 0.10, 0.15, 0.20)
RATIO_TEST = 0.05
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass
class CellResult:
    suite: str
    dataset: str          # anomaly type, or "seasonal@r=0.05" for the ratio study
    model: str
    seed: int
    status: str = "ok"    # ok | failed
    f1k_auc: float = float("nan")
    rock_auc: float = float("nan")
    error: str = ""

    def key(self):
        return (self.suite, self.dataset, self.model, self.seed)


def run_cell(suite: str, anomaly_type: str, model: str, seed: int,
             base_cfg: runner.RunConfig, length: int,
             ratio: float | None = None, test_ratio: float | None = None
             ) -> CellResult:
    """One (dataset, model, seed) cell; exceptions become a failed row."""
    name = anomaly_type if ratio is None else f"{anomaly_type}@r={ratio:g}"
    cell = CellResult(suite=suite, dataset=name, model=model, seed=seed)
    try:
        synth_cfg = synthgen.SynthConfig(anomaly_type, length=length,
                                         ratio=ratio, seed=seed)
        splits, _ = synthgen.generate_dataset(synth_cfg, test_ratio=test_ratio)
        cfg = replace(base_cfg, model=model, seed=seed)
        report = runner.run(cfg, splits, anomaly_type=anomaly_type,
                            score_train=False)
        cell.f1k_auc = report.test_f1k_auc
        cell.rock_auc = report.test_rock_auc
    except Exception as exc:  # noqa: BLE001 - partial failures must not kill the suite
        cell.status = "failed"
        cell.error = "".join(traceback.format_exception_only(exc)).strip()
    return cell


def run_suite(suite: str, base_cfg: runner.RunConfig,
              seeds=DEFAULT_SEEDS, length: int = synthgen.DEFAULT_LENGTH,
              models=None) -> list[CellResult]:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    cells = []
    if suite == "table2_synthetic":
        models = models or runner.MODEL_KINDS
        for anomaly_type in synthgen.ANOMALY_TYPES:
            for model in models:
                for seed in seeds:
                    cells.append(run_cell(suite, anomaly_type, model, seed,
                                          base_cfg, length))
    elif suite == "ratio_study":
        models = models or ("diffusion", "diffusion_ae")
        for ratio in RATIO_GRID:
            for model in models:
                for seed in seeds:
                    cells.append(run_cell(suite, "seasonal", model, seed,
                                          base_cfg, length, ratio=ratio,
                                          test_ratio=RATIO_TEST))
    else:  # multi_anomaly
        models = models or runner.MODEL_KINDS
        for model in models:
            for seed in seeds:
                cells.append(run_cell(suite, "multi", model, seed,
                                      base_cfg, length))
    return sorted(cells, key=CellResult.key)


def aggregate(cells: list[CellResult]) -> list[dict]:
    """Mean +/- std per (dataset, model) over the seeds that succeeded."""
    groups: dict[tuple, list[CellResult]] = {}
    for cell in cells:
        groups.setdefault((cell.suite, cell.dataset, cell.model), []).append(cell)
    rows = []
    for (suite, dataset, model), members in sorted(groups.items()):
        ok = [c for c in members if c.status == "ok"]
        row = {"suite": suite, "dataset": dataset, "model": model,
               "n_seeds": len(members), "n_ok": len(ok)}
        for metric in ("f1k_auc", "rock_auc"):
            vals = np.array([getattr(c, metric) for c in ok])
            row[f"{metric}_mean"] = float(vals.mean()) if ok else float("nan")
            row[f"{metric}_std"] = float(vals.std(ddof=0)) if ok else float("nan")
        rows.append(row)
    return rows


def metric_correlation(rows: list[dict]) -> float:
    """Spearman correlation between mean F1_K-AUC and mean ROC_K-AUC."""
    f1 = np.array([r["f1k_auc_mean"] for r in rows if r["n_ok"] > 0])
    rk = np.array([r["rock_auc_mean"] for r in rows if r["n_ok"] > 0])
    return evaluation.spearman(f1, rk)


CELL_FIELDS = ("suite", "dataset", "model", "seed", "status",
               "f1k_auc", "rock_auc", "error")


def write_cells_csv(path, cells: list[CellResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CELL_FIELDS)
        writer.writeheader()
        for cell in cells:
            row = asdict(cell)
            for metric in ("f1k_auc", "rock_auc"):
                row[metric] = f"{row[metric]:.10g}"
            writer.writerow(row)


def read_cells_csv(path) -> list[CellResult]:
    with open(path, newline="") as fh:
        return [CellResult(row["suite"], row["dataset"], row["model"],
                           int(row["seed"]), row["status"],
                           float(row["f1k_auc"]), float(row["rock_auc"]),
                           row["error"])
                for row in csv.DictReader(fh)]


def write_aggregate_csv(path, rows: list[dict]) -> None:
    fields = ("suite", "dataset", "model", "n_seeds", "n_ok",
              "f1k_auc_mean", "f1k_auc_std", "rock_auc_mean", "rock_auc_std")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in fields[5:]:
                out[key] = f"{out[key]:.10g}"
            writer.writerow(out)
