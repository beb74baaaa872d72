"""Ingestion, scaling, windowing and score reassembly.

Scalers are fitted on the training split only; series are cut into
non-overlapping windows of length T (the tail of L mod T timesteps is
dropped and recorded) and per-window scores are concatenated back into a
full-length score series.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .synthgen import LabeledSeries

DEFAULT_WINDOW = 100  # window length T shared by all models here


class CsvFormatError(ValueError):
    """Malformed dataset/score CSV."""


@dataclass
class Scaler:
    kind: str  # "max_abs" or "min_max"
    stats: dict = field(default_factory=dict)
    clip_to_unit: bool = True

    def __post_init__(self):
        if self.kind not in ("max_abs", "min_max"):
            raise ValueError(f"unknown scaler kind {self.kind!r}")


def fit_scaler(train: LabeledSeries, kind: str, clip_to_unit: bool = True) -> Scaler:
    """Fit per-feature scaling statistics on the training series."""
    if train.length == 0:
        raise ValueError("cannot fit a scaler on an empty series")
    scaler = Scaler(kind=kind, clip_to_unit=clip_to_unit)
    v = train.values
    if kind == "max_abs":
        scaler.stats["max_abs"] = np.abs(v).max(axis=1)
    else:
        scaler.stats["min"] = v.min(axis=1)
        scaler.stats["max"] = v.max(axis=1)
    return scaler


def apply_scaler(series: LabeledSeries, scaler: Scaler) -> LabeledSeries:
    """Rescale a series with fitted statistics; min_max clips to [0, 1]."""
    v = series.values
    if scaler.kind == "max_abs":
        denom = scaler.stats["max_abs"]
        if v.shape[0] != denom.shape[0]:
            raise ValueError(f"series has {v.shape[0]} features, scaler fitted on {denom.shape[0]}")
        safe = np.where(denom > 0, denom, 1.0)
        out = v / safe[:, None]
    else:
        lo, hi = scaler.stats["min"], scaler.stats["max"]
        if v.shape[0] != lo.shape[0]:
            raise ValueError(f"series has {v.shape[0]} features, scaler fitted on {lo.shape[0]}")
        span = hi - lo
        # constant features carry no signal and map to 0
        safe = np.where(span > 0, span, 1.0)
        out = np.where(span[:, None] > 0, (v - lo[:, None]) / safe[:, None], 0.0)
        if scaler.clip_to_unit:
            out = np.clip(out, 0.0, 1.0)
    return LabeledSeries(out, series.labels.copy())


@dataclass
class WindowSet:
    windows: np.ndarray        # (l, D, T)
    labels: np.ndarray         # (l, T) bool
    window_length: int
    offsets: np.ndarray        # start timestep of each window
    dropped_tail: int          # timesteps beyond l*T, excluded from scoring

    @property
    def count(self) -> int:
        return self.windows.shape[0]

    @property
    def flat_labels(self) -> np.ndarray:
        return self.labels.reshape(-1)


def make_windows(series: LabeledSeries, t: int = DEFAULT_WINDOW) -> WindowSet:
    """Cut a series into l = floor(L / T) non-overlapping windows."""
    if t < 1:
        raise ValueError("window length must be >= 1")
    length = series.length
    l = length // t
    if l == 0:
        raise ValueError(f"series shorter than one window ({length} < {t})")
    usable = l * t
    d = series.dims
    windows = series.values[:, :usable].reshape(d, l, t).transpose(1, 0, 2)
    labels = series.labels[:usable].reshape(l, t)
    return WindowSet(windows=np.ascontiguousarray(windows), labels=labels,
                     window_length=t, offsets=np.arange(l) * t,
                     dropped_tail=length - usable)


def concat_scores(per_window_scores) -> np.ndarray:
    """Concatenate per-window score vectors into one ScoreSeries."""
    scores = [np.asarray(s, dtype=float) for s in per_window_scores]
    if not scores:
        raise ValueError("no window scores given")
    t = scores[0].shape[-1]
    for i, s in enumerate(scores):
        if s is None or s.ndim != 1 or s.shape[0] != t:
            raise ValueError(f"window {i}: missing or misshapen score vector")
    return np.concatenate(scores)


def save_series_csv(path, series: LabeledSeries) -> None:
    """Write the dataset CSV: header t,f1,...,fD,label."""
    d = series.dims
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t"] + [f"f{i + 1}" for i in range(d)] + ["label"])
        for t in range(series.length):
            row = [t] + [f"{x:.9g}" for x in series.values[:, t]]
            row.append(int(series.labels[t]))
            w.writerow(row)


def load_csv(path) -> LabeledSeries:
    """Read a dataset CSV (schema: t,f1,...,fD,label) into a LabeledSeries."""
    values = []
    labels = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "t" or header[-1] != "label":
            raise CsvFormatError(f"{path}: header must be t,f1,...,fD,label")
        d = len(header) - 2
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 2:
                raise CsvFormatError(f"{path}:{lineno}: expected {d + 2} cells, got {len(row)}")
            try:
                feats = [float(x) for x in row[1:-1]]
            except ValueError:
                raise CsvFormatError(f"{path}:{lineno}: non-numeric feature cell") from None
            if row[-1] not in ("0", "1"):
                raise CsvFormatError(f"{path}:{lineno}: label must be 0 or 1, got {row[-1]!r}")
            values.append(feats)
            labels.append(row[-1] == "1")
    if not values:
        raise CsvFormatError(f"{path}: no data rows")
    return LabeledSeries(np.array(values).T, np.array(labels))


def save_scores_csv(path, scores, labels) -> None:
    """Write the score CSV: header t,score,label."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError("scores/labels length mismatch")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "score", "label"])
        for t, (s, lab) in enumerate(zip(scores, labels)):
            w.writerow([t, f"{s:.9g}", int(lab)])


def load_scores_csv(path):
    """Read a score CSV; returns (scores, labels)."""
    scores, labels = [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != ["t", "score", "label"]:
            raise CsvFormatError(f"{path}: header must be t,score,label")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3 or row[2] not in ("0", "1"):
                raise CsvFormatError(f"{path}:{lineno}: malformed row")
            scores.append(float(row[1]))
            labels.append(row[2] == "1")
    return np.array(scores), np.array(labels, dtype=bool)
