"""PA%K-family evaluation: point adjustment, F1_K-AUC, ROC_K-AUC.

Point adjustment marks a whole true anomaly segment as detected once enough
of its points are flagged.  PA%K parameterizes "enough" as at least K percent
(with at least one hit); sweeping K from 0 to 100 and integrating the
resulting F1 (or ROC) curves yields threshold- and K-robust summary metrics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

K_GRID = np.arange(101)  # integer K percentages 0..100
N_THRESHOLDS = 50


@dataclass(frozen=True)
class Segment:
    """Maximal run of consecutive true-anomaly labels, inclusive indices."""

    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class MetricCurve:
    """Sampled curve (x strictly increasing) and its trapezoidal area."""

    x: np.ndarray
    y: np.ndarray
    area: float


def find_segments(labels) -> list[Segment]:
    """Extract maximal runs of true labels, in order."""
    labels = np.asarray(labels, dtype=bool)
    if labels.size == 0:
        return []
    padded = np.concatenate(([False], labels, [False]))
    diff = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1) - 1
    return [Segment(int(s), int(e)) for s, e in zip(starts, ends)]


def point_adjust(preds, labels, k: float) -> np.ndarray:
    """Apply PA%K adjustment to binary predictions.

    A true segment whose hit fraction reaches K% (and has at least one hit)
    is fully credited: every prediction inside it is set positive.
    Predictions outside true segments are never modified.
    """
    preds = np.asarray(preds, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if preds.shape != labels.shape:
        raise ValueError(f"preds length {preds.shape} != labels length {labels.shape}")
    if not 0 <= k <= 100:
        raise ValueError(f"K must be in [0, 100], got {k}")
    adjusted = preds.copy()
    for seg in find_segments(labels):
        hits = int(preds[seg.start : seg.end + 1].sum())
        if hits >= 1 and 100.0 * hits / len(seg) >= k:
            adjusted[seg.start : seg.end + 1] = True
    return adjusted


def f1(preds, labels) -> float:
    """F1 of the positive class; 0 when precision + recall is 0."""
    preds = np.asarray(preds, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if preds.shape != labels.shape:
        raise ValueError("preds/labels length mismatch")
    tp = int(np.sum(preds & labels))
    fp = int(np.sum(preds & ~labels))
    fn = int(np.sum(~preds & labels))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2.0 * tp / (2 * tp + fp + fn)


def threshold_grid(scores) -> np.ndarray:
    """50 evenly-spaced thresholds {k * s_max / 50 : k = 0..49}."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty score series")
    s_max = float(scores.max())
    return s_max * np.arange(N_THRESHOLDS) / N_THRESHOLDS


def _segment_counts(scores, labels, deltas):
    """Per-threshold confusion ingredients for PA%K metrics.

    Returns (hits, seg_lens, fp_out, n_pos, n_neg) where hits has shape
    (n_deltas, n_segments): raw positive predictions inside each true
    segment, and fp_out the positives outside any segment.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    deltas = np.asarray(deltas, dtype=float)
    segs = find_segments(labels)
    seg_lens = np.array([len(s) for s in segs], dtype=float)
    preds = scores[None, :] > deltas[:, None]  # (n_deltas, L)
    if segs:
        hits = np.stack(
            [preds[:, s.start : s.end + 1].sum(axis=1) for s in segs], axis=1
        ).astype(float)
    else:
        hits = np.zeros((len(deltas), 0))
    fp_out = preds[:, ~labels].sum(axis=1).astype(float)
    n_pos = float(labels.sum())
    n_neg = float((~labels).sum())
    return hits, seg_lens, fp_out, n_pos, n_neg


def _adjusted_tp(hits, seg_lens, k_grid):
    """TP after PA%K for every (delta, K) pair.

    hits: (n_deltas, n_segs); returns (n_deltas, n_K).
    """
    if hits.shape[1] == 0:
        return np.zeros((hits.shape[0], len(k_grid)))
    frac = 100.0 * hits / seg_lens[None, :]
    # (n_deltas, n_segs, n_K): credited segments get full length, others raw hits
    credited = (hits[:, :, None] >= 1) & (frac[:, :, None] >= k_grid[None, None, :])
    tp = np.where(credited, seg_lens[None, :, None], hits[:, :, None])
    return tp.sum(axis=1)


def f1_at_k(scores, labels, delta: float, k_grid=K_GRID) -> np.ndarray:
    """F1 after PA%K adjustment for each K in k_grid, at threshold delta."""
    hits, seg_lens, fp_out, n_pos, _ = _segment_counts(scores, labels, [delta])
    tp = _adjusted_tp(hits, seg_lens, np.asarray(k_grid, dtype=float))[0]
    fp = fp_out[0]
    fn = n_pos - tp
    denom = 2 * tp + fp + fn
    with np.errstate(invalid="ignore"):
        out = np.where(denom > 0, 2 * tp / denom, 0.0)
    return out


def f1k_auc(scores, labels, delta: float) -> MetricCurve:
    """Area under the F1-vs-K curve for K = 0..100, normalized into [0, 1]."""
    ks = K_GRID.astype(float)
    f1s = f1_at_k(scores, labels, delta)
    area = float(np.trapezoid(f1s, ks) / 100.0)
    return MetricCurve(x=ks, y=f1s, area=area)


def select_threshold(scores, labels) -> tuple[float, float]:
    """Pick the grid threshold maximizing F1_K-AUC; ties go to the smaller.

    Returns (delta_star, its F1_K-AUC).
    """
    scores = np.asarray(scores, dtype=float)
    deltas = threshold_grid(scores)
    hits, seg_lens, fp_out, n_pos, _ = _segment_counts(scores, labels, deltas)
    tp = _adjusted_tp(hits, seg_lens, K_GRID.astype(float))
    fn = n_pos - tp
    denom = 2 * tp + fp_out[:, None] + fn
    with np.errstate(invalid="ignore"):
        f1s = np.where(denom > 0, 2 * tp / denom, 0.0)
    areas = np.trapezoid(f1s, K_GRID.astype(float), axis=1) / 100.0
    best = int(np.argmax(areas))  # argmax returns the first (smallest) maximizer
    return float(deltas[best]), float(areas[best])


def rock_auc(scores, labels) -> tuple[list[MetricCurve], float]:
    """ROC_K-AUC: per-K ROC curves over the threshold grid, averaged over K.

    The grid is augmented with delta = +inf (anchors (0, 0)) and delta = -inf
    (all-positive predictions, anchors (1, 1)).
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    deltas = np.concatenate([threshold_grid(scores), [np.inf, -np.inf]])
    hits, seg_lens, fp_out, n_pos, n_neg = _segment_counts(scores, labels, deltas)
    tp = _adjusted_tp(hits, seg_lens, K_GRID.astype(float))  # (n_deltas, n_K)
    tpr = tp / n_pos if n_pos > 0 else np.zeros_like(tp)
    fpr = fp_out / n_neg if n_neg > 0 else np.zeros_like(fp_out)
    curves = []
    aucs = np.empty(len(K_GRID))
    for j in range(len(K_GRID)):
        order = np.lexsort((tpr[:, j], fpr))
        x, y = fpr[order], tpr[order, j]
        auc = float(np.trapezoid(y, x))
        curves.append(MetricCurve(x=x, y=y, area=auc))
        aucs[j] = auc
    return curves, float(aucs.mean())


def spearman(xs, ys) -> float:
    """Spearman rank correlation (average ranks for ties)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise ValueError("need two equal-length vectors with n >= 2")
    with warnings.catch_warnings():
        # constant input surfaces as a ValueError below, not a warning
        warnings.simplefilter("ignore", stats.ConstantInputWarning)
        rho = stats.spearmanr(xs, ys).statistic
    if not np.isfinite(rho):
        raise ValueError("rank correlation undefined (zero rank variance)")
    return float(rho)
