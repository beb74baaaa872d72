"""Synthetic multivariate benchmark generation with controlled anomalies.

Each series dimension is a harmonic sinusoid stack plus Gaussian noise.
Anomalies are injected into a designated dimension (the last one by
convention): global/contextual point anomalies and seasonal/shapelet/trend
pattern anomalies, with the achieved ratio within one percentage point of
the request. All injection parameters are recorded in a metadata log so
every labeled point is attributable to an injection event.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sp_signal

ANOMALY_TYPES = ("global", "contextual", "seasonal", "shapelet", "trend")

# declared injection constants (emitted in metadata)
GLOBAL_SIGMA = 5.0          # minimum displacement of global points, in stds
CONTEXTUAL_SIGMA = 2.5      # displacement from the local mean
CONTEXT_WINDOW = 50         # local-context window for contextual anomalies
SEGMENT_LEN_RANGE = (5, 20)
FREQ_FACTORS = (2, 3)       # seasonal frequency multipliers
SLOPE_RANGE = (0.01, 0.05)  # trend drift per step, sign random
POINT_MIN_GAP = 10          # isolation gap between point anomalies
SEGMENT_MIN_GAP = 2
BASE_NOISE_SIGMA = 0.05
DEFAULT_RATIOS = {"global": 0.06, "contextual": 0.06, "seasonal": 0.06,
                  "shapelet": 0.06, "trend": 0.05}
DEFAULT_LENGTH = 50_000
DEFAULT_DIMS = 5
SPLIT_FRACTIONS = (0.4, 0.2, 0.4)  # train / val / test


@dataclass
class SynthConfig:
    anomaly_type: str
    length: int = DEFAULT_LENGTH
    dims: int = DEFAULT_DIMS
    ratio: float | None = None  # None picks the per-type default
    seed: int = 0

    def __post_init__(self):
        if self.anomaly_type not in ANOMALY_TYPES + ("multi",):
            raise ValueError(f"unknown anomaly type {self.anomaly_type!r}")
        if self.dims < 1 or self.length < 1:
            raise ValueError("dims and length must be positive")
        r = self.effective_ratio
        if not 0 <= r < 1:
            raise ValueError(f"anomaly ratio must be in [0, 1), got {r}")

    @property
    def effective_ratio(self) -> float:
        if self.ratio is not None:
            return self.ratio
        return DEFAULT_RATIOS.get(self.anomaly_type, 0.06)


@dataclass
class LabeledSeries:
    values: np.ndarray  # (D, L)
    labels: np.ndarray  # (L,) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.labels = np.asarray(self.labels, dtype=bool)
        if self.values.ndim != 2 or self.labels.shape != (self.values.shape[1],):
            raise ValueError("values must be (D, L) with labels of length L")

    @property
    def dims(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


def _dim_signal(params: dict, t: np.ndarray, freq_factor: float = 1.0) -> np.ndarray:
    """Evaluate one dimension's noiseless harmonic stack at timesteps t."""
    out = np.zeros_like(t, dtype=float)
    for amp, harmonic, phase in params["components"]:
        out += amp * np.sin(2 * np.pi * harmonic * freq_factor * t / params["period"] + phase)
    return out


def generate_base(dims: int, length: int, seed: int, *,
                  n_components=(1, 3), noise_sigma: float = BASE_NOISE_SIGMA,
                  period_range=(15, 30)):
    """Generate clean (D, L) base signals.

    Each dimension is 1..3 harmonically related sinusoids (so the dimension
    is periodic at its fundamental period) plus Gaussian noise, clipped to
    [-1.5, 1.5]. Returns (values, per-dimension parameter dicts).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    t = np.arange(length, dtype=float)
    values = np.empty((dims, length))
    dim_params = []
    for d in range(dims):
        n = int(rng.integers(n_components[0], n_components[1] + 1))
        comps = [(float(rng.uniform(0.5, 0.9)), 1, float(rng.uniform(0, 2 * np.pi)))]
        for k in range(1, n):
            comps.append((float(rng.uniform(0.05, 0.25)), k + 1,
                          float(rng.uniform(0, 2 * np.pi))))
        params = {"period": int(rng.integers(*period_range)), "components": comps,
                  "noise_sigma": noise_sigma}
        clean = _dim_signal(params, t)
        noisy = clean + rng.normal(0, noise_sigma, size=length) if noise_sigma > 0 else clean
        values[d] = np.clip(noisy, -1.5, 1.5)
        dim_params.append(params)
    return values, dim_params


def _place_points(rng, length: int, count: int, min_gap: int):
    """Sample `count` positions in [0, length) with pairwise gap >= min_gap."""
    if count == 0:
        return np.array([], dtype=int)
    gap = min_gap
    while gap > 2 and length - (count - 1) * (gap + 1) < count:
        gap -= 1
    room = length - (count - 1) * (gap + 1)
    if room < count:
        raise ValueError(
            f"cannot place {count} isolated points in {length} timesteps")
    q = np.sort(rng.choice(room, size=count, replace=False))
    return q + np.arange(count) * (gap + 1)


def _segment_lengths(rng, target: int):
    lo, hi = SEGMENT_LEN_RANGE
    lengths = []
    remaining = target
    while remaining > 0:
        if remaining <= hi:
            lengths.append(remaining)
            break
        n = int(rng.integers(lo, hi + 1))
        lengths.append(n)
        remaining -= n
    return lengths


def _place_segments(rng, length: int, seg_lengths, min_gap: int = SEGMENT_MIN_GAP):
    """Sample non-overlapping segment starts with gaps of at least min_gap."""
    k = len(seg_lengths)
    if k == 0:
        return []
    total = sum(seg_lengths) + (k - 1) * min_gap
    slack = length - total
    if slack < 0:
        raise ValueError(
            f"anomaly ratio too large: cannot place {k} segments "
            f"({sum(seg_lengths)} points) in {length} timesteps")
    order = rng.permutation(k)
    cuts = np.sort(rng.choice(slack + 1, size=k, replace=True))
    out = []
    cursor = 0
    for i, idx in enumerate(order):
        out.append((int(cuts[i]) + cursor, int(seg_lengths[idx])))
        cursor += int(seg_lengths[idx]) + min_gap
    return out


def inject(values: np.ndarray, dim_params: list, anomaly_type: str, ratio: float,
           seed: int, dim: int = -1):
    """Inject anomalies of one type into a single dimension.

    Returns (LabeledSeries, injection event list). The base values of all
    other dimensions are untouched (bit-identical).
    """
    if anomaly_type not in ANOMALY_TYPES:
        raise ValueError(f"unknown anomaly type {anomaly_type!r}")
    values = np.array(values, dtype=float, copy=True)
    dims, length = values.shape
    dim = dim % dims
    labels = np.zeros(length, dtype=bool)
    events = []
    target = int(round(ratio * length))
    if target == 0:
        return LabeledSeries(values, labels), events

    rng = np.random.default_rng(
        np.random.SeedSequence([seed, 1, ANOMALY_TYPES.index(anomaly_type),
                                int(round(ratio * 1_000_000))]))
    x = values[dim]
    params = dim_params[dim]
    sigma = float(x.std())
    mean = float(x.mean())

    if anomaly_type == "global":
        pos = _place_points(rng, length, target, POINT_MIN_GAP)
        for p in pos:
            sign = 1 if rng.random() < 0.5 else -1
            offset = (GLOBAL_SIGMA + rng.uniform(0.0, 2.0)) * sigma
            values[dim, p] = mean + sign * offset
            labels[p] = True
            events.append({"kind": "global", "start": int(p), "end": int(p),
                           "dim": dim, "offset": sign * offset})
    elif anomaly_type == "contextual":
        lo, hi = float(x.min()), float(x.max())
        pos = _place_points(rng, length, target, POINT_MIN_GAP)
        half = CONTEXT_WINDOW // 2
        for p in pos:
            local = x[max(0, p - half): p + half]
            mu_loc = float(local.mean())
            offset = (CONTEXTUAL_SIGMA + rng.uniform(0.0, 0.5)) * sigma
            # pick the direction with room inside the global range
            up, down = mu_loc + offset, mu_loc - offset
            if rng.random() < 0.5 and up <= hi:
                new = up
            elif down >= lo:
                new = down
            else:
                new = min(up, hi)
            values[dim, p] = new
            labels[p] = True
            events.append({"kind": "contextual", "start": int(p), "end": int(p),
                           "dim": dim, "value": new, "local_mean": mu_loc})
    else:
        segs = _place_segments(rng, length, _segment_lengths(rng, target))
        for start, seg_len in segs:
            t = np.arange(start, start + seg_len, dtype=float)
            noise = rng.normal(0, params["noise_sigma"], size=seg_len)
            if anomaly_type == "seasonal":
                factor = int(rng.choice(FREQ_FACTORS))
                values[dim, start:start + seg_len] = np.clip(
                    _dim_signal(params, t, freq_factor=factor) + noise, -1.5, 1.5)
                extra = {"freq_factor": factor}
            elif anomaly_type == "shapelet":
                amp, _, phase = params["components"][0]
                arg = 2 * np.pi * t / params["period"] + phase
                wave = sp_signal.square(arg) if rng.random() < 0.5 else sp_signal.sawtooth(arg)
                values[dim, start:start + seg_len] = np.clip(amp * wave + noise, -1.5, 1.5)
                extra = {"wave": "square_or_sawtooth", "amp": amp}
            else:  # trend
                slope = rng.uniform(*SLOPE_RANGE) * (1 if rng.random() < 0.5 else -1)
                drift = slope * np.arange(seg_len)
                values[dim, start:start + seg_len] = x[start:start + seg_len] + drift
                extra = {"slope": slope}
            labels[start:start + seg_len] = True
            events.append({"kind": anomaly_type, "start": int(start),
                           "end": int(start + seg_len - 1), "dim": dim, **extra})
    return LabeledSeries(values, labels), events


def _split_bounds(length: int):
    train_end = int(length * SPLIT_FRACTIONS[0])
    val_end = train_end + int(length * SPLIT_FRACTIONS[1])
    return (0, train_end), (train_end, val_end), (val_end, length)


def generate_dataset(config: SynthConfig, *, test_ratio: float | None = None):
    """Generate train/val/test LabeledSeries plus a metadata sidecar dict.

    Splits share one base-signal stream (so changing the ratio only moves
    anomalies) and are injected independently at the configured ratio;
    test_ratio overrides the test split's ratio when given.
    """
    if config.anomaly_type == "multi":
        return generate_multianomaly(dims=config.dims, seed=config.seed,
                                     length=config.length)
    base, dim_params = generate_base(config.dims, config.length, config.seed)
    r = config.effective_ratio
    splits = {}
    events = {}
    for name, (lo, hi) in zip(("train", "val", "test"), _split_bounds(config.length)):
        split_r = test_ratio if (name == "test" and test_ratio is not None) else r
        series, ev = inject(base[:, lo:hi], dim_params, config.anomaly_type,
                            split_r, seed=config.seed + {"train": 0, "val": 1, "test": 2}[name])
        splits[name] = series
        events[name] = ev
    metadata = {
        "anomaly_type": config.anomaly_type,
        "ratio": r,
        "test_ratio": test_ratio if test_ratio is not None else r,
        "seed": config.seed,
        "dims": config.dims,
        "length": config.length,
        "anomaly_dim": config.dims - 1,
        "dim_params": dim_params,
        "injection_constants": {
            "global_sigma": GLOBAL_SIGMA, "contextual_sigma": CONTEXTUAL_SIGMA,
            "context_window": CONTEXT_WINDOW, "segment_len_range": SEGMENT_LEN_RANGE,
            "freq_factors": FREQ_FACTORS, "slope_range": SLOPE_RANGE,
            "point_min_gap": POINT_MIN_GAP,
        },
        "events": events,
    }
    return splits, metadata


MULTI_TYPES = ("global", "contextual", "seasonal", "shapelet")


def generate_multianomaly(dims: int = 5, per_dim_ratio: float = 0.0125,
                          seed: int = 0, length: int = DEFAULT_LENGTH):
    """Four anomalous dimensions (one anomaly type each), last one clean.

    Labels are the union over dimensions; segments from different
    dimensions may overlap.
    """
    if dims < 5:
        raise ValueError("multi-anomaly generation needs at least 5 dimensions")
    base, dim_params = generate_base(dims, length, seed)
    splits = {}
    events = {}
    for si, (name, (lo, hi)) in enumerate(
            zip(("train", "val", "test"), _split_bounds(length))):
        values = base[:, lo:hi].copy()
        labels = np.zeros(hi - lo, dtype=bool)
        split_events = []
        for d, kind in enumerate(MULTI_TYPES):
            series, ev = inject(values, dim_params, kind, per_dim_ratio,
                                seed=seed + 10 * si + d, dim=d)
            values = series.values
            labels |= series.labels
            split_events.extend(ev)
        splits[name] = LabeledSeries(values, labels)
        events[name] = split_events
    metadata = {
        "anomaly_type": "multi",
        "per_dim_ratio": per_dim_ratio,
        "seed": seed,
        "dims": dims,
        "length": length,
        "anomalous_dims": list(range(4)),
        "clean_dim": dims - 1,
        "dim_params": dim_params,
        "events": events,
    }
    return splits, metadata
