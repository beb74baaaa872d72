"""End-to-end runs: prepare data, train a detector, score splits, evaluate.

This is the layer shared by the command-line interface, the experiment
suites and the acceptance tests. A run is a pure function of
(config, seed, input data): reruns reproduce metrics bit-identically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from . import diffusion as df
from . import evaluation, pipeline, substrate
from .autoencoder import AEConfig, TransformerAE, ae_loss
from .autoencoder import score_windows as ae_score_windows
from .diffusion_ae import (DiffusionAE, JointConfig, warmup_then_joint)
from .diffusion_ae import score_windows as joint_score_windows
from .synthgen import LabeledSeries
from .training import TrainConfig, fit

MODEL_KINDS = ("ae", "diffusion", "diffusion_ae")
MAX_ABS_DATASETS = ("global", "contextual", "seasonal", "shapelet", "multi")
BATCH_GRID = (8, 16, 32, 64, 128)
LR_GRID = (1e-3, 1e-4)
LAMBDA_GRID = (0.1, 0.01)


@dataclass
class RunConfig:
    model: str = "diffusion_ae"
    window: int = pipeline.DEFAULT_WINDOW
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 5
    # diffusion settings
    n_levels: int = df.DEFAULT_N
    m_candidates: tuple = df.M_CANDIDATES
    checkpoint_m: int = 50       # fixed level for per-epoch validation scoring
    unet_channels: int = 32
    dataset_class: str = "synthetic"
    variance: str = "paper"
    # joint settings
    diffusion_weight: float = 0.1
    warmup_epochs: int = 5
    # autoencoder settings
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    d_ff: int = 128

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.dataset_class not in df.DOWN_FACTORS:
            raise ValueError(f"dataset_class must be one of {tuple(df.DOWN_FACTORS)}")
        if self.m_candidates and max(self.m_candidates) > self.n_levels:
            raise ValueError("test noise levels M must not exceed the training level N")


def scaler_kind_for(anomaly_type: str) -> str:
    return "max_abs" if anomaly_type in MAX_ABS_DATASETS else "min_max"


@dataclass
class PreparedData:
    windows: dict        # split -> torch (l, D, T)
    labels: dict         # split -> flat bool labels (l*T,)
    scaler: pipeline.Scaler
    dropped: dict        # split -> dropped tail timesteps
    features: int = 0

    @classmethod
    def from_splits(cls, splits: dict, scaler_kind: str, window: int):
        scaler = pipeline.fit_scaler(splits["train"], scaler_kind)
        windows, labels, dropped = {}, {}, {}
        for name, series in splits.items():
            scaled = pipeline.apply_scaler(series, scaler)
            ws = pipeline.make_windows(scaled, window)
            windows[name] = torch.from_numpy(ws.windows).float()
            labels[name] = ws.flat_labels
            dropped[name] = ws.dropped_tail
        return cls(windows=windows, labels=labels, scaler=scaler, dropped=dropped,
                   features=splits["train"].dims)


@dataclass
class TrainedDetector:
    config: RunConfig
    model: torch.nn.Module           # TransformerAE or DiffusionAE
    schedule: df.NoiseSchedule | None
    train_result: object
    m_star: int | None = None
    m_aucs: dict = field(default_factory=dict)

    def score(self, windows: torch.Tensor, m: int | None = None,
              eval_seed: int = 0) -> np.ndarray:
        """Flat per-timestep scores; fresh noise from a fixed evaluation seed."""
        gen = torch.Generator()
        gen.manual_seed(eval_seed)
        cfg = self.config
        if cfg.model == "ae":
            return ae_score_windows(self.model, windows)
        m = m if m is not None else (self.m_star or cfg.checkpoint_m)
        if cfg.model == "diffusion":
            return df.score_windows(self.model, self.schedule, windows, m, gen,
                                    variance=cfg.variance)
        return joint_score_windows(self.model, self.schedule, windows, m, gen,
                                   variance=cfg.variance)


def _val_metric_fn(detector: TrainedDetector, data: PreparedData):
    def val_fn():
        scores = detector.score(data.windows["val"], m=detector.config.checkpoint_m,
                                eval_seed=detector.config.seed)
        _, auc = evaluation.select_threshold(scores, data.labels["val"])
        return auc
    return val_fn


def train_detector(cfg: RunConfig, data: PreparedData) -> TrainedDetector:
    """Train the configured model with best-validation checkpointing."""
    torch.manual_seed(cfg.seed)
    ae_cfg = AEConfig(features=data.features, window=cfg.window,
                      d_model=cfg.d_model, n_heads=cfg.n_heads,
                      n_encoder_layers=cfg.n_layers, n_decoder_layers=cfg.n_layers,
                      d_ff=cfg.d_ff)
    train_cfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size,
                            lr=cfg.lr, seed=cfg.seed, eval_every=cfg.eval_every)
    schedule = None
    if cfg.model == "ae":
        model = TransformerAE(ae_cfg)
        detector = TrainedDetector(cfg, model, None, None)
        result = fit(model, lambda xb, gen: ae_loss(model, xb),
                     data.windows["train"], train_cfg,
                     val_fn=_val_metric_fn(detector, data))
    else:
        schedule = df.build_schedule(cfg.n_levels)
        net = df.UNet(base_channels=cfg.unet_channels,
                      factors=df.DOWN_FACTORS[cfg.dataset_class])
        if cfg.model == "diffusion":
            detector = TrainedDetector(cfg, net, schedule, None)
            result = fit(net,
                         lambda xb, gen: df.diffusion_loss(net, schedule, xb, gen),
                         data.windows["train"], train_cfg,
                         val_fn=_val_metric_fn(detector, data))
        else:
            model = DiffusionAE(TransformerAE(ae_cfg),
                                df.UNet(base_channels=cfg.unet_channels,
                                        factors=df.DOWN_FACTORS[cfg.dataset_class]))
            detector = TrainedDetector(cfg, model, schedule, None)
            joint_cfg = JointConfig(diffusion_weight=cfg.diffusion_weight,
                                    warmup_epochs=cfg.warmup_epochs)
            _, result = warmup_then_joint(model, schedule, data.windows["train"],
                                          joint_cfg, train_cfg,
                                          val_fn=_val_metric_fn(detector, data))
    detector.train_result = result
    if cfg.model != "ae":
        detector.m_star, detector.m_aucs = df.select_m(
            lambda m: detector.score(data.windows["val"], m=m, eval_seed=cfg.seed),
            data.labels["val"], cfg.m_candidates)
    return detector


@dataclass
class RunReport:
    config: dict
    model: str
    seed: int
    delta_star: float
    m_star: int | None
    val_f1k_auc: float
    test_f1k_auc: float
    test_rock_auc: float
    dataset_stats: dict
    dropped_tail: dict
    best_epoch: int
    wall_clock_seconds: float
    scores: dict = field(default_factory=dict, repr=False)  # split -> np array
    detector: object = field(default=None, repr=False, compare=False)


def evaluate_detector(detector: TrainedDetector, data: PreparedData,
                      score_train: bool = True) -> RunReport:
    """Select the threshold on validation, report test metrics."""
    t0 = time.perf_counter()
    cfg = detector.config
    val_scores = detector.score(data.windows["val"], eval_seed=cfg.seed)
    test_scores = detector.score(data.windows["test"], eval_seed=cfg.seed + 1)
    delta, val_auc = evaluation.select_threshold(val_scores, data.labels["val"])
    test_f1k = evaluation.f1k_auc(test_scores, data.labels["test"], delta).area
    _, test_rock = evaluation.rock_auc(test_scores, data.labels["test"])
    stats = {name: {"length": int(labels.size + data.dropped[name]),
                    "anomaly_ratio": float(np.mean(labels))}
             for name, labels in data.labels.items()}
    result = detector.train_result
    return RunReport(
        config=asdict(cfg), model=cfg.model, seed=cfg.seed,
        delta_star=delta, m_star=detector.m_star,
        val_f1k_auc=val_auc, test_f1k_auc=test_f1k, test_rock_auc=test_rock,
        dataset_stats=stats, dropped_tail=dict(data.dropped),
        best_epoch=result.best_epoch if result is not None else -1,
        wall_clock_seconds=time.perf_counter() - t0,
        scores={"val": val_scores, "test": test_scores,
                **({"train": detector.score(data.windows["train"],
                                            eval_seed=cfg.seed + 2)}
                   if score_train else {})},
    )


def run(cfg: RunConfig, splits: dict, anomaly_type: str = "seasonal",
        score_train: bool = True) -> RunReport:
    """Train and evaluate one detector on prepared splits."""
    t0 = time.perf_counter()
    data = PreparedData.from_splits(splits, scaler_kind_for(anomaly_type), cfg.window)
    detector = train_detector(cfg, data)
    report = evaluate_detector(detector, data, score_train=score_train)
    report.wall_clock_seconds = time.perf_counter() - t0
    report.detector = detector  # kept for checkpointing by the CLI
    return report


def save_detector(path, detector: TrainedDetector) -> None:
    params = {k: v for k, v in detector.model.state_dict().items()}
    meta = {"config": asdict(detector.config)}
    if detector.schedule is not None:
        meta["schedule"] = {
            "n_levels": detector.schedule.n_levels,
            "beta_1": float(detector.schedule.betas[0]),
            "beta_n": float(detector.schedule.betas[-1]),
        }
    if detector.m_star is not None:
        meta["m_star"] = detector.m_star
    substrate.save_checkpoint(path, params, meta)


def load_detector(path, features: int) -> TrainedDetector:
    params, meta = substrate.load_checkpoint(path)
    cfg = RunConfig(**{k: tuple(v) if isinstance(v, list) else v
                       for k, v in meta["config"].items()})
    ae_cfg = AEConfig(features=features, window=cfg.window, d_model=cfg.d_model,
                      n_heads=cfg.n_heads, n_encoder_layers=cfg.n_layers,
                      n_decoder_layers=cfg.n_layers, d_ff=cfg.d_ff)
    schedule = None
    if cfg.model == "ae":
        model = TransformerAE(ae_cfg)
    else:
        sched_meta = meta["schedule"]
        schedule = df.build_schedule(sched_meta["n_levels"], sched_meta["beta_1"],
                                     sched_meta["beta_n"])
        if cfg.model == "diffusion":
            model = df.UNet(base_channels=cfg.unet_channels,
                            factors=df.DOWN_FACTORS[cfg.dataset_class])
        else:
            model = DiffusionAE(TransformerAE(ae_cfg),
                                df.UNet(base_channels=cfg.unet_channels,
                                        factors=df.DOWN_FACTORS[cfg.dataset_class]))
    model.load_state_dict(params)
    detector = TrainedDetector(cfg, model, schedule, None,
                               m_star=meta.get("m_star"))
    return detector
