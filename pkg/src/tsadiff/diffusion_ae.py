"""Jointly trained autoencoder + diffusion model.

The autoencoder reconstructs each window; the diffusion model learns to
denoise the corrupted *reconstruction*, and both parameter sets are updated
by one gradient step on L = L_AE + lambda * L_Dif. At detection time noise
is added to the reconstruction, the reverse process runs as usual, and the
score compares the denoised output against the original input.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .autoencoder import AEConfig, TransformerAE
from .diffusion import NoiseSchedule, UNet, denoise, diff_score, q_sample

DEFAULT_LAMBDA = 0.1
DEFAULT_WARMUP_EPOCHS = 5


@dataclass
class JointConfig:
    diffusion_weight: float = DEFAULT_LAMBDA  # lambda on the diffusion loss
    warmup_epochs: int = DEFAULT_WARMUP_EPOCHS
    detach_reconstruction: bool = False  # ablation: cut the phi path through L_Dif

    def __post_init__(self):
        if self.diffusion_weight <= 0:
            raise ValueError("diffusion loss weight must be positive")
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")


class DiffusionAE(nn.Module):
    """Bundles the autoencoder (phi) and the denoiser (theta)."""

    def __init__(self, ae: TransformerAE, net: UNet):
        super().__init__()
        self.ae = ae
        self.net = net


def joint_loss(model: DiffusionAE, schedule: NoiseSchedule, batch: torch.Tensor,
               lam: float, generator: torch.Generator,
               detach_reconstruction: bool = False):
    """Compute (L, L_AE, L_Dif) for one batch.

    L_Dif corrupts the autoencoder reconstruction, so (unless detached) its
    gradient flows into the autoencoder parameters as well.
    """
    x_hat = model.ae(batch)
    loss_ae = F.mse_loss(x_hat, batch)
    b = batch.shape[0]
    n = torch.randint(1, schedule.n_levels + 1, (b,), generator=generator)
    eps = torch.randn(batch.shape, generator=generator, dtype=batch.dtype)
    cond = x_hat.detach() if detach_reconstruction else x_hat
    xn = q_sample(cond, n, eps, schedule)
    eps_pred = model.net(xn, n)
    # Mean reduction matches loss_ae's scale; a summed L_Dif (~500x larger
    # here) lets the lambda-weighted term dominate the shared autoencoder
    # gradient and collapse the reconstruction.
    loss_dif = F.mse_loss(eps_pred, eps)
    return loss_ae + lam * loss_dif, loss_ae, loss_dif


def warmup_then_joint(model: DiffusionAE, schedule: NoiseSchedule,
                      windows: torch.Tensor, joint_cfg: JointConfig,
                      train_cfg, val_fn=None):
    """Train the autoencoder alone for warmup_epochs, then both jointly.

    The denoiser parameters are untouched during warmup. Returns the
    (warmup TrainResult or None, joint TrainResult).
    """
    from dataclasses import replace

    from .autoencoder import ae_loss
    from .training import fit

    warmup_result = None
    if joint_cfg.warmup_epochs > 0:
        warm_cfg = replace(train_cfg, epochs=joint_cfg.warmup_epochs)
        warmup_result = fit(model.ae, lambda xb, gen: ae_loss(model.ae, xb),
                            windows, warm_cfg, val_fn=None)
    result = fit(
        model,
        lambda xb, gen: joint_loss(model, schedule, xb, joint_cfg.diffusion_weight,
                                   gen, joint_cfg.detach_reconstruction)[0],
        windows, train_cfg, val_fn=val_fn,
        start_epoch=joint_cfg.warmup_epochs)
    return warmup_result, result


@torch.no_grad()
def detect(model: DiffusionAE, schedule: NoiseSchedule, x0: torch.Tensor,
           m: int, generator: torch.Generator, variance: str = "paper"):
    """Anomaly scores for a (B, D, T) batch of windows.

    The reverse loop never sees x0: it starts from the corrupted
    reconstruction; x0 is used again only in the final score.
    """
    model.eval()
    x_hat = model.ae(x0)
    x_tilde = denoise(model.net, schedule, x_hat, m, generator, variance=variance)
    model.train()
    return diff_score(x0, x_tilde)


@torch.no_grad()
def score_windows(model: DiffusionAE, schedule: NoiseSchedule,
                  windows: torch.Tensor, m: int, generator: torch.Generator,
                  batch_size: int = 256, variance: str = "paper"):
    """Flat per-timestep scores for a (l, D, T) window stack."""
    parts = []
    for i in range(0, windows.shape[0], batch_size):
        xb = windows[i : i + batch_size]
        parts.append(detect(model, schedule, xb, m, generator, variance=variance).reshape(-1))
    return torch.cat(parts).cpu().numpy()
