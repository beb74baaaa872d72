"""DDPM over time-series windows treated as single-channel images.

A linear noise schedule drives closed-form forward corruption; a U-Net with
weight-standardized convolutions and sinusoidal timestep embeddings predicts
the injected noise; iterative reverse steps reconstruct the window, and the
per-timestep mean squared deviation from the original is the anomaly score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from . import evaluation
from .substrate import standardize_weights

DEFAULT_BETA_1 = 1e-4
DEFAULT_BETA_N = 0.02
DEFAULT_N = 100
M_CANDIDATES = (10, 20, 50, 60, 80)
DOWN_FACTORS = {"synthetic": (2, 4), "real": (2, 4, 8)}


@dataclass
class NoiseSchedule:
    """Tables beta_n, alpha_n, alpha_bar_n, beta_tilde_n for n = 1..N.

    Indexing is 1-based via the accessors; beta_tilde_1 uses alpha_bar_0 = 1.
    """

    betas: torch.Tensor
    alphas: torch.Tensor = field(init=False)
    alpha_bars: torch.Tensor = field(init=False)
    beta_tildes: torch.Tensor = field(init=False)

    def __post_init__(self):
        b = self.betas
        if b.ndim != 1 or not ((b > 0).all() and (b < 1).all()):
            raise ValueError("betas must be a 1-D tensor with values in (0, 1)")
        self.alphas = 1.0 - b
        self.alpha_bars = torch.cumprod(self.alphas, dim=0)
        prev = torch.cat([torch.ones(1, dtype=b.dtype), self.alpha_bars[:-1]])
        self.beta_tildes = (1 - prev) / (1 - self.alpha_bars) * b

    @property
    def n_levels(self) -> int:
        return len(self.betas)

    def beta(self, n):
        return self.betas[self._idx(n)]

    def alpha(self, n):
        return self.alphas[self._idx(n)]

    def alpha_bar(self, n):
        return self.alpha_bars[self._idx(n)]

    def beta_tilde(self, n):
        return self.beta_tildes[self._idx(n)]

    def _idx(self, n):
        if isinstance(n, torch.Tensor):
            return n.long() - 1
        if not 1 <= n <= self.n_levels:
            raise ValueError(f"noise level {n} outside 1..{self.n_levels}")
        return n - 1


def build_schedule(n_levels: int = DEFAULT_N, beta_1: float = DEFAULT_BETA_1,
                   beta_n: float = DEFAULT_BETA_N, dtype=torch.float32) -> NoiseSchedule:
    """Linear schedule beta_k = beta_1 + (k-1)/(N-1) * (beta_N - beta_1)."""
    if not 0 < beta_1 <= beta_n < 1:
        raise ValueError(f"need 0 < beta_1 <= beta_N < 1, got ({beta_1}, {beta_n})")
    if n_levels == 1:
        betas = torch.tensor([beta_1], dtype=dtype)
    else:
        betas = torch.linspace(beta_1, beta_n, n_levels, dtype=dtype)
    return NoiseSchedule(betas=betas)


def q_sample(x0, n, eps, schedule: NoiseSchedule):
    """Closed-form forward sample X^n = sqrt(abar_n) X^0 + sqrt(1-abar_n) eps.

    n may be an int (shared level) or a (B,) tensor of per-sample levels.
    """
    abar = schedule.alpha_bar(n)
    if isinstance(abar, torch.Tensor) and abar.ndim == 1 and x0.ndim > 1:
        abar = abar.reshape(-1, *([1] * (x0.ndim - 1)))
    abar = abar.to(x0.dtype) if isinstance(abar, torch.Tensor) else abar
    return torch.sqrt(abar) * x0 + torch.sqrt(1 - abar) * eps


def p_sample_step(net, schedule: NoiseSchedule, xn, n: int, z,
                  variance: str = "paper"):
    """One reverse step from X^n to X^{n-1}.

    variance="paper" adds beta_tilde_n * z exactly as printed in the source
    algorithm; "corrected" uses the variance-correct sqrt(beta_tilde_n) * z.
    z must be zeros when n == 1.
    """
    if variance not in ("paper", "corrected"):
        raise ValueError(f"unknown variance mode {variance!r}")
    n_batch = torch.full((xn.shape[0],), n, dtype=torch.long, device=xn.device)
    eps_pred = net(xn, n_batch)
    alpha = schedule.alpha(n)
    beta = schedule.beta(n)
    abar = schedule.alpha_bar(n)
    mean = (xn - beta / torch.sqrt(1 - abar) * eps_pred) / torch.sqrt(alpha)
    coeff = schedule.beta_tilde(n)
    if variance == "corrected":
        coeff = torch.sqrt(coeff)
    return mean + coeff * z


# ---------------------------------------------------------------------------
# denoiser network


class WSConv2d(nn.Conv2d):
    """Conv2d whose kernel is re-standardized at every forward pass."""

    def forward(self, x):
        return self._conv_forward(x, standardize_weights(self.weight), self.bias)


class SinusoidalTimeEmbedding(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.dim = dim

    def forward(self, n):
        dtype = n.dtype if n.is_floating_point() else torch.float32
        half = self.dim // 2
        freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=dtype)
                          / max(half - 1, 1))
        args = n.to(dtype)[:, None] * freqs[None, :]
        return torch.cat([args.sin(), args.cos()], dim=-1)


def _groups(channels: int) -> int:
    return math.gcd(8, channels)


class ResnetBlock(nn.Module):
    """Two weight-standardized convs with a timestep-conditioned bias."""

    def __init__(self, c_in: int, c_out: int, time_dim: int):
        super().__init__()
        self.conv1 = WSConv2d(c_in, c_out, 3, padding=1)
        self.norm1 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = WSConv2d(c_out, c_out, 3, padding=1)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        self.time_proj = nn.Linear(time_dim, c_out)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, t_emb):
        h = F.silu(self.norm1(self.conv1(x)))
        h = h + self.time_proj(t_emb)[:, :, None, None]
        h = F.silu(self.norm2(self.conv2(h)))
        return h + self.skip(x)


class UNet(nn.Module):
    """Noise predictor over (B, 1, D, T) inputs.

    One ResNet block per resolution on the way down and up, with stride-2
    halving at each level; the number of levels comes from the downsampling
    factor list ((2, 4) doubles to a total factor of 4 on both axes). Inputs
    are zero-padded to the deepest factor and the output is cropped back.
    """

    def __init__(self, base_channels: int = 32, factors=DOWN_FACTORS["synthetic"]):
        super().__init__()
        self.factors = tuple(factors)
        self.pad_multiple = self.factors[-1]
        levels = len(self.factors)
        chans = [base_channels * 2**i for i in range(levels + 1)]
        time_dim = base_channels * 4
        self.time_mlp = nn.Sequential(
            SinusoidalTimeEmbedding(base_channels),
            nn.Linear(base_channels, time_dim), nn.GELU(),
            nn.Linear(time_dim, time_dim))
        self.init_conv = WSConv2d(1, chans[0], 3, padding=1)
        self.down_blocks = nn.ModuleList(
            ResnetBlock(chans[i], chans[i], time_dim) for i in range(levels))
        self.downsamples = nn.ModuleList(
            nn.Conv2d(chans[i], chans[i + 1], 3, stride=2, padding=1)
            for i in range(levels))
        self.mid_block = ResnetBlock(chans[-1], chans[-1], time_dim)
        self.upsamples = nn.ModuleList(
            nn.ConvTranspose2d(chans[i + 1], chans[i], 2, stride=2)
            for i in reversed(range(levels)))
        self.up_blocks = nn.ModuleList(
            ResnetBlock(2 * chans[i], chans[i], time_dim)
            for i in reversed(range(levels)))
        self.final_conv = nn.Conv2d(chans[0], 1, 1)

    def forward(self, x, n):
        squeeze = x.ndim == 3
        if squeeze:  # (B, D, T) -> (B, 1, D, T)
            x = x[:, None]
        m = self.pad_multiple
        pad_h = (-x.shape[-2]) % m
        pad_w = (-x.shape[-1]) % m
        h = F.pad(x, (0, pad_w, 0, pad_h))
        t_emb = self.time_mlp(n.to(self.final_conv.weight.dtype))
        h = self.init_conv(h)
        skips = []
        for block, down in zip(self.down_blocks, self.downsamples):
            h = block(h, t_emb)
            skips.append(h)
            h = down(h)
        h = self.mid_block(h, t_emb)
        for up, block in zip(self.upsamples, self.up_blocks):
            h = up(h)
            h = block(torch.cat([h, skips.pop()], dim=1), t_emb)
        out = self.final_conv(h)
        out = out[..., : x.shape[-2], : x.shape[-1]]
        return out[:, 0] if squeeze else out


# ---------------------------------------------------------------------------
# training / detection


def diffusion_loss(net, schedule: NoiseSchedule, x0: torch.Tensor,
                   generator: torch.Generator) -> torch.Tensor:
    """Noise-prediction loss: squared error averaged over all elements.

    Levels n are uniform on 1..N per sample, eps is standard normal. The
    mean (rather than sum) reduction over window elements keeps the loss
    scale independent of window size, which matters when this term is
    weighted against a mean-reduced reconstruction loss in joint training.
    """
    b = x0.shape[0]
    n = torch.randint(1, schedule.n_levels + 1, (b,), generator=generator)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    xn = q_sample(x0, n, eps, schedule)
    eps_pred = net(xn, n)
    return F.mse_loss(eps_pred, eps)


@torch.no_grad()
def denoise(net, schedule: NoiseSchedule, x0: torch.Tensor, m: int,
            generator: torch.Generator, variance: str = "paper") -> torch.Tensor:
    """Corrupt x0 to level m, then run m reverse steps back to level 0."""
    if m == 0:
        return x0.clone()
    if m > schedule.n_levels:
        raise ValueError(f"M={m} exceeds schedule length {schedule.n_levels}")
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    x = q_sample(x0, m, eps, schedule)
    for n in range(m, 0, -1):
        if n > 1:
            z = torch.randn(x.shape, generator=generator, dtype=x.dtype)
        else:
            z = torch.zeros_like(x)
        x = p_sample_step(net, schedule, x, n, z, variance=variance)
    return x


def diff_score(x0, x0_tilde) -> torch.Tensor:
    """Per-timestep mean (over features) squared reconstruction error."""
    if x0.shape != x0_tilde.shape:
        raise ValueError("shape mismatch between input and reconstruction")
    return (x0 - x0_tilde).pow(2).mean(dim=-2)


@torch.no_grad()
def score_windows(net, schedule: NoiseSchedule, windows: torch.Tensor, m: int,
                  generator: torch.Generator, batch_size: int = 256,
                  variance: str = "paper"):
    """Flat per-timestep scores for a (l, D, T) window stack at noise level m."""
    net.eval()
    parts = []
    for i in range(0, windows.shape[0], batch_size):
        xb = windows[i : i + batch_size]
        xt = denoise(net, schedule, xb, m, generator, variance=variance)
        parts.append(diff_score(xb, xt).reshape(-1))
    net.train()
    return torch.cat(parts).cpu().numpy()


def select_m(score_fn, val_labels, candidates=M_CANDIDATES):
    """Pick the noise level maximizing validation F1_K-AUC; ties -> smaller M.

    score_fn(m) must return the flat validation score series for level m.
    Returns (m_star, best RunReport-ready {m: auc} map).
    """
    candidates = sorted(candidates)
    if not candidates:
        raise ValueError("no candidate noise levels")
    aucs = {}
    best_m, best = None, -np.inf
    for m in candidates:
        scores = score_fn(m)
        _, auc = evaluation.select_threshold(scores, val_labels)
        aucs[m] = auc
        if auc > best:
            best_m, best = m, auc
    return best_m, aucs
