"""Transformer autoencoder with a mean-pooled bottleneck.

The encoder is a standard Transformer over the T timesteps of a window; its
outputs are mean-pooled into a single vector z, and every decoder layer
cross-attends to z alone (a one-row key/value matrix). Anomaly score per
timestep is the squared reconstruction error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class AEConfig:
    features: int = 5          # D
    window: int = 100          # T
    d_model: int = 64
    n_heads: int = 4
    n_encoder_layers: int = 2
    n_decoder_layers: int = 2
    d_ff: int = 128

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")


def sinusoidal_positions(length: int, dim: int, dtype=torch.float32) -> torch.Tensor:
    """Fixed sinusoidal position encodings, shape (length, dim)."""
    pos = torch.arange(length, dtype=dtype)[:, None]
    half = torch.arange(0, dim, 2, dtype=dtype)
    angles = pos / torch.pow(10000.0, half / dim)
    enc = torch.zeros(length, dim, dtype=dtype)
    enc[:, 0::2] = torch.sin(angles)
    enc[:, 1::2] = torch.cos(angles[:, : dim - dim // 2])
    return enc


def attention(q, k, v):
    """Scaled dot-product attention; q,k,v are (..., seq, head_dim)."""
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.shape[-1])
    return torch.softmax(scores, dim=-1) @ v


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.wq = nn.Linear(d_model, d_model)
        self.wk = nn.Linear(d_model, d_model)
        self.wv = nn.Linear(d_model, d_model)
        self.wo = nn.Linear(d_model, d_model)

    def _split(self, x):
        b, t, _ = x.shape
        return x.reshape(b, t, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, query, keyvalue):
        q = self._split(self.wq(query))
        k = self._split(self.wk(keyvalue))
        v = self._split(self.wv(keyvalue))
        out = attention(q, k, v)
        b, _, t, _ = out.shape
        return self.wo(out.transpose(1, 2).reshape(b, t, -1))


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int):
        super().__init__()
        self.net = nn.Sequential(nn.Linear(d_model, d_ff), nn.ReLU(),
                                 nn.Linear(d_ff, d_model))

    def forward(self, x):
        return self.net(x)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)

    def forward(self, x):
        x = self.norm1(x + self.attn(x, x))
        return self.norm2(x + self.ff(x))


class DecoderLayer(nn.Module):
    """Self-attention, then cross-attention onto the single bottleneck key."""

    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff)
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.norm3 = nn.LayerNorm(cfg.d_model)

    def forward(self, x, z):
        x = self.norm1(x + self.self_attn(x, x))
        x = self.norm2(x + self.cross_attn(x, z[:, None, :]))
        return self.norm3(x + self.ff(x))


class TransformerAE(nn.Module):
    def __init__(self, cfg: AEConfig):
        super().__init__()
        self.cfg = cfg
        self.in_proj = nn.Linear(cfg.features, cfg.d_model)
        self.out_proj = nn.Linear(cfg.d_model, cfg.features)
        self.register_buffer("pos", sinusoidal_positions(cfg.window, cfg.d_model))
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.n_encoder_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.n_decoder_layers))

    def embed(self, x):
        # x: (B, D, T) -> (B, T, d_model)
        h = self.in_proj(x.transpose(1, 2))
        return h + self.pos.to(h.dtype)

    def encode(self, x, use_positions: bool = True):
        h = self.in_proj(x.transpose(1, 2))
        if use_positions:
            h = h + self.pos.to(h.dtype)
        for layer in self.encoder:
            h = layer(h)
        return h  # (B, T, d_model)

    @staticmethod
    def bottleneck(h):
        """Mean over timesteps: the decoder sees exactly this one vector."""
        return h.mean(dim=1)  # (B, d_model)

    def decode(self, x, z):
        # The decoder starts from the positional encodings alone, so every
        # bit of content information must pass through the single vector z.
        # Feeding the embedded input here instead opens a pass-through path
        # that reconstructs anomalies perfectly and kills the score.
        s = self.pos.to(z.dtype).expand(x.shape[0], -1, -1)
        for layer in self.decoder:
            s = layer(s, z)
        return self.out_proj(s).transpose(1, 2)  # (B, D, T)

    def forward(self, x):
        if x.shape[-2:] != (self.cfg.features, self.cfg.window):
            raise ValueError(
                f"expected (*, {self.cfg.features}, {self.cfg.window}) input, "
                f"got {tuple(x.shape)}")
        return self.decode(x, self.bottleneck(self.encode(x)))


def ae_score(x, x_hat) -> torch.Tensor:
    """Per-timestep squared reconstruction error (no 1/D factor)."""
    if x.shape != x_hat.shape:
        raise ValueError("shape mismatch between input and reconstruction")
    return (x - x_hat).pow(2).sum(dim=-2)


def ae_loss(model: TransformerAE, batch: torch.Tensor) -> torch.Tensor:
    """Mean-squared reconstruction error over a batch of windows."""
    return F.mse_loss(model(batch), batch)


@torch.no_grad()
def score_windows(model: TransformerAE, windows: torch.Tensor, batch_size: int = 64):
    """Flat per-timestep scores for a (l, D, T) stack of windows."""
    model.eval()
    parts = []
    for i in range(0, windows.shape[0], batch_size):
        xb = windows[i : i + batch_size]
        parts.append(ae_score(xb, model(xb)).reshape(-1))
    model.train()
    return torch.cat(parts).cpu().numpy()
