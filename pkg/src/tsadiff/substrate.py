"""Numeric substrate: gradients, Adam, weight standardization, checkpoints.

Array storage and reverse-mode differentiation are delegated to torch (CPU
only); this module pins down the contracts the models rely on: explicit
non-finite detection, a deterministic Adam update, per-forward-pass kernel
standardization, and a versioned named-parameter checkpoint format.
"""

from __future__ import annotations

import io
import json
import struct

import torch

WS_EPS = 1e-5

CHECKPOINT_MAGIC = b"TSAD"
CHECKPOINT_VERSION = 1


class NumericError(RuntimeError):
    """Raised when a loss or gradient is non-finite."""


def forward_backward(loss_fn, params: dict[str, torch.Tensor]):
    """Evaluate a scalar loss and its reverse-mode gradients.

    loss_fn is a closure over `params` (tensors with requires_grad=True).
    Returns (loss value as float, {name: gradient tensor}).
    """
    loss = loss_fn()
    if loss.ndim != 0:
        raise ValueError("loss must be a scalar")
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss: {loss.item()}")
    named = [(n, p) for n, p in params.items() if p.requires_grad]
    grads = torch.autograd.grad(loss, [p for _, p in named], allow_unused=True)
    out = {}
    for (name, p), g in zip(named, grads):
        g = torch.zeros_like(p) if g is None else g
        if not torch.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        out[name] = g
    return float(loss.item()), out


class Adam:
    """Adam over a named parameter set (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params: dict[str, torch.Tensor], lr: float,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be positive")
        self.params = dict(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {n: torch.zeros_like(p) for n, p in self.params.items()}
        self.v = {n: torch.zeros_like(p) for n, p in self.params.items()}

    @torch.no_grad()
    def step(self, grads: dict[str, torch.Tensor]) -> None:
        self.step_count += 1
        t = self.step_count
        for name, g in grads.items():
            p = self.params[name]
            if g.shape != p.shape:
                raise ValueError(
                    f"gradient shape {tuple(g.shape)} != parameter shape "
                    f"{tuple(p.shape)} for {name!r}"
                )
            self.m[name].mul_(self.beta1).add_(g, alpha=1 - self.beta1)
            self.v[name].mul_(self.beta2).addcmul_(g, g, value=1 - self.beta2)
            m_hat = self.m[name] / (1 - self.beta1**t)
            v_hat = self.v[name] / (1 - self.beta2**t)
            p.sub_(self.lr * m_hat / (v_hat.sqrt() + self.eps))


def standardize_weights(kernel: torch.Tensor, eps: float = WS_EPS) -> torch.Tensor:
    """Normalize each output-channel slice to zero mean, unit variance.

    Applied to convolution kernels at every forward pass. Constant slices
    collapse to zero (the eps keeps the division finite).
    """
    if kernel.ndim < 2:
        raise ValueError("kernel needs an output-channel leading axis")
    flat = kernel.reshape(kernel.shape[0], -1)
    mean = flat.mean(dim=1, keepdim=True)
    std = flat.std(dim=1, unbiased=False, keepdim=True)
    out = (flat - mean) / (std + eps)
    return out.reshape(kernel.shape)


def save_checkpoint(path, params: dict[str, torch.Tensor], metadata: dict | None = None):
    """Write named parameters as (name, shape, row-major float32 values).

    Layout: magic, version, JSON metadata blob, entry count, then entries.
    """
    meta_bytes = json.dumps(metadata or {}).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<II", CHECKPOINT_VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(params)))
    for name, tensor in params.items():
        name_b = name.encode("utf-8")
        shape = tuple(tensor.shape)
        buf.write(struct.pack("<H", len(name_b)))
        buf.write(name_b)
        buf.write(struct.pack("<B", len(shape)))
        buf.write(struct.pack(f"<{len(shape)}q", *shape))
        data = tensor.detach().to(torch.float32).contiguous().numpy().tobytes()
        buf.write(data)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_checkpoint(path):
    """Read a checkpoint; returns ({name: float32 tensor}, metadata)."""
    with open(path, "rb") as f:
        raw = f.read()
    buf = io.BytesIO(raw)
    if buf.read(4) != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, meta_len = struct.unpack("<II", buf.read(8))
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    metadata = json.loads(buf.read(meta_len).decode("utf-8"))
    (count,) = struct.unpack("<I", buf.read(4))
    params = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", buf.read(2))
        name = buf.read(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", buf.read(1))
        shape = struct.unpack(f"<{ndim}q", buf.read(8 * ndim)) if ndim else ()
        numel = 1
        for s in shape:
            numel *= s
        data = buf.read(4 * numel)
        t = torch.frombuffer(bytearray(data), dtype=torch.float32).reshape(shape)
        params[name] = t.clone()
    return params, metadata


def seed_all(seed: int) -> torch.Generator:
    """Seed torch's global RNG and return a dedicated generator."""
    torch.manual_seed(seed)
    gen = torch.Generator()
    gen.manual_seed(seed)
    return gen
