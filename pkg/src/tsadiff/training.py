"""Shared training loop: Adam over named parameters, best-validation restore.

Single-threaded and fully seeded; a fixed seed reproduces the loss sequence
bit-for-bit on one platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from . import substrate


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 1  # validation-metric cadence for checkpoint selection


@dataclass
class TrainResult:
    epoch_losses: list = field(default_factory=list)
    val_history: list = field(default_factory=list)  # (epoch, metric)
    best_epoch: int = -1
    best_val_metric: float = float("-inf")


def fit(module: torch.nn.Module, loss_fn, windows: torch.Tensor,
        cfg: TrainConfig, val_fn=None, start_epoch: int = 0) -> TrainResult:
    """Train `module` on a (l, D, T) window stack.

    loss_fn(batch, generator) must return a scalar loss tensor; val_fn(),
    when given, returns a higher-is-better validation metric (F1_K-AUC) used
    to select the restored checkpoint. Raises substrate.NumericError with
    epoch context on non-finite losses.
    """
    params = dict(module.named_parameters())
    opt = substrate.Adam(params, lr=cfg.lr)
    # separate streams so losses that draw extra noise leave shuffling intact
    shuffle_gen = substrate.seed_all(cfg.seed)
    noise_gen = torch.Generator()
    noise_gen.manual_seed(cfg.seed + 0x9E3779B9)
    result = TrainResult()
    best_state = None
    n_windows = windows.shape[0]
    for epoch in range(start_epoch, start_epoch + cfg.epochs):
        perm = torch.randperm(n_windows, generator=shuffle_gen)
        total, batches = 0.0, 0
        for i in range(0, n_windows, cfg.batch_size):
            xb = windows[perm[i : i + cfg.batch_size]]
            try:
                loss, grads = substrate.forward_backward(
                    lambda: loss_fn(xb, noise_gen), params)
            except substrate.NumericError as e:
                raise substrate.NumericError(f"epoch {epoch}: {e}") from e
            opt.step(grads)
            total += loss
            batches += 1
        result.epoch_losses.append(total / max(batches, 1))
        is_last = epoch == start_epoch + cfg.epochs - 1
        if val_fn is not None and (epoch % cfg.eval_every == 0 or is_last):
            metric = val_fn()
            result.val_history.append((epoch, metric))
            if metric > result.best_val_metric:
                result.best_val_metric = metric
                result.best_epoch = epoch
                best_state = {k: v.detach().clone() for k, v in module.state_dict().items()}
    if best_state is not None:
        module.load_state_dict(best_state)
    elif result.epoch_losses:
        result.best_epoch = start_epoch + cfg.epochs - 1
    return result
