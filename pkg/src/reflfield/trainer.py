"""Optimization loop: Adam, warmup + log-linear decay, gradient clipping."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from . import field as fd
from . import losses as ls
from . import renderer as rd


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 3000
    batch_rays: int = 1024
    n_samples: int = 64
    lr_init: float = 2e-3
    lr_final: float = 2e-5
    warmup_steps: int = 512
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-6
    clip_norm: float = 1e-3
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints
    loss_weights: ls.LossWeights = dc_field(default_factory=ls.LossWeights)
    field: fd.FieldConfig = dc_field(default_factory=fd.FieldConfig)

    def validate(self) -> "TrainConfig":
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.batch_rays < 1:
            raise ValueError("batch_rays must be >= 1")
        if not (0 < self.lr_final <= self.lr_init):
            raise ValueError("require 0 < lr_final <= lr_init")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")
        self.loss_weights.validate()
        self.field.validate()
        return self

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=float)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def learning_rate(config: TrainConfig, step: int) -> float:
    """Log-linear decay from lr_init to lr_final, scaled by a linear ramp
    over the warmup steps. Step 0 of a warmup schedule is exactly 0."""
    if step < 0 or step >= config.iterations:
        raise ValueError(f"step {step} outside [0, {config.iterations})")
    if config.iterations == 1:
        s = 1.0
    else:
        s = step / (config.iterations - 1)
    base = float(np.exp((1 - s) * np.log(config.lr_init) + s * np.log(config.lr_final)))
    if config.warmup_steps > 0:
        base *= min(1.0, step / config.warmup_steps)
    return base


def global_norm(grads: list[np.ndarray]) -> float:
    total = 0.0
    for g in grads:
        total += float(np.sum(np.square(g.astype(np.float64))))
    return float(np.sqrt(total))


def clip_gradients(params: list[ad.Tensor], max_norm: float) -> float:
    """Scale all gradients together so their joint norm is <= max_norm.

    Returns the pre-clip norm. Parameters with no gradient are skipped.
    """
    grads = [p.grad for p in params if p.grad is not None]
    norm = global_norm(grads)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return norm


class AdamState:
    """First/second moment accumulators, one pair per parameter tensor."""

    def __init__(self, params: list[ad.Tensor]):
        self.params = params
        self.m = [np.zeros_like(p.values, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p.values, dtype=np.float64) for p in params]
        self.t = 0

    def step(self, lr: float, beta1: float, beta2: float, eps: float) -> None:
        self.t += 1
        b1t = 1.0 - beta1**self.t
        b2t = 1.0 - beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            m *= beta1
            m += (1 - beta1) * g
            v *= beta2
            v += (1 - beta2) * np.square(g)
            update = (m / b1t) / (np.sqrt(v / b2t) + eps)
            p.values = (p.values.astype(np.float64) - lr * update).astype(
                p.values.dtype
            )


def zero_gradients(params: list[ad.Tensor]) -> None:
    for p in params:
        p.grad = None


@dataclass
class TrainLogEntry:
    step: int
    data: float
    predicted_normal: float
    orientation: float
    total: float
    lr: float

    def line(self) -> str:
        return (
            f"step {self.step:6d}  data {self.data:.6f}  "
            f"rp {self.predicted_normal:.6f}  ro {self.orientation:.6f}  "
            f"total {self.total:.6f}  lr {self.lr:.3e}"
        )


@dataclass
class TrainResult:
    params: fd.ModelParams
    log: list[TrainLogEntry]
    checkpoint_path: Optional[str]


def _write_checkpoint(
    out_dir: str, name: str, params: fd.ModelParams, config: TrainConfig, step: int
) -> str:
    path = os.path.join(out_dir, name)
    params.save(path)
    meta = {"config_hash": config.config_hash(), "step": step}
    with open(path + ".meta", "w") as f:
        json.dump(meta, f, sort_keys=True)
        f.write("\n")
    return path


def train(
    origins: np.ndarray,
    directions: np.ndarray,
    colors: np.ndarray,
    config: TrainConfig,
    near: float,
    far: float,
    background=(1.0, 1.0, 1.0),
    out_dir: Optional[str] = None,
    params: Optional[fd.ModelParams] = None,
    log_every: int = 100,
    log_fn: Optional[Callable[[str], None]] = None,
) -> TrainResult:
    """Fit a field to rays: origins/directions (N, 3), colors (N, 3).

    Batches are drawn with replacement each step. Raises if the loss stops
    being finite (the step is named in the error).
    """
    config.validate()
    origins = np.asarray(origins, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    colors = np.asarray(colors, dtype=np.float64)
    if not (origins.shape == directions.shape == colors.shape) or origins.ndim != 2:
        raise ValueError("origins, directions, colors must share shape (N, 3)")
    n_rays = origins.shape[0]

    rng = np.random.default_rng(config.seed)
    if params is None:
        params = fd.ModelParams.create(rng, config.field, dtype=np.float32)
    tensors = params.parameters()
    adam = AdamState(tensors)
    log: list[TrainLogEntry] = []
    checkpoint_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)

    for step in range(config.iterations):
        idx = rng.integers(0, n_rays, size=config.batch_rays)
        batch = rd.RayBatch(origins[idx], directions[idx])
        samples = rd.stratified_samples(
            config.batch_rays, config.n_samples, near, far, rng=rng
        )
        out = rd.render_rays(
            params, config.field, batch, samples, background=background,
            mode="train", rng=rng,
        )
        breakdown = ls.total_loss(
            out,
            colors[idx],
            config.loss_weights,
            use_predicted_normals=config.field.use_predicted_normals,
        )
        total = float(breakdown.total.values)
        if not np.isfinite(total):
            raise RuntimeError(f"non-finite loss at step {step}: {total}")

        zero_gradients(tensors)
        breakdown.total.backward()
        clip_gradients(tensors, config.clip_norm)
        lr = learning_rate(config, step)
        adam.step(lr, config.beta1, config.beta2, config.eps)

        entry = TrainLogEntry(
            step,
            float(breakdown.data.values),
            float(breakdown.predicted_normal.values),
            float(breakdown.orientation.values),
            total,
            lr,
        )
        log.append(entry)
        if log_fn is not None and (step % log_every == 0 or step == config.iterations - 1):
            log_fn(entry.line())
        if (
            out_dir is not None
            and config.checkpoint_every > 0
            and (step + 1) % config.checkpoint_every == 0
        ):
            _write_checkpoint(
                out_dir, f"checkpoint_{step + 1:06d}.rfld", params, config, step + 1
            )

    if out_dir is not None:
        checkpoint_path = _write_checkpoint(
            out_dir, "checkpoint_final.rfld", params, config, config.iterations
        )
    return TrainResult(params, log, checkpoint_path)
