"""Training loops: momentum SGD and its sharpness-regularized variant.

The regularized update augments each step's gradient with the clipped
two-point penalty gradient taken along the sharpest direction found by a
short ascent search.  With a zero penalty coefficient the regularized
step short-circuits to plain SGD, bit for bit.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, batches
from .params import ParamVector, zeros_like
from .regularizer import RegularizerConfig, h1
from .sharpness import SharpnessConfig, bn_sharpness, search_direction

__all__ = [
    "TrainConfig",
    "TrainState",
    "RunMetrics",
    "NonFiniteLossError",
    "sgd_step",
    "sgds_step",
    "train",
    "metrics_to_csv",
]

METRICS_HEADER = "epoch,step,train_loss,train_acc,test_acc,bn_sharpness,lambda,lr,wall_ms"

GRAD_NORM_STOP = 1e-12


class NonFiniteLossError(RuntimeError):
    def __init__(self, message, state=None, metrics=None):
        super().__init__(message)
        self.state = state
        self.metrics = metrics


@dataclass
class TrainConfig:
    algo: str = "sgd"
    lr: float = 0.2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    batch_size: int = 128
    epochs: int = 10
    lr_decay_epochs: tuple[int, ...] = (60, 120, 160)
    lr_decay_factor: float = 0.1
    lambda0: float = 1e-4
    lambda_growth: float = 1.02
    sharpness: SharpnessConfig = field(default_factory=SharpnessConfig)
    reg: RegularizerConfig = field(default_factory=RegularizerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.algo not in ("sgd", "sgds"):
            raise ValueError(f"unknown algorithm {self.algo!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError("lr_decay_factor must lie in (0, 1]")
        if self.lambda0 < 0:
            raise ValueError("lambda0 must be non-negative")
        if self.lambda_growth < 1.0:
            raise ValueError("lambda_growth must be >= 1")
        self.lr_decay_epochs = tuple(int(e) for e in self.lr_decay_epochs)

    def lr_at_epoch(self, epoch: int) -> float:
        decays = sum(1 for d in self.lr_decay_epochs if d <= epoch)
        return self.lr * self.lr_decay_factor ** decays

    def lambda_at_epoch(self, epoch: int) -> float:
        return self.lambda0 * self.lambda_growth ** epoch


@dataclass
class TrainState:
    theta: ParamVector
    velocity: ParamVector
    epoch: int = 0
    step: int = 0
    lr: float = 0.0
    lam: float = 0.0

    @classmethod
    def initial(cls, theta: ParamVector, cfg: TrainConfig) -> "TrainState":
        return cls(theta=theta.copy(), velocity=zeros_like(theta),
                   lr=cfg.lr_at_epoch(0), lam=cfg.lambda_at_epoch(0))


@dataclass
class RunMetrics:
    epoch: int
    step: int
    train_loss: float
    train_acc: float
    test_acc: float
    bn_sharpness: float
    lam: float
    lr: float
    wall_ms: float


def _apply_update(state: TrainState, grad: ParamVector, cfg: TrainConfig) -> TrainState:
    g = grad if cfg.weight_decay == 0.0 else grad.axpy(cfg.weight_decay, state.theta)
    velocity = (state.velocity * cfg.momentum).axpy(1.0, g) \
        if cfg.momentum != 0.0 else g
    theta = state.theta.axpy(-state.lr, velocity)
    return replace(state, theta=theta, velocity=velocity, step=state.step + 1)


def sgd_step(oracle, state: TrainState, batch, cfg: TrainConfig,
             loss_grad=None) -> TrainState:
    loss, grad = loss_grad or oracle.loss_and_grad(state.theta, batch)
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss at step {state.step}", state=state)
    return _apply_update(state, grad, cfg)


def sgds_step(oracle, state: TrainState, step_batches, cfg: TrainConfig,
              loss_grad=None) -> TrainState:
    """One regularized step on (center, plus, minus) batches."""
    batch_center, batch_plus, batch_minus = step_batches
    loss, grad = loss_grad or oracle.loss_and_grad(state.theta, batch_center)
    if not math.isfinite(loss):
        raise NonFiniteLossError(f"non-finite loss at step {state.step}", state=state)
    if state.lam > 0.0:
        scfg = cfg.sharpness
        v, _ = search_direction(oracle, state.theta, scfg, batch_center,
                                seed=_step_seed(cfg.seed, state.step))
        rcfg = replace(cfg.reg, lam=state.lam)
        penalty = h1(oracle, state.theta, v, scfg.delta, scfg.p, rcfg,
                     batch_plus, batch_minus, batch_center)
        grad = grad.axpy(1.0, penalty)
    return _apply_update(state, grad, cfg)


def _step_seed(seed: int, step: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(step), 0xD12])


def train(oracle, ds: Dataset, cfg: TrainConfig, clock=time.perf_counter):
    """Run the configured algorithm; returns (final theta, per-epoch metrics).

    The sharpness series is measured on a frozen batch (the first batch of
    the epoch-0 stream) so values are comparable across epochs and runs.
    """
    theta = oracle.init_params(cfg.seed)
    state = TrainState.initial(theta, cfg)
    metrics: list[RunMetrics] = []
    if cfg.epochs == 0:
        return state.theta, metrics

    measure_batch = batches(ds, cfg.batch_size, cfg.seed, epoch=0)[0]
    train_eval = ds.train_batch()
    test_eval = ds.test_batch() if len(ds.test_idx) >= 2 else None
    start = clock()

    for epoch in range(cfg.epochs):
        state = replace(state, epoch=epoch, lr=cfg.lr_at_epoch(epoch),
                        lam=cfg.lambda_at_epoch(epoch))
        epoch_batches = batches(ds, cfg.batch_size, cfg.seed, epoch)
        n = len(epoch_batches)
        losses = []
        for k in range(n):
            center = epoch_batches[k]
            loss, grad = oracle.loss_and_grad(state.theta, center)
            losses.append(loss)
            if grad.norm() < GRAD_NORM_STOP:
                break
            try:
                if cfg.algo == "sgds":
                    triple = (center, epoch_batches[(k + 1) % n],
                              epoch_batches[(k + 2) % n])
                    state = sgds_step(oracle, state, triple, cfg, loss_grad=(loss, grad))
                else:
                    state = sgd_step(oracle, state, center, cfg, loss_grad=(loss, grad))
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(str(exc), state=state, metrics=metrics) from exc
        metrics.append(RunMetrics(
            epoch=epoch,
            step=state.step,
            train_loss=float(np.mean(losses)),
            train_acc=oracle.accuracy(state.theta, train_eval),
            test_acc=(oracle.accuracy(state.theta, test_eval)
                      if test_eval is not None else math.nan),
            bn_sharpness=bn_sharpness(oracle, state.theta, cfg.sharpness,
                                      measure_batch, seed=cfg.seed),
            lam=state.lam,
            lr=state.lr,
            wall_ms=(clock() - start) * 1000.0,
        ))
    return state.theta, metrics


def metrics_to_csv(metrics) -> str:
    """17-significant-digit CSV so equal runs produce equal bytes."""
    lines = [METRICS_HEADER]
    for m in metrics:
        lines.append(",".join([
            str(m.epoch), str(m.step),
            f"{m.train_loss:.17g}", f"{m.train_acc:.17g}", f"{m.test_acc:.17g}",
            f"{m.bn_sharpness:.17g}", f"{m.lam:.17g}", f"{m.lr:.17g}",
            f"{m.wall_ms:.17g}",
        ]))
    return "\n".join(lines) + "\n"
