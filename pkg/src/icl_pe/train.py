"""Full-batch Adam on the fixed training prompts."""

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .grad import loss_and_grads

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 1e-5
    epochs: int = 1500
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        arrs = params.arrays()
        return cls({k: np.zeros_like(a) for k, a in arrs.items()}, {k: np.zeros_like(a) for k, a in arrs.items()})


def adam_step(params, grads, state, config):
    """One in-place Adam update with bias correction."""
    if set(state.m) != set(params.names):
        raise ValueError("Adam state does not match the parameter set")
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name in params.names:
        g = grads[name]
        m, v = state.m[name], state.v[name]
        if m.shape != g.shape:
            raise ValueError(f"{name}: state shape {m.shape} != gradient shape {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p = getattr(params, name)
        p -= config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.eps_adam)
    return params, state


class NonFiniteLoss(RuntimeError):
    pass


def train(X, y, params, config, state=None):
    """Train a copy of ``params`` on the stacked prompts (X, y).

    Returns ``(trained_params, loss_curve)``; ``loss_curve[i]`` is the full-batch
    loss after the (i+1)-th update, so the last entry is the final train risk.
    """
    if X.shape[-2] - 1 != params.t_max:
        raise ValueError(f"prompt length {X.shape[-2] - 1} does not match model t_max={params.t_max}")
    params = params.copy()
    state = state or AdamState.zeros_like(params)
    curve = np.empty(config.epochs)
    if config.epochs == 0:
        return params, curve
    loss, grads = loss_and_grads(params, X, y)
    for epoch in range(config.epochs):
        adam_step(params, grads, state, config)
        loss, grads = loss_and_grads(params, X, y)
        if not np.isfinite(loss):
            raise NonFiniteLoss(f"non-finite training loss {loss!r} after epoch {epoch + 1}")
        curve[epoch] = loss
    return params, curve


def train_dataset(dataset, params, config):
    return train(dataset.train_X, dataset.train_y, params, config)


def write_loss_curve(path, curve):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss"])
        for i, v in enumerate(curve, start=1):
            w.writerow([i, repr(float(v))])
