"""Adam, plain SGD and a cosine learning-rate schedule.

Parameters are passed as lists of numpy arrays and updated in place, so
the same optimizer drives forecaster pre-training and GCM adaptation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NonFiniteGradient


def _check_finite(grads: Sequence[np.ndarray]) -> None:
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"gradient slot {i} contains NaN or Inf")


@dataclass
class AdamState:
    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float, weight_decay: float = 0.0) -> "AdamState":
        return cls(
            lr=lr,
            weight_decay=weight_decay,
            m=[np.zeros_like(p, dtype=np.float64) for p in params],
            v=[np.zeros_like(p, dtype=np.float64) for p in params],
        )


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float | None = None) -> None:
    """One bias-corrected Adam update with decoupled weight decay, in place.

    ``lr`` overrides ``state.lr`` for this step (used by schedules).
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer buffers disagree in length")
    _check_finite(grads)
    lr = state.lr if lr is None else lr
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p -= lr * state.weight_decay * p
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float) -> None:
    _check_finite(grads)
    for p, g in zip(params, grads):
        p -= lr * g


@dataclass(frozen=True)
class CosineSchedule:
    base_lr: float
    total_steps: int

    def __call__(self, step: int) -> float:
        s = min(max(step, 0), self.total_steps)
        return self.base_lr * 0.5 * (1.0 + math.cos(math.pi * s / self.total_steps))
