"""AdamW with a triangular cyclic learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .tensor import Tensor


class NonFiniteGradient(FloatingPointError):
    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}; step aborted")
        self.param_name = name


def cyclic_lr(step: int, base_lr: float, max_lr: float, cycle_length: int) -> float:
    """Triangular schedule: base at the cycle start, max at its midpoint."""
    if cycle_length <= 0 or max_lr == base_lr:
        return base_lr
    frac = (step % cycle_length) / cycle_length
    return base_lr + (max_lr - base_lr) * (1.0 - abs(2.0 * frac - 1.0))


@dataclass
class OptimizerState:
    base_lr: float = 1e-4
    max_lr: float = 1e-4
    cycle_length: int = 0
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: Optional[float] = None
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def lr(self, step: Optional[int] = None) -> float:
        return cyclic_lr(self.step if step is None else step, self.base_lr, self.max_lr, self.cycle_length)


def optimizer_step(state: OptimizerState, named_params: Sequence[tuple], grads: Optional[dict] = None) -> float:
    """Apply one AdamW update in place; returns the learning rate used.

    ``named_params`` is a sequence of (name, Tensor). Gradients are read from
    ``grads[name]`` when given, else from each tensor's ``.grad`` (missing
    gradients count as zero). Nothing is modified if any gradient is non-finite.
    """
    named_params = list(named_params)
    gs = {}
    for name, p in named_params:
        g = grads.get(name) if grads is not None else p.grad
        if g is None:
            g = np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
        gs[name] = g
    if state.grad_clip is not None and state.grad_clip > 0:
        total = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in gs.values())))
        if total > state.grad_clip:
            scale = state.grad_clip / (total + 1e-12)
            gs = {k: g * scale for k, g in gs.items()}

    lr = state.lr()
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in named_params:
        g = gs[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m.astype(p.data.dtype, copy=False)
        state.v[name] = v.astype(p.data.dtype, copy=False)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        new = p.data * (1.0 - lr * state.weight_decay) - lr * update
        p.data = new.astype(p.data.dtype, copy=False)
    return lr


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None
