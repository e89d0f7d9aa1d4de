"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def numerical_grad(fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """d(sum of fn())/dx by central differences, perturbing ``x.data`` in place."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        plus = float(np.sum(fn().data))
        flat[i] = orig - h
        minus = float(np.sum(fn().data))
        flat[i] = orig
        gflat[i] = (plus - minus) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], h: float = 1e-5) -> float:
    """Worst relative error between backprop and finite differences over ``inputs``.

    ``fn`` is re-evaluated from scratch for every probe; its output is summed
    to a scalar before differentiation.
    """
    for x in inputs:
        x.grad = None
    out = fn()
    out.backward(np.ones_like(out.data))
    worst = 0.0
    for x in inputs:
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        numeric = numerical_grad(fn, x, h)
        worst = max(worst, max_relative_error(analytic, numeric))
    return worst
