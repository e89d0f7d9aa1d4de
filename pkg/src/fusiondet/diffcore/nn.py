"""Parameter containers and the neural building blocks used across the detector."""

from __future__ import annotations

import math
from typing import Iterator, Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


class Module:
    """Minimal parameter tree: attributes that are Tensors with requires_grad,
    Modules, or lists of Modules are discovered by ``named_parameters``."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple]:
        for key in sorted(vars(self)):
            value = getattr(self, key)
            path = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_parameters(path + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{path}.{i}", item
            elif isinstance(value, dict):
                for k in sorted(value):
                    item = value[k]
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{path}.{k}.")

    def parameters(self) -> list:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def param(data: np.ndarray, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True)


def _uniform(rng: np.random.Generator, shape, bound: float, dtype) -> Tensor:
    return param(rng.uniform(-bound, bound, size=shape), dtype)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float64, bias: bool = True):
        bound = 1.0 / math.sqrt(n_in)
        self.weight = _uniform(rng, (n_in, n_out), bound, dtype)
        self.bias = _uniform(rng, (n_out,), bound, dtype) if bias else None
        self.n_in = n_in
        self.n_out = n_out

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"linear: input shape {x.shape} does not match weight {self.weight.shape}")
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class MLP(Module):
    """linear → relu → ... → linear. An empty hidden list gives one linear layer."""

    def __init__(self, n_in: int, hidden_sizes: Sequence[int], n_out: int, rng, dtype=np.float64):
        sizes = [n_in, *hidden_sizes, n_out]
        self.layers = [Linear(a, b, rng, dtype) for a, b in zip(sizes[:-1], sizes[1:])]

    def __call__(self, x) -> Tensor:
        for layer in self.layers[:-1]:
            x = T.relu(layer(x))
        return self.layers[-1](x)


def mlp_forward(params: Sequence[tuple], x, hidden_sizes: Sequence[int] = ()) -> Tensor:
    """Functional MLP over explicit (weight, bias) pairs.

    ``hidden_sizes`` is validated against the weights; an empty list means a
    single linear layer.
    """
    if len(params) != len(hidden_sizes) + 1:
        raise ShapeError(f"mlp_forward: {len(params)} layers given for hidden sizes {list(hidden_sizes)}")
    x = T.as_tensor(x)
    for i, (w, b) in enumerate(params):
        if x.shape[-1] != w.shape[0]:
            raise ShapeError(f"mlp_forward: input shape {x.shape} does not match weight {w.shape}")
        x = T.matmul(x, w) + b
        if i < len(params) - 1:
            x = T.relu(x)
    return x


class LayerNorm(Module):
    def __init__(self, n: int, dtype=np.float64, eps: float = 1e-5):
        self.weight = param(np.ones(n), dtype)
        self.bias = param(np.zeros(n), dtype)
        self.eps = eps

    def __call__(self, x) -> Tensor:
        return T.layer_norm(x, self.weight, self.bias, self.eps)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=None, dtype=np.float64):
        fan_in = c_in * kernel * kernel
        bound = 1.0 / math.sqrt(fan_in)
        self.weight = _uniform(rng, (c_out, c_in, kernel, kernel), math.sqrt(6.0) * bound, dtype)
        self.bias = param(np.zeros(c_out), dtype)
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def __call__(self, x) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class SelfAttention(Module):
    """Multi-head scaled dot-product self-attention, post-norm residual."""

    def __init__(self, dim: int, heads: int, rng, dtype=np.float64):
        if heads < 1 or dim % heads:
            raise ValueError(f"embedding width {dim} is not divisible by {heads} heads")
        self.heads = heads
        self.dim = dim
        self.q_proj = Linear(dim, dim, rng, dtype)
        self.k_proj = Linear(dim, dim, rng, dtype)
        self.v_proj = Linear(dim, dim, rng, dtype)
        self.out_proj = Linear(dim, dim, rng, dtype)
        self.norm = LayerNorm(dim, dtype)

    def attend(self, x: Tensor, pos: Optional[Tensor] = None) -> Tensor:
        n = x.shape[0]
        dh = self.dim // self.heads
        qk_in = x if pos is None else x + pos
        q = self.q_proj(qk_in).reshape(n, self.heads, dh).transpose(1, 0, 2)
        k = self.k_proj(qk_in).reshape(n, self.heads, dh).transpose(1, 2, 0)
        v = self.v_proj(x).reshape(n, self.heads, dh).transpose(1, 0, 2)
        attn = T.softmax(T.matmul(q, k) * (1.0 / math.sqrt(dh)), axis=-1)
        ctx = T.matmul(attn, v).transpose(1, 0, 2).reshape(n, self.dim)
        return self.out_proj(ctx)

    def __call__(self, x, pos: Optional[Tensor] = None) -> Tensor:
        x = T.as_tensor(x)
        return self.norm(x + self.attend(x, pos))


def self_attention(params: SelfAttention, queries) -> Tensor:
    return params(queries)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng, dtype=np.float64):
        self.fc1 = Linear(dim, hidden, rng, dtype)
        self.fc2 = Linear(hidden, dim, rng, dtype)
        self.norm = LayerNorm(dim, dtype)

    def __call__(self, x) -> Tensor:
        return self.norm(x + self.fc2(T.relu(self.fc1(x))))
