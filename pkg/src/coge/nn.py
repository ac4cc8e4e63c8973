"""Parameter containers, layers, and the clipped gradient-descent step."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .tensor import Param, Tensor, conv2d, layer_norm, linear


class Module:
    """Base container: walks attributes to collect uniquely named Params."""

    def named_params(self, prefix: str = ""):
        for attr, value in vars(self).items():
            path = f"{prefix}.{attr}" if prefix else attr
            if isinstance(value, Param):
                value.name = path
                yield path, value
            elif isinstance(value, Module):
                yield from value.named_params(path)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    sub = f"{path}.{i}"
                    if isinstance(item, Param):
                        item.name = sub
                        yield sub, item
                    elif isinstance(item, Module):
                        yield from item.named_params(sub)

    def params(self):
        return [p for _, p in self.named_params()]

    def zero_grad(self):
        for p in self.params():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 dtype=np.float64, zero_init: bool = False, bias: bool = True):
        if zero_init:
            w = np.zeros((out_features, in_features))
        else:
            w = rng.normal(0.0, 1.0 / np.sqrt(in_features), (out_features, in_features))
        self.weight = Param(w.astype(dtype))
        self.bias = Param(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size, rng: np.random.Generator,
                 dtype=np.float64, zero_init: bool = False):
        kh, kw = kernel_size if isinstance(kernel_size, tuple) else (kernel_size, kernel_size)
        fan_in = in_channels * kh * kw
        if zero_init:
            k = np.zeros((out_channels, in_channels, kh, kw))
        else:
            k = rng.normal(0.0, 1.0 / np.sqrt(fan_in), (out_channels, in_channels, kh, kw))
        self.kernel = Param(k.astype(dtype))
        self.bias = Param(np.zeros(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        out = conv2d(x, self.kernel)
        return out + self.bias.reshape(-1, 1, 1)


class LayerNorm(Module):
    def __init__(self, dim: int, dtype=np.float64, eps: float = 1e-5):
        self.gain = Param(np.ones(dim, dtype=dtype))
        self.bias = Param(np.zeros(dim, dtype=dtype))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


def check_unique_names(module: Module) -> None:
    seen = set()
    for name, _ in module.named_params():
        if name in seen:
            raise ConfigError(f"duplicate parameter name {name!r}")
        seen.add(name)


def global_grad_norm(params) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def sgd_step(params, lr: float, clip_norm: float = 1.0) -> float:
    """Fixed-step gradient descent with global-norm clipping; returns the raw norm."""
    norm = global_grad_norm(params)
    scale = lr if norm <= clip_norm or norm == 0.0 else lr * clip_norm / norm
    for p in params:
        if p.grad is not None:
            p.data = p.data - np.asarray(scale * p.grad, dtype=p.data.dtype)
    return norm
