"""Key-value spatial memory: attention read, threshold forget, concat update.

A cache holds paired token banks (keys for addressing, values for content).
Reading mixes cached values into the previous frame's features through a
scaled-dot-product attention whose weight matrix also drives the forget gate:
a cached token survives only if enough current tokens attend to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError, StaleAttentionError
from .nn import Linear, Module
from .tensor import Tensor, concat, gelu, matmul, softmax, transpose


@dataclass
class ForgetPolicy:
    weight_threshold: float = 5e-4
    fraction_threshold: float = 0.05

    def __post_init__(self):
        if self.weight_threshold <= 0:
            raise ConfigError(f"weight_threshold must be > 0, got {self.weight_threshold}")
        if not (0.0 < self.fraction_threshold <= 1.0):
            raise ConfigError(
                f"fraction_threshold must be in (0, 1], got {self.fraction_threshold}")


class MemoryCache:
    """Paired token banks; keys and values always hold the same count."""

    def __init__(self, keys: Tensor | None = None, values: Tensor | None = None,
                 dim: int | None = None, dtype=np.float64):
        if keys is None:
            if dim is None:
                raise ConfigError("an empty cache needs an explicit token dim")
            keys = Tensor(np.zeros((0, dim), dtype=dtype))
            values = Tensor(np.zeros((0, dim), dtype=dtype))
        if keys.shape != values.shape:
            raise ShapeError(f"key bank {keys.shape} and value bank {values.shape} differ")
        self.keys = keys
        self.values = values

    @property
    def size(self) -> int:
        return self.keys.shape[0]

    @property
    def dim(self) -> int:
        return self.keys.shape[1]

    def detached(self) -> "MemoryCache":
        return MemoryCache(self.keys.detach(), self.values.detach())


def memory_read(f_prev: Tensor, cache: MemoryCache) -> tuple[Tensor, Tensor]:
    """Residual attention read; returns (mixed features, weight matrix [N, S])."""
    n, d = f_prev.shape
    if cache.dim != d:
        raise ShapeError(f"feature dim {d} does not match cache dim {cache.dim}")
    if cache.size == 0:
        return f_prev, Tensor(np.zeros((n, 0), dtype=f_prev.dtype))
    scores = matmul(f_prev, transpose(cache.keys, (1, 0))) * (1.0 / math.sqrt(d))
    weights = softmax(scores, axis=1)  # normalized over memory tokens
    return matmul(weights, cache.values) + f_prev, weights


def retained_token_mask(weights: np.ndarray, policy: ForgetPolicy) -> np.ndarray:
    """Token i survives iff at least fraction_threshold * N rows attend to it
    with weight >= weight_threshold (real-valued comparison, no rounding)."""
    n = weights.shape[0]
    counts = (weights >= policy.weight_threshold).sum(axis=0)
    return counts >= policy.fraction_threshold * n


def memory_forget(cache: MemoryCache, weights: Tensor,
                  policy: ForgetPolicy) -> tuple[MemoryCache, np.ndarray]:
    """Filter the cache with the retain rule; order preserved, inputs untouched."""
    w = weights.data if isinstance(weights, Tensor) else np.asarray(weights)
    if w.shape[1] != cache.size:
        raise StaleAttentionError(
            f"attention has {w.shape[1]} columns but the cache holds {cache.size} tokens")
    if cache.size == 0:
        return MemoryCache(cache.keys, cache.values), np.zeros(0, dtype=bool)
    mask = retained_token_mask(w, policy)
    idx = np.nonzero(mask)[0]
    return MemoryCache(cache.keys[idx], cache.values[idx]), mask


class TokenEncoder(Module):
    """Tokenwise linear -> gelu -> linear used for new key/value material.

    Key encoders drop the final bias: a shared offset on every cached key is
    cancelled exactly by the read softmax, so the parameter would be untrainable.
    """

    def __init__(self, dim: int, rng: np.random.Generator, dtype=np.float64,
                 final_bias: bool = True):
        self.inner = Linear(dim, dim, rng, dtype)
        self.outer = Linear(dim, dim, rng, dtype, bias=final_bias)

    def forward(self, tokens: Tensor) -> Tensor:
        return self.outer(gelu(self.inner(tokens)))


def memory_update(cache: MemoryCache, f_mem: Tensor, f_prev_out: Tensor,
                  key_enc: TokenEncoder, val_enc: TokenEncoder) -> MemoryCache:
    """Append freshly encoded tokens; the cache must already be forget-filtered."""
    if f_mem.shape != f_prev_out.shape:
        raise ShapeError(f"feature shapes differ: {f_mem.shape} vs {f_prev_out.shape}")
    if f_mem.shape[1] != cache.dim:
        raise ShapeError(f"feature dim {f_mem.shape[1]} does not match cache dim {cache.dim}")
    delta_k = key_enc(f_mem)
    delta_v = val_enc(f_prev_out)
    return MemoryCache(concat([cache.keys, delta_k], axis=0),
                       concat([cache.values, delta_v], axis=0))
