"""Multi-head attention: token self/cross attention, windowed spatial variant,
and the pre-norm transformer block used by the encoder and decoder stacks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import LayerNorm, Linear, Module
from .tensor import Tensor, concat, gelu, matmul, replicate_pad2d, softmax, transpose


@dataclass
class AttentionConfig:
    dim: int
    heads: int
    window: int = 4

    def __post_init__(self):
        if self.dim <= 0 or self.heads <= 0:
            raise ConfigError(f"dim and heads must be positive, got {self.dim}, {self.heads}")
        if self.dim % self.heads:
            raise ConfigError(f"heads ({self.heads}) must divide dim ({self.dim})")
        if self.window <= 0:
            raise ConfigError(f"window must be positive, got {self.window}")


class MultiHeadAttention(Module):
    """Scaled dot-product attention with per-head projections.

    ``forward(x)`` is self-attention; ``forward(q, kv)`` takes queries from the
    first argument and keys/values from the second.
    """

    def __init__(self, cfg: AttentionConfig, rng: np.random.Generator, dtype=np.float64,
                 zero_init_out: bool = True):
        self.cfg = cfg
        d = cfg.dim
        self.wq = Linear(d, d, rng, dtype)
        # a key bias is a no-op through the row-wise softmax, so omit it
        self.wk = Linear(d, d, rng, dtype, bias=False)
        self.wv = Linear(d, d, rng, dtype)
        self.out = Linear(d, d, rng, dtype, zero_init=zero_init_out)

    def forward(self, x: Tensor, kv: Tensor | None = None) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.cfg.dim:
            raise ShapeError(f"attention expects [N,{self.cfg.dim}], got {x.shape}")
        if x.shape[0] == 0:
            raise ShapeError("attention on an empty token sequence")
        ctx = x if kv is None else kv
        if ctx.shape[0] == 0:
            raise ShapeError("attention with an empty context sequence")
        if ctx.shape[1] != self.cfg.dim:
            raise ShapeError(f"context dim {ctx.shape} does not match {self.cfg.dim}")
        n, d = x.shape
        h = self.cfg.heads
        dh = d // h

        def split_heads(t: Tensor) -> Tensor:
            return transpose(t.reshape(t.shape[0], h, dh), (1, 0, 2))  # [h, N, dh]

        q = split_heads(self.wq(x))
        k = split_heads(self.wk(ctx))
        v = split_heads(self.wv(ctx))
        scores = matmul(q, transpose(k, (0, 2, 1))) * (1.0 / math.sqrt(dh))
        weights = softmax(scores, axis=-1)  # rows sum to 1 over context tokens
        mixed = matmul(weights, v)  # [h, N, dh]
        merged = transpose(mixed, (1, 0, 2)).reshape(n, d)
        return self.out(merged)


def window_attention(fmap: Tensor, attn: MultiHeadAttention) -> Tensor:
    """Self-attention inside non-overlapping window x window tiles of [C,H,W].

    Channels are the token dimension; extents are edge-padded to window
    multiples and cropped back afterwards, so any H, W is accepted.
    """
    if fmap.ndim != 3:
        raise ShapeError(f"window_attention expects [C,H,W], got {fmap.shape}")
    win = attn.cfg.window
    c, h, w = fmap.shape
    pad_h = (-h) % win
    pad_w = (-w) % win
    x = replicate_pad2d(fmap, (0, pad_h, 0, pad_w)) if (pad_h or pad_w) else fmap
    hp, wp = h + pad_h, w + pad_w
    rows = []
    for i in range(0, hp, win):
        tiles = []
        for j in range(0, wp, win):
            tile = x[:, i : i + win, j : j + win]
            tokens = transpose(tile.reshape(c, win * win), (1, 0))  # [win^2, C]
            out = attn(tokens)
            tiles.append(transpose(out, (1, 0)).reshape(c, win, win))
        rows.append(concat(tiles, axis=2))
    full = concat(rows, axis=1)
    return full[:, :h, :w] if (pad_h or pad_w) else full


class TransformerBlock(Module):
    """Pre-norm residual block: self-attention, optional cross-attention, 4x MLP."""

    def __init__(self, cfg: AttentionConfig, rng: np.random.Generator, dtype=np.float64,
                 cross: bool = False):
        d = cfg.dim
        self.norm_self = LayerNorm(d, dtype)
        self.attn = MultiHeadAttention(cfg, rng, dtype)
        self.cross = None
        self.norm_cross = None
        if cross:
            self.norm_cross = LayerNorm(d, dtype)
            self.cross = MultiHeadAttention(cfg, rng, dtype)
        self.norm_mlp = LayerNorm(d, dtype)
        self.mlp_in = Linear(d, 4 * d, rng, dtype)
        self.mlp_out = Linear(4 * d, d, rng, dtype, zero_init=True)

    def forward(self, x: Tensor, ctx: Tensor | None = None) -> Tensor:
        x = x + self.attn(self.norm_self(x))
        if ctx is not None:
            if self.cross is None:
                raise ConfigError("block was built without a cross-attention path")
            x = x + self.cross(self.norm_cross(x), ctx)
        x = x + self.mlp_out(gelu(self.mlp_in(self.norm_mlp(x))))
        return x
