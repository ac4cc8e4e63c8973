"""Structure-aware feature mixing and the staged encoder.

A structure-aware block wavelet-splits a feature map, routes the
low-frequency band through windowed attention and the three detail bands
through oriented convolutions, fuses everything with 1x1 convs, and adds the
inverse transform back onto the input (residual, so zero-init is an exact
identity).  The encoder interleaves transformer blocks with these mixers on
the token grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, MultiHeadAttention, TransformerBlock, window_attention
from .errors import ConfigError, ShapeError
from .nn import Conv2d, Linear, Module
from .tensor import Param, Tensor, concat, gelu, replicate_pad2d, transpose
from .wavelet import WaveletPyramid, dwt2, idwt2


@dataclass
class SapConfig:
    channels: int
    heads: int = 4
    window: int = 4
    eq2_input: str = "ll"

    def __post_init__(self):
        if self.eq2_input not in ("ll", "hh"):
            raise ConfigError(f"eq2_input must be 'll' or 'hh', got {self.eq2_input!r}")


@dataclass
class EncoderConfig:
    stages: int = 6
    blocks_per_stage: int = 1
    patch: int = 8
    dim: int = 64
    heads: int = 4
    window: int = 4
    eq2_input: str = "ll"
    image_hw: tuple = (64, 64)

    def __post_init__(self):
        if self.stages < 1:
            raise ConfigError(f"stages must be >= 1, got {self.stages}")
        h, w = self.image_hw
        if h % self.patch or w % self.patch:
            raise ConfigError(f"image extents {h}x{w} are not multiples of patch {self.patch}")

    @property
    def grid_hw(self):
        return (self.image_hw[0] // self.patch, self.image_hw[1] // self.patch)

    @property
    def tokens(self) -> int:
        gh, gw = self.grid_hw
        return gh * gw


class StructureAwareBlock(Module):
    def __init__(self, cfg: SapConfig, rng: np.random.Generator, dtype=np.float64):
        c = cfg.channels
        self.cfg = cfg
        self.low_attn = MultiHeadAttention(
            AttentionConfig(dim=c, heads=cfg.heads, window=cfg.window), rng, dtype)
        self.conv_vertical = Conv2d(c, c, (7, 1), rng, dtype)
        self.conv_horizontal = Conv2d(c, c, (1, 7), rng, dtype)
        self.conv_diagonal = Conv2d(c, c, (3, 3), rng, dtype)
        self.high_inner = Conv2d(3 * c, c, (1, 1), rng, dtype)
        self.high_outer = Conv2d(c, c, (1, 1), rng, dtype)
        self.low_inner = Linear(c, c, rng, dtype)
        self.low_outer = Linear(c, c, rng, dtype)
        self.fuse = Conv2d(2 * c, 4 * c, (1, 1), rng, dtype, zero_init=True)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3:
            raise ShapeError(f"structure-aware block expects [C,H,W], got {x.shape}")
        c, h, w = x.shape
        pad_h, pad_w = h % 2, w % 2
        xin = replicate_pad2d(x, (0, pad_h, 0, pad_w)) if (pad_h or pad_w) else x

        p = dwt2(xin)
        f_ll = window_attention(p.ll, self.low_attn)
        f_hl = self.conv_vertical(p.hl)
        f_lh = self.conv_horizontal(p.lh)
        f_hh = self.conv_diagonal(p.hh)

        f_high = self.high_outer(gelu(self.high_inner(concat([f_hl, f_lh, f_hh], axis=0))))

        low_src = f_ll if self.cfg.eq2_input == "ll" else f_hh
        _, sh, sw = low_src.shape
        tokens = transpose(low_src.reshape(c, sh * sw), (1, 0))
        f_low = self.low_outer(gelu(self.low_inner(tokens)))
        f_low = transpose(f_low, (1, 0)).reshape(c, sh, sw)

        fused = self.fuse(concat([f_high, f_low], axis=0))  # [4C, h/2, w/2]
        out = idwt2(WaveletPyramid(
            ll=fused[0:c], lh=fused[c : 2 * c], hl=fused[2 * c : 3 * c], hh=fused[3 * c :]))
        if pad_h or pad_w:
            out = out[:, :h, :w]
        return x + out


class Encoder(Module):
    """Patch embedding + positional embedding, then stages of blocks and mixers."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float64):
        self.cfg = cfg
        d, p = cfg.dim, cfg.patch
        self.embed = Linear(3 * p * p, d, rng, dtype)
        self.pos = Param(rng.normal(0.0, 0.02, (cfg.tokens, d)).astype(dtype))
        attn_cfg = AttentionConfig(dim=d, heads=cfg.heads, window=cfg.window)
        sap_cfg = SapConfig(channels=d, heads=cfg.heads, window=cfg.window,
                            eq2_input=cfg.eq2_input)
        self.blocks = [
            [TransformerBlock(attn_cfg, rng, dtype) for _ in range(cfg.blocks_per_stage)]
            for _ in range(cfg.stages)
        ]
        self.mixers = [StructureAwareBlock(sap_cfg, rng, dtype) for _ in range(cfg.stages)]

    def patchify(self, image: Tensor) -> Tensor:
        cfg = self.cfg
        p = cfg.patch
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"encoder expects [3,H,W], got {image.shape}")
        _, h, w = image.shape
        if h % p or w % p:
            raise ShapeError(f"image extents {h}x{w} are not multiples of patch {p}")
        gh, gw = h // p, w // p
        # [3,H,W] -> [gh,gw, 3*p*p], row-major patch order
        x = image.reshape(3, gh, p, gw, p)
        x = transpose(x, (1, 3, 0, 2, 4))
        return x.reshape(gh * gw, 3 * p * p)

    def forward(self, image: Tensor) -> Tensor:
        cfg = self.cfg
        gh, gw = image.shape[1] // cfg.patch, image.shape[2] // cfg.patch
        tokens = self.embed(self.patchify(image))
        if tokens.shape[0] != self.pos.shape[0]:
            raise ShapeError(
                f"token count {tokens.shape[0]} does not match configured grid {self.pos.shape[0]}")
        tokens = tokens + self.pos
        d = cfg.dim
        for stage_blocks, mixer in zip(self.blocks, self.mixers):
            for block in stage_blocks:
                tokens = block(tokens)
            grid = transpose(tokens, (1, 0)).reshape(d, gh, gw)
            grid = mixer(grid)
            tokens = transpose(grid.reshape(d, gh * gw), (1, 0))
        return tokens
