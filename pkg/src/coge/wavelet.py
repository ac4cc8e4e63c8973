"""Single-level orthonormal 2-D Haar transform, applied channelwise.

Each 2x2 block [[a,b],[c,d]] maps to
    ll = (a+b+c+d)/2,  lh = (a+b-c-d)/2,  hl = (a-b+c-d)/2,  hh = (a-b-c+d)/2
so the transform is its own exact algebraic inverse (orthonormal, energy
preserving).  ``lh`` carries horizontal detail, ``hl`` vertical detail.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ShapeError
from .tensor import Tensor, concat


@dataclass
class WaveletPyramid:
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor

    def subbands(self):
        return (self.ll, self.lh, self.hl, self.hh)


def dwt2(x: Tensor) -> WaveletPyramid:
    """Forward Haar transform of [C, H, W]; H and W must be even."""
    if x.ndim != 3:
        raise ShapeError(f"dwt2 needs [C,H,W], got shape {x.shape}")
    c, h, w = x.shape
    if c == 0 or h == 0 or w == 0:
        raise ShapeError(f"dwt2: zero extent in shape {x.shape}")
    if h % 2 or w % 2:
        raise ShapeError(f"dwt2: extents must be even, got {h}x{w}")
    a = x[:, 0::2, 0::2]
    b = x[:, 0::2, 1::2]
    cc = x[:, 1::2, 0::2]
    d = x[:, 1::2, 1::2]
    return WaveletPyramid(
        ll=(a + b + cc + d) * 0.5,
        lh=(a + b - cc - d) * 0.5,
        hl=(a - b + cc - d) * 0.5,
        hh=(a - b - cc + d) * 0.5,
    )


def idwt2(p: WaveletPyramid) -> Tensor:
    """Exact inverse of dwt2; returns [C, 2h, 2w]."""
    shapes = {t.shape for t in p.subbands()}
    if len(shapes) != 1:
        raise ShapeError(f"idwt2: subband shapes differ: {sorted(shapes)}")
    ll, lh, hl, hh = p.subbands()
    a = (ll + lh + hl + hh) * 0.5
    b = (ll + lh - hl - hh) * 0.5
    cc = (ll - lh + hl - hh) * 0.5
    d = (ll - lh - hl + hh) * 0.5
    c, h, w = ll.shape
    # interleave the four quarter grids back into 2x2 blocks
    quads = [t.reshape(c, h, w, 1) for t in (a, b, cc, d)]
    row_top = concat([quads[0], quads[1]], axis=3)  # [C,h,w,2]
    row_bot = concat([quads[2], quads[3]], axis=3)
    both = concat([row_top.reshape(c, h, 1, 2 * w), row_bot.reshape(c, h, 1, 2 * w)], axis=2)
    return both.reshape(c, 2 * h, 2 * w)
