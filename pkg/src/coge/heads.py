"""Dual decoder, dense output heads, and pointmap -> depth geometry.

Poses are camera-to-world: x_world = R @ x_cam + t, rotation stored as a unit
quaternion (w, x, y, z) canonicalized to w >= 0.  Pointmaps live in the world
frame (the first camera's frame); depth is the camera-frame z of each pixel's
point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionConfig, TransformerBlock
from .errors import ConfigError, ShapeError
from .nn import Linear, Module
from .tensor import Tensor, exp, gelu, sigmoid, sqrt, tmean, transpose


@dataclass
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ConfigError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")


@dataclass
class CameraPose:
    q: np.ndarray  # unit quaternion (w, x, y, z), w >= 0
    t: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64)
        self.t = np.asarray(self.t, dtype=np.float64)
        norm = float(np.linalg.norm(self.q))
        if abs(norm - 1.0) > 1e-6:
            raise ShapeError(f"quaternion norm {norm} is not 1 within 1e-6")
        if self.q[0] < 0:
            self.q = -self.q

    @classmethod
    def from_raw(cls, q, t) -> "CameraPose":
        q = np.asarray(q, dtype=np.float64)
        return cls(q / np.linalg.norm(q), np.asarray(t, dtype=np.float64))

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @classmethod
    def from_matrix(cls, rot: np.ndarray, t) -> "CameraPose":
        return cls(quat_from_matrix(rot), np.asarray(t, dtype=np.float64))

    def rotation(self) -> np.ndarray:
        return matrix_from_quat(self.q)

    def compose(self, other: "CameraPose") -> "CameraPose":
        """self after other: maps other's camera frame through self."""
        r = self.rotation() @ other.rotation()
        t = self.rotation() @ other.t + self.t
        return CameraPose.from_matrix(r, t)

    def inverse(self) -> "CameraPose":
        r = self.rotation().T
        return CameraPose.from_matrix(r, -r @ self.t)


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(r: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns the w >= 0 representative."""
    m = np.asarray(r, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s, 0.25 * s,
                      (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s,
                      0.25 * s, (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s, 0.25 * s])
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q


@dataclass
class PointMap:
    points: np.ndarray  # [3, H, W], world frame

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[0] != 3:
            raise ShapeError(f"pointmap must be [3,H,W], got {self.points.shape}")
        if not np.all(np.isfinite(self.points)):
            raise ShapeError("pointmap contains non-finite values")


@dataclass
class FrameOutput:
    """Per-frame model outputs; tensors keep the training graph alive."""

    pointmap: Tensor  # [3, H, W]
    confidence: Tensor  # [H, W], >= 1
    rgb: Tensor  # [3, H, W] in [0, 1]
    pose_q: Tensor  # [4], unit, w >= 0
    pose_t: Tensor  # [3]
    depth: np.ndarray | None = None  # [H, W], derived
    valid: np.ndarray | None = None

    @property
    def pose(self) -> CameraPose:
        return CameraPose(self.pose_q.data.copy(), self.pose_t.data.copy())


class DualDecoder(Module):
    """Two token streams refined by one shared stack of cross-attending blocks.

    Both streams are updated simultaneously from the pre-update features, so
    swapping the inputs exactly swaps the outputs.
    """

    def __init__(self, cfg: AttentionConfig, rng: np.random.Generator, dtype=np.float64,
                 blocks: int = 6):
        self.blocks = [TransformerBlock(cfg, rng, dtype, cross=True) for _ in range(blocks)]

    def forward(self, f_t: Tensor, f_mem_prev: Tensor) -> tuple[Tensor, Tensor]:
        if f_t.shape != f_mem_prev.shape:
            raise ShapeError(f"stream shapes differ: {f_t.shape} vs {f_mem_prev.shape}")
        a, b = f_t, f_mem_prev
        for block in self.blocks:
            a, b = block(a, ctx=b), block(b, ctx=a)
        return a, b


def tokens_to_map(tokens: Tensor, channels: int, patch: int, grid_hw) -> Tensor:
    """[N, channels*patch^2] -> [channels, H, W] with (channel, py, px) token layout."""
    gh, gw = grid_hw
    x = tokens.reshape(gh, gw, channels, patch, patch)
    x = transpose(x, (2, 0, 3, 1, 4))
    return x.reshape(channels, gh * patch, gw * patch)


class OutputHeads(Module):
    def __init__(self, dim: int, patch: int, rng: np.random.Generator, dtype=np.float64):
        self.patch = patch
        p2 = patch * patch
        self.point_head = Linear(dim, 3 * p2, rng, dtype)
        self.conf_head = Linear(dim, p2, rng, dtype)
        self.rgb_head = Linear(dim, 3 * p2, rng, dtype)
        self.pose_hidden = Linear(dim, dim, rng, dtype)
        # zero weights + identity-quaternion bias: untrained pose is exactly identity
        self.pose_out = Linear(dim, 7, rng, dtype, zero_init=True)
        self.pose_out.bias.data = np.array([1.0, 0, 0, 0, 0, 0, 0], dtype=dtype)

    def forward(self, tokens: Tensor, grid_hw) -> FrameOutput:
        gh, gw = grid_hw
        if tokens.shape[0] != gh * gw:
            raise ShapeError(f"token count {tokens.shape[0]} does not match grid {gh}x{gw}")
        p = self.patch
        pointmap = tokens_to_map(self.point_head(tokens), 3, p, grid_hw)
        conf = tokens_to_map(self.conf_head(tokens), 1, p, grid_hw).reshape(gh * p, gw * p)
        conf = 1.0 + exp(conf)
        rgb = sigmoid(tokens_to_map(self.rgb_head(tokens), 3, p, grid_hw))

        pooled = tmean(tokens, axis=0)
        raw = self.pose_out(gelu(self.pose_hidden(pooled)))
        q_raw = raw[0:4]
        norm = sqrt((q_raw * q_raw).sum())
        q = q_raw * norm ** -1.0
        # canonical sign; the flip is locally constant, so the graph stays smooth a.e.
        if q.data[0] < 0:
            q = q * -1.0
        return FrameOutput(pointmap=pointmap, confidence=conf, rgb=rgb,
                           pose_q=q, pose_t=raw[4:7])


def pointmap_to_depth(points: np.ndarray, pose: CameraPose,
                      intrinsics: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Camera-frame z per pixel plus a validity mask (z > 0 and in-frustum)."""
    pts = points.points if isinstance(points, PointMap) else np.asarray(points)
    if pts.ndim != 3 or pts.shape[0] != 3:
        raise ShapeError(f"pointmap must be [3,H,W], got {pts.shape}")
    _, h, w = pts.shape
    flat = pts.reshape(3, -1)
    cam = pose.rotation().T @ (flat - pose.t[:, None])
    z = cam[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intrinsics.fx * cam[0] / z + intrinsics.cx
        v = intrinsics.fy * cam[1] / z + intrinsics.cy
    valid = (z > 0) & (u >= 0) & (u < w) & (v >= 0) & (v < h)
    return z.reshape(h, w), valid.reshape(h, w)
