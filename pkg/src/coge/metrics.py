"""Depth-map and point-cloud evaluation with optional scale alignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, DegenerateSampleError, ShapeError


@dataclass
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    delta: float

    def as_dict(self) -> dict:
        return {"abs_rel": self.abs_rel, "sq_rel": self.sq_rel, "rmse": self.rmse,
                "rmse_log": self.rmse_log, "delta": self.delta}


@dataclass
class CloudMetrics:
    med: float
    delta_n: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"med": self.med,
                "delta_n": {str(k): v for k, v in sorted(self.delta_n.items())}}


def depth_metrics(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray | None = None,
                  median_scale: bool = True) -> DepthMetrics:
    """Standard monocular depth errors over the masked pixels.

    With median scaling the prediction is first multiplied by
    median(gt)/median(pred), which cancels any global positive rescale.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"depth shapes differ: {pred.shape} vs {gt.shape}")
    if mask is None:
        mask = np.ones(gt.shape, dtype=bool)
    if not mask.any():
        raise DegenerateSampleError("empty evaluation mask")
    p = pred[mask]
    g = gt[mask]
    if np.any(g <= 0) or np.any(p <= 0):
        raise DegenerateSampleError("depth values on the mask must be positive")
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        delta=float(np.mean(ratio < 1.25)),
    )


def umeyama_align(src: np.ndarray, dst: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Least-squares similarity (s, R, t) minimizing ||s*R*src + t - dst||^2.

    Closed form via the SVD of the cross-covariance (reflection-safe).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise ShapeError(f"point sets must both be [N,3], got {src.shape}, {dst.shape}")
    n = src.shape[0]
    if n < 3:
        raise DegenerateGeometryError(f"need >= 3 correspondences, got {n}")
    mu_src = src.mean(axis=0)
    mu_dst = dst.mean(axis=0)
    ds = src - mu_src
    dd = dst - mu_dst
    cov = dd.T @ ds / n
    if np.linalg.matrix_rank(cov) < 3:
        raise DegenerateGeometryError("rank-deficient cross-covariance")
    u, d, vt = np.linalg.svd(cov)
    sign = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        sign[2, 2] = -1.0
    rot = u @ sign @ vt
    var_src = float((ds**2).sum() / n)
    scale = float(np.trace(np.diag(d) @ sign) / var_src)
    t = mu_dst - scale * rot @ mu_src
    return scale, rot, t


def nearest_distances(query: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Distance from each query point to its nearest reference point."""
    tree = cKDTree(np.asarray(reference, dtype=np.float64))
    dist, _ = tree.query(np.asarray(query, dtype=np.float64), k=1)
    return dist


def cloud_metrics(pred: np.ndarray, gt: np.ndarray, thresholds=(1.0, 2.0, 5.0),
                  align: bool = True) -> CloudMetrics:
    """Mean nearest-neighbour distance (pred -> gt) after similarity alignment.

    The clouds must be pixel-aligned (same point count, same order) for the
    alignment step; the nearest-neighbour pass is unordered.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.size == 0 or gt.size == 0:
        raise DegenerateSampleError("empty point cloud")
    if align:
        if pred.shape != gt.shape:
            raise ShapeError(
                f"pixel-aligned clouds must match in shape: {pred.shape} vs {gt.shape}")
        scale, rot, t = umeyama_align(pred, gt)
        pred = (scale * (rot @ pred.T)).T + t
    dist = nearest_distances(pred, gt)
    return CloudMetrics(
        med=float(dist.mean()),
        delta_n={float(n): float(np.mean(dist < n)) for n in thresholds},
    )
