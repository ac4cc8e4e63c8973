"""Training objective: confidence-weighted pointmap term plus pose and rgb terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateSampleError, ShapeError
from .heads import CameraPose
from .tensor import Tensor, log, sqrt, tmean


@dataclass
class LossWeights:
    lambda_reg: float = 0.2
    w_pose: float = 1.0
    w_rgb: float = 1.0

    def __post_init__(self):
        if min(self.lambda_reg, self.w_pose, self.w_rgb) < 0:
            raise ConfigError("loss weights must be nonnegative")


@dataclass
class LossReport:
    conf: float
    pose: float
    rgb: float
    total: float


def _pixel_norms(points: Tensor, guard: float = 0.0) -> Tensor:
    """Per-pixel euclidean norm of a [3,H,W] map; optional tiny smoothing guard."""
    squared = (points * points).sum(axis=0)
    return sqrt(squared + guard) if guard else sqrt(squared)


def loss_conf(pred: Tensor, gt: np.ndarray, conf: Tensor, lambda_reg: float = 0.2,
              valid: np.ndarray | None = None) -> Tensor:
    """Scale-normalized, confidence-weighted pointmap regression.

    Both maps are divided by their own mean point norm over valid pixels, so
    the loss is exactly invariant to a global positive rescale of the
    prediction.  conf must be positive; the -lambda*log(conf) bonus rewards
    honest confidence.
    """
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"pointmap shapes differ: {pred.shape} vs {tuple(gt.shape)}")
    if conf.shape != pred.shape[1:]:
        raise ShapeError(f"confidence {conf.shape} does not match maps {pred.shape}")
    if valid is None:
        valid = np.ones(pred.shape[1:], dtype=bool)
    if not valid.any():
        raise DegenerateSampleError("no valid ground-truth pixels")
    flat_idx = np.nonzero(valid.reshape(-1))[0]

    gt_norms = np.linalg.norm(gt.reshape(3, -1), axis=0)[flat_idx]
    gt_scale = float(gt_norms.mean())
    if gt_scale == 0.0:
        raise DegenerateSampleError("ground-truth pointmap has zero mean norm")
    pred_scale = tmean(_pixel_norms(pred).reshape(-1)[flat_idx])

    diff = pred * pred_scale**-1.0 - Tensor(gt / gt_scale)
    err = sqrt((diff * diff).sum(axis=0) + 1e-30).reshape(-1)[flat_idx]
    conf_v = conf.reshape(-1)[flat_idx]
    return tmean(conf_v * err - lambda_reg * log(conf_v))


def loss_pose(pred_q: Tensor, pred_t: Tensor, gt: CameraPose) -> Tensor:
    """Translation distance plus sign-resolved quaternion distance."""
    t_diff = pred_t - Tensor(gt.t)
    term_t = sqrt((t_diff * t_diff).sum() + 1e-30)
    d_plus = pred_q - Tensor(gt.q)
    d_minus = pred_q + Tensor(gt.q)
    n_plus = sqrt((d_plus * d_plus).sum() + 1e-30)
    n_minus = sqrt((d_minus * d_minus).sum() + 1e-30)
    term_q = n_plus if float(n_plus.data) <= float(n_minus.data) else n_minus
    return term_t + term_q


def loss_rgb(pred: Tensor, image: np.ndarray) -> Tensor:
    image = np.asarray(image)
    if pred.shape != image.shape:
        raise ShapeError(f"rgb shapes differ: {pred.shape} vs {tuple(image.shape)}")
    diff = pred - Tensor(image)
    return tmean(diff * diff)


def total_loss(pred_pointmap: Tensor, pred_q: Tensor, pred_t: Tensor, pred_rgb: Tensor,
               blended_conf: Tensor, gt_pointmap: np.ndarray, gt_pose: CameraPose,
               gt_image: np.ndarray, weights: LossWeights,
               valid: np.ndarray | None = None) -> tuple[Tensor, LossReport]:
    """Weighted sum of the three terms plus a per-term report for logging."""
    term_conf = loss_conf(pred_pointmap, gt_pointmap, blended_conf,
                          weights.lambda_reg, valid)
    term_pose = loss_pose(pred_q, pred_t, gt_pose)
    term_rgb = loss_rgb(pred_rgb, gt_image)
    total = term_conf + weights.w_pose * term_pose + weights.w_rgb * term_rgb
    report = LossReport(conf=float(term_conf.data), pose=float(term_pose.data),
                        rgb=float(term_rgb.data), total=float(total.data))
    return total, report
