"""Illumination-aware supervision: intrinsic/light decomposition and blending.

A small conv net predicts an intrinsic image (reflectance-like, gradient-stable
under lighting changes) and a light-influence map from each frame.  Training is
self-supervised in the log-gradient domain and the frozen light map is later
blended into the confidence map that weights the pointmap loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Conv2d, Module, sgd_step
from .tensor import Param, Tensor, absolute, concat, gelu, log, sigmoid, stack, tmean


@dataclass
class IasOutput:
    intrinsic: Tensor  # [3, H, W] in (0, 1)
    light: Tensor  # [H, W] in (0, 1)


@dataclass
class BlendParam:
    """Learnable mixing weight, kept in (0, 1) by a sigmoid."""

    raw: Param

    @classmethod
    def create(cls, init: float = 0.0, dtype=np.float64) -> "BlendParam":
        return cls(Param(np.array(init, dtype=dtype)))

    def alpha(self) -> Tensor:
        return sigmoid(self.raw)


class IlluminationNet(Module):
    """4-layer stride-1 conv encoder-decoder; channels 3 -> 16 -> 16 -> 16 -> 4."""

    def __init__(self, rng: np.random.Generator, dtype=np.float64, width: int = 16):
        self.conv1 = Conv2d(3, width, (3, 3), rng, dtype)
        self.conv2 = Conv2d(width, width, (3, 3), rng, dtype)
        self.conv3 = Conv2d(width, width, (3, 3), rng, dtype)
        self.conv4 = Conv2d(width, 4, (3, 3), rng, dtype)

    def forward(self, image: Tensor) -> IasOutput:
        if image.ndim != 3 or image.shape[0] != 3:
            raise ShapeError(f"expected [3,H,W] image, got {image.shape}")
        x = gelu(self.conv1(image))
        x = gelu(self.conv2(x))
        x = gelu(self.conv3(x))
        raw = self.conv4(x)
        intrinsic = sigmoid(raw[0:3])
        light = sigmoid(raw[3])
        return IasOutput(intrinsic=intrinsic, light=light)

    def freeze(self) -> None:
        for p in self.params():
            p.requires_grad = False

    def frozen(self) -> bool:
        return all(not p.requires_grad for p in self.params())


def image_log_gradient(x: Tensor, eps: float = 1e-3) -> Tensor:
    """log(|forward difference| + eps) along x and y; returns [C, 2, H, W].

    The last column/row replicates its neighbour so extents are preserved.
    """
    if x.ndim != 3:
        raise ShapeError(f"expected [C,H,W], got {x.shape}")
    dx = x[:, :, 1:] - x[:, :, :-1]
    dx = concat([dx, dx[:, :, -1:]], axis=2)
    dy = x[:, 1:, :] - x[:, :-1, :]
    dy = concat([dy, dy[:, -1:, :]], axis=1)
    gx = log(absolute(dx) + eps)
    gy = log(absolute(dy) + eps)
    return stack([gx, gy], axis=1)


def ias_loss(image: Tensor, out: IasOutput, eps: float = 1e-3,
             beta_light: float = 0.1, residual: str = "abs") -> Tensor:
    """Gradient-domain decomposition loss plus a light-area regularizer.

    residual r = (1 - L) * log-grad(I) - log-grad(A), reduced with |r| (default)
    or r^2; the mean(L) term blocks the all-ones light solution.
    """
    if residual not in ("abs", "square"):
        raise ConfigError(f"residual must be 'abs' or 'square', got {residual!r}")
    g_image = image_log_gradient(image, eps)
    g_intrinsic = image_log_gradient(out.intrinsic, eps)
    h, w = out.light.shape
    weight = 1.0 - out.light.reshape(1, 1, h, w)
    r = weight * g_image - g_intrinsic
    penalty = absolute(r) if residual == "abs" else r * r
    loss = tmean(penalty)
    if beta_light:
        loss = loss + beta_light * tmean(out.light)
    return loss


def blend_confidence(confidence: Tensor, light: Tensor, alpha: Tensor) -> Tensor:
    """alpha * C + (1 - alpha) * L, elementwise."""
    if confidence.shape != light.shape:
        raise ShapeError(f"confidence {confidence.shape} and light {light.shape} differ")
    return alpha * confidence + (1.0 - alpha) * light


def pretrain_ias(net: IlluminationNet, images, epochs: int = 1, batch: int = 8,
                 lr: float = 0.05, seed: int = 0, eps: float = 1e-3,
                 beta_light: float = 0.1, residual: str = "abs"):
    """Minimize ias_loss over the images, then freeze the net.

    Returns the per-step mean losses.  Images are [3,H,W] arrays in [0,1].
    """
    images = list(images)
    if not images:
        raise ConfigError("IAS pretraining needs a nonempty dataset")
    rng = np.random.default_rng(seed)
    params = net.params()
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(images))
        for start in range(0, len(images), batch):
            chunk = order[start : start + batch]
            net.zero_grad()
            total = None
            for idx in chunk:
                img = Tensor(np.asarray(images[idx]))
                term = ias_loss(img, net(img), eps, beta_light, residual)
                total = term if total is None else total + term
            total = total * (1.0 / len(chunk))
            total.backward()
            sgd_step(params, lr)
            history.append(float(total.data))
    net.freeze()
    return history
