"""Camera-mounted-light renderer over the tube SDF, with exact ground truth.

Depth maps store camera-frame z (so the pointmap/pose/intrinsics triplet
reproduces them exactly); the sphere tracer itself works in euclidean ray
lengths, which is what the straight-cylinder analytic oracle measures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..backend import active_backend
from ..errors import ConfigError
from ..heads import CameraPose, Intrinsics
from .constants import ALBEDO_HI, ALBEDO_LO, GAMMA, LIGHT_FALLOFF, NORMAL_H, TINT
from .scene import TubeScene


def _kernels():
    if active_backend() == "numba":
        from . import kernels_numba as k
    else:
        from . import kernels_numpy as k
    return k


@dataclass
class SceneSample:
    """One rendered frame plus its exact ground truth."""

    image: np.ndarray  # [3, H, W] in [0, 1]
    depth: np.ndarray  # [H, W] camera-frame z, (0, far]
    pose: CameraPose  # camera-to-world
    intrinsics: Intrinsics
    pointmap: np.ndarray  # [3, H, W], world frame
    light: np.ndarray  # [H, W] in [0, 1]


def default_intrinsics(h: int, w: int) -> Intrinsics:
    # 90 degree horizontal field of view
    return Intrinsics(fx=w / 2.0, fy=w / 2.0, cx=w / 2.0, cy=h / 2.0)


def pixel_directions(h: int, w: int, k: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Unit camera-frame ray directions [H*W, 3] and their z components."""
    vv, uu = np.mgrid[0:h, 0:w].astype(np.float64)
    x = (uu + 0.5 - k.cx) / k.fx
    y = (vv + 0.5 - k.cy) / k.fy
    d = np.stack([x, y, np.ones_like(x)], axis=-1).reshape(-1, 3)
    norms = np.linalg.norm(d, axis=1, keepdims=True)
    unit = d / norms
    return unit, unit[:, 2].copy()


def sdf(points: np.ndarray, scene: TubeScene) -> np.ndarray:
    """Signed distance to the tube wall, positive inside the lumen."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    return _kernels().sdf_points(pts, *scene.param_pack())


def trace_directions(scene: TubeScene, origin: np.ndarray, dirs: np.ndarray,
                     u_cap: float | None = None):
    """Sphere-trace arbitrary unit rays; returns (euclidean distance, hit mask)."""
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    cap = 4.0 * scene.far if u_cap is None else u_cap
    u_max = np.full(dirs.shape[0], cap)
    return _kernels().trace_rays(np.asarray(origin, dtype=np.float64),
                                 np.ascontiguousarray(dirs), u_max,
                                 *scene.param_pack())


def trace(scene: TubeScene, pose: CameraPose, k: Intrinsics, h: int, w: int):
    """Sphere-trace every pixel; returns (euclid dist [H,W], hit [H,W], aux).

    aux carries the unit world directions and camera-frame z components needed
    to turn ray lengths into depths and points.
    """
    cam_dirs, dir_z = pixel_directions(h, w, k)
    world_dirs = (pose.rotation() @ cam_dirs.T).T
    u_max = scene.far / dir_z
    dist, hit = _kernels().trace_rays(pose.t, np.ascontiguousarray(world_dirs), u_max,
                                      *scene.param_pack())
    return dist.reshape(h, w), hit.reshape(h, w), (world_dirs, dir_z)


def render(scene: TubeScene, pose: CameraPose, k: Intrinsics, h: int, w: int) -> SceneSample:
    if float(sdf(pose.t[None, :], scene)[0]) <= 0.0:
        raise ConfigError("camera is outside the lumen")
    kern = _kernels()
    pack = scene.param_pack()
    dist, hit, (world_dirs, dir_z) = trace(scene, pose, k, h, w)

    flat_hit = hit.reshape(-1)
    flat_dist = dist.reshape(-1)
    # non-hits (parallel rays, non-convergence) sit on the far plane
    u_eff = np.where(flat_hit, flat_dist, scene.far / dir_z)
    points = pose.t[None, :] + u_eff[:, None] * world_dirs
    depth = (u_eff * dir_z).reshape(h, w)

    image = np.zeros((3, h, w))
    light = np.zeros(h * w)
    if flat_hit.any():
        hp = points[flat_hit]
        n_hit = hp.shape[0]
        offsets = np.zeros((6, n_hit, 3))
        for axis in range(3):
            offsets[2 * axis, :, axis] = NORMAL_H
            offsets[2 * axis + 1, :, axis] = -NORMAL_H
        probe = (hp[None, :, :] + offsets).reshape(-1, 3)
        sd = kern.sdf_points(probe, *pack).reshape(6, n_hit)
        grad = np.stack([(sd[0] - sd[1]), (sd[2] - sd[3]), (sd[4] - sd[5])], axis=1)
        grad /= 2.0 * NORMAL_H
        normals = grad / np.maximum(np.linalg.norm(grad, axis=1, keepdims=True), 1e-12)

        to_light = (pose.t[None, :] - hp) / flat_dist[flat_hit][:, None]
        lambert = np.maximum(0.0, (normals * to_light).sum(axis=1))
        att = 1.0 / (1.0 + LIGHT_FALLOFF * flat_dist[flat_hit] ** 2)
        albedo = ALBEDO_LO + (ALBEDO_HI - ALBEDO_LO) * kern.noise_points(hp, scene.albedo_seed)
        shade = albedo * lambert * att
        flat_img = image.reshape(3, -1)
        for c, tint in enumerate(TINT):
            flat_img[c, flat_hit] = np.clip(tint * shade, 0.0, 1.0) ** (1.0 / GAMMA)
        light[flat_hit] = att * lambert

    peak = light.max()
    if peak > 0:
        light = light / peak
    return SceneSample(
        image=image,
        depth=depth,
        pose=pose,
        intrinsics=k,
        pointmap=np.ascontiguousarray(points.T.reshape(3, h, w)),
        light=light.reshape(h, w),
    )
