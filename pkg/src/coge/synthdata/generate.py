"""Camera trajectories through the tube, frame-0 world normalization, dataset IO.

Dataset layout: <root>/frame_%05d.{png,depth.pfm,points.pfm,light.pfm} plus
poses.json, intrinsics.json and meta.json (seed and scene parameters).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError, IngestionError
from ..fileio import (
    read_intrinsics,
    read_pfm,
    read_png,
    read_poses,
    write_intrinsics,
    write_pfm,
    write_png,
    write_poses,
)
from ..heads import CameraPose, Intrinsics
from .render import SceneSample, default_intrinsics, render
from .scene import TubeScene, make_scene

S_START = 0.8
S_STEP = 0.15
LOOK_AHEAD = 0.25


def _frame_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, 0xF0A3, frame]))


def _camera_pose(scene: TubeScene, s: float, frame: int, seed: int,
                 up_hint: np.ndarray) -> tuple[CameraPose, np.ndarray]:
    rng = _frame_rng(seed, frame)
    center = scene.centerline(np.array(s))
    forward = scene.centerline(np.array(s + LOOK_AHEAD)) - center
    forward = forward / np.linalg.norm(forward)
    # small per-frame jitters keep consecutive poses distinct
    forward = forward + rng.normal(0.0, 0.02, 3)
    forward /= np.linalg.norm(forward)

    up = up_hint - np.dot(up_hint, forward) * forward
    up /= np.linalg.norm(up)
    offset_2d = rng.uniform(-1.0, 1.0, 2)
    right = np.cross(up, forward)
    radius = float(scene.radius(np.array(s)))
    position = center + 0.2 * radius * (offset_2d[0] * right + offset_2d[1] * up)

    z = forward
    y = -up  # camera y points down
    x = np.cross(y, z)
    rot = np.stack([x, y, z], axis=1)
    return CameraPose.from_matrix(rot, position), up


def trajectory(scene: TubeScene, frames: int, seed: int, loop: bool = False):
    """Camera-to-world poses advancing along the centerline; with loop=True the
    second half revisits the first half's curve parameters."""
    if frames < 2:
        raise ConfigError(f"need at least 2 frames, got {frames}")
    if loop:
        half = (frames + 1) // 2
        s_values = [S_START + (i % half) * S_STEP for i in range(frames)]
    else:
        s_values = [S_START + i * S_STEP for i in range(frames)]
    if max(s_values) + LOOK_AHEAD > scene.s_hi - 1.0:
        raise ConfigError(f"{frames} frames overrun the scene's curve domain")
    poses = []
    up = np.array([0.0, 0.0, 1.0])
    up = up - np.dot(up, np.array([1.0, 0.0, 0.0])) * np.array([1.0, 0.0, 0.0])
    for i, s in enumerate(s_values):
        pose, up = _camera_pose(scene, s, i, seed, up)
        poses.append(pose)
    return poses


def to_first_frame(samples: list[SceneSample]) -> list[SceneSample]:
    """Re-express all ground truth in frame 0's camera frame (the world frame)."""
    anchor = samples[0].pose.inverse()
    rot = anchor.rotation()
    out = []
    for s in samples:
        h, w = s.depth.shape
        pts = s.pointmap.reshape(3, -1)
        pts = rot @ pts + anchor.t[:, None]
        out.append(SceneSample(
            image=s.image,
            depth=s.depth,
            pose=anchor.compose(s.pose),
            intrinsics=s.intrinsics,
            pointmap=np.ascontiguousarray(pts.reshape(3, h, w)),
            light=s.light,
        ))
    return out


def generate_sequence(seed: int, frames: int, h: int, w: int, loop: bool = False,
                      out_dir=None) -> list[SceneSample]:
    """Render a deterministic sequence; optionally write the dataset to disk."""
    scene = make_scene(seed)
    k = default_intrinsics(h, w)
    samples = [render(scene, pose, k, h, w)
               for pose in trajectory(scene, frames, seed, loop)]
    samples = to_first_frame(samples)
    if out_dir is not None:
        write_dataset(out_dir, samples, seed, scene, loop)
    return samples


def write_dataset(root, samples: list[SceneSample], seed: int, scene: TubeScene,
                  loop: bool) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(samples):
        stem = root / f"frame_{i:05d}"
        write_png(f"{stem}.png", s.image)
        write_pfm(f"{stem}.depth.pfm", s.depth)
        write_pfm(f"{stem}.points.pfm", s.pointmap.transpose(1, 2, 0))
        write_pfm(f"{stem}.light.pfm", s.light)
    write_poses(root / "poses.json", [s.pose for s in samples])
    write_intrinsics(root / "intrinsics.json", samples[0].intrinsics)
    h, w = samples[0].depth.shape
    meta = {
        "seed": seed,
        "frames": len(samples),
        "height": h,
        "width": w,
        "loop": loop,
        "far": scene.far,
        "radius": scene.r0,
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


@dataclass
class Dataset:
    images: list[np.ndarray]  # [3,H,W] in [0,1]
    depths: list[np.ndarray]
    pointmaps: list[np.ndarray]
    lights: list[np.ndarray]
    poses: list[CameraPose]
    intrinsics: Intrinsics
    meta: dict

    def __len__(self) -> int:
        return len(self.images)


def load_dataset(root) -> Dataset:
    root = Path(root)
    meta_path = root / "meta.json"
    if not meta_path.exists():
        raise IngestionError(f"no dataset at {root} (missing {meta_path})")
    meta = json.loads(meta_path.read_text())
    frames = int(meta["frames"])
    images, depths, pointmaps, lights = [], [], [], []
    for i in range(frames):
        stem = root / f"frame_{i:05d}"
        for suffix in (".png", ".depth.pfm", ".points.pfm", ".light.pfm"):
            if not Path(f"{stem}{suffix}").exists():
                raise IngestionError(f"missing dataset file {stem}{suffix}")
        images.append(read_png(f"{stem}.png"))
        depths.append(read_pfm(f"{stem}.depth.pfm"))
        pointmaps.append(np.ascontiguousarray(read_pfm(f"{stem}.points.pfm").transpose(2, 0, 1)))
        lights.append(read_pfm(f"{stem}.light.pfm"))
    return Dataset(
        images=images,
        depths=depths,
        pointmaps=pointmaps,
        lights=lights,
        poses=read_poses(root / "poses.json"),
        intrinsics=read_intrinsics(root / "intrinsics.json"),
        meta=meta,
    )
