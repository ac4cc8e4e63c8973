"""On-disk formats: PFM float maps, binary PLY clouds, PNG images, pose JSON.

PFM follows the usual convention: 'Pf' grayscale / 'PF' 3-channel, dimensions
line, negative scale for little-endian, scanlines stored bottom-to-top.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IngestionError
from .heads import CameraPose, Intrinsics


def write_pfm(path, data: np.ndarray, scale: float = -1.0) -> None:
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf"
        rows = data[::-1]
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
        rows = data[::-1]
    else:
        raise IngestionError(f"PFM needs [H,W] or [H,W,3], got {data.shape}")
    h, w = data.shape[:2]
    if scale >= 0:
        raise IngestionError("only little-endian (negative scale) PFM is written")
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{w} {h}\n".encode())
        f.write(f"{scale}\n".encode())
        f.write(rows.astype("<f4").tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header not in (b"Pf", b"PF"):
            raise IngestionError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().split()
        if len(dims) != 2:
            raise IngestionError(f"{path}: malformed PFM dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        count = w * h * (3 if header == b"PF" else 1)
        payload = f.read()
        if len(payload) < 4 * count:
            raise IngestionError(f"{path}: truncated PFM payload")
        raw = np.frombuffer(payload, dtype="<f4" if scale < 0 else ">f4", count=count)
    shape = (h, w, 3) if header == b"PF" else (h, w)
    return np.ascontiguousarray(raw.reshape(shape)[::-1]).astype(np.float64)


def write_ply(path, points: np.ndarray, colors: np.ndarray) -> None:
    """Binary little-endian PLY with x,y,z float32 and red,green,blue uchar."""
    points = np.asarray(points, dtype=np.float32)
    colors = np.asarray(colors, dtype=np.uint8)
    if points.ndim != 2 or points.shape[1] != 3 or colors.shape != points.shape:
        raise IngestionError(
            f"PLY needs matching [N,3] points and colors, got {points.shape}, {colors.shape}")
    n = len(points)
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {n}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "end_header\n"
    )
    record = np.zeros(n, dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)])
    record["xyz"] = points
    record["rgb"] = colors
    with open(path, "wb") as f:
        f.write(header.encode())
        f.write(record.tobytes())


def read_ply(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, "rb") as f:
        line = f.readline().strip()
        if line != b"ply":
            raise IngestionError(f"{path}: not a PLY file")
        n = None
        while True:
            line = f.readline()
            if not line:
                raise IngestionError(f"{path}: missing end_header")
            if line.startswith(b"element vertex"):
                n = int(line.split()[-1])
            if line.strip() == b"end_header":
                break
        if n is None:
            raise IngestionError(f"{path}: no vertex element")
        record = np.frombuffer(
            f.read(), dtype=[("xyz", "<f4", 3), ("rgb", "u1", 3)], count=n)
    return record["xyz"].astype(np.float64), record["rgb"].copy()


def write_png(path, image: np.ndarray) -> None:
    """[3,H,W] floats in [0,1] -> 8-bit RGB."""
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise IngestionError(f"PNG writer needs [3,H,W], got {arr.shape}")
    quantized = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized.transpose(1, 2, 0), mode="RGB").save(path)


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr.transpose(2, 0, 1)


def write_poses(path, poses: list[CameraPose]) -> None:
    payload = [
        {"frame": i, "q": [float(v) for v in p.q], "t": [float(v) for v in p.t]}
        for i, p in enumerate(poses)
    ]
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def read_poses(path) -> list[CameraPose]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise IngestionError(f"cannot read poses from {path}: {err}") from err
    poses = [None] * len(payload)
    for entry in payload:
        poses[int(entry["frame"])] = CameraPose(np.array(entry["q"]), np.array(entry["t"]))
    if any(p is None for p in poses):
        raise IngestionError(f"{path}: missing frame indices")
    return poses


def write_intrinsics(path, k: Intrinsics) -> None:
    Path(path).write_text(json.dumps(
        {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy}, indent=1, sort_keys=True))


def read_intrinsics(path) -> Intrinsics:
    try:
        payload = json.loads(Path(path).read_text())
        return Intrinsics(fx=float(payload["fx"]), fy=float(payload["fy"]),
                          cx=float(payload["cx"]), cy=float(payload["cy"]))
    except (OSError, KeyError, json.JSONDecodeError) as err:
        raise IngestionError(f"cannot read intrinsics from {path}: {err}") from err
