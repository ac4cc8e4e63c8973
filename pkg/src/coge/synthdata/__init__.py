"""Procedural tube-scene dataset: SDF geometry, sphere-traced rendering, IO."""

from .generate import Dataset, generate_sequence, load_dataset, trajectory
from .render import SceneSample, default_intrinsics, render, sdf, trace, trace_directions
from .scene import TubeScene, make_scene

__all__ = [
    "Dataset",
    "SceneSample",
    "TubeScene",
    "default_intrinsics",
    "generate_sequence",
    "load_dataset",
    "make_scene",
    "render",
    "sdf",
    "trace",
    "trace_directions",
    "trajectory",
]
