"""Compare the numba and pure-numpy renderer kernels.

Usage: python benchmarks/bench_render.py [--size 64] [--frames 4] [--repeats 3]

The first numba call includes JIT compilation (cached on disk afterwards), so
a warm-up render runs before timing.  Both backends implement identical
arithmetic; the script also reports the maximum output difference.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from coge.backend import force_backend  # noqa: E402
from coge.synthdata import default_intrinsics, make_scene, render, trajectory  # noqa: E402


def run(backend: str, scene, poses, k, size: int, repeats: int):
    force_backend(backend)
    render(scene, poses[0], k, size, size)  # warm-up (JIT compile for numba)
    best = float("inf")
    samples = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        samples = [render(scene, pose, k, size, size) for pose in poses]
        best = min(best, time.perf_counter() - t0)
    force_backend(None)
    return best, samples


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=64)
    parser.add_argument("--frames", type=int, default=4)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    scene = make_scene(7)
    poses = trajectory(scene, args.frames, seed=7)
    k = default_intrinsics(args.size, args.size)

    t_numba, out_numba = run("numba", scene, poses, k, args.size, args.repeats)
    t_numpy, out_numpy = run("numpy", scene, poses, k, args.size, args.repeats)

    diff = max(float(np.max(np.abs(a.depth - b.depth)))
               for a, b in zip(out_numba, out_numpy))
    per_frame_nb = t_numba / args.frames * 1e3
    per_frame_np = t_numpy / args.frames * 1e3
    print(f"render {args.frames} frames at {args.size}x{args.size} "
          f"(best of {args.repeats}):")
    print(f"  numba : {t_numba:8.3f} s  ({per_frame_nb:8.1f} ms/frame)")
    print(f"  numpy : {t_numpy:8.3f} s  ({per_frame_np:8.1f} ms/frame)")
    print(f"  speedup x{t_numpy / t_numba:.1f}, max depth diff {diff:.2e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
