"""Pure-numpy renderer kernels: vectorized twin of kernels_numba.

Every lane of every np.where below mirrors one branch of the scalar loops in
kernels_numba; iteration counts are fixed and shared, so the two backends
produce matching results.
"""

from __future__ import annotations

import numpy as np

from .constants import (
    GS_BRACKETS,
    INVPHI,
    NOISE_FREQ,
    TRACE_HIT_TOL,
    TRACE_MAX_STEPS,
    TRACE_SAFETY,
    golden_iterations,
)

_MASK32 = np.uint64(0xFFFFFFFF)
_C1 = np.uint64(2654435761)
_C2 = np.uint64(2246822519)
_C3 = np.uint64(3266489917)
_C4 = np.uint64(668265263)


def _curve_dist2(px, py, pz, coeffs, s):
    cx = coeffs[0, 0] + s * (coeffs[0, 1] + s * (coeffs[0, 2] + s * coeffs[0, 3]))
    cy = coeffs[1, 0] + s * (coeffs[1, 1] + s * (coeffs[1, 2] + s * coeffs[1, 3]))
    cz = coeffs[2, 0] + s * (coeffs[2, 1] + s * (coeffs[2, 2] + s * coeffs[2, 3]))
    return (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2


def _radius(r0, amp1, freq1, amp2, freq2, phase2, s):
    return r0 * (1.0 + amp1 * np.sin(freq1 * s) + amp2 * np.sin(freq2 * s + phase2))


def nearest_param(pts: np.ndarray, coeffs, s_lo, s_hi):
    """Best curve parameter and squared distance per point, via golden section
    over GS_BRACKETS equal sub-intervals."""
    px, py, pz = pts[:, 0], pts[:, 1], pts[:, 2]
    width = (s_hi - s_lo) / GS_BRACKETS
    iters = golden_iterations(width)
    best_s = np.full(px.shape, s_lo)
    best_d2 = np.full(px.shape, np.inf)
    for k in range(GS_BRACKETS):
        a = np.full(px.shape, s_lo + k * width)
        b = a + width
        h = b - a
        x1 = b - INVPHI * h
        x2 = a + INVPHI * h
        f1 = _curve_dist2(px, py, pz, coeffs, x1)
        f2 = _curve_dist2(px, py, pz, coeffs, x2)
        for _ in range(iters):
            take_left = f1 < f2
            a = np.where(take_left, a, x1)
            b = np.where(take_left, x2, b)
            h = b - a
            cand_x1 = b - INVPHI * h
            cand_x2 = a + INVPHI * h
            new_x1 = np.where(take_left, cand_x1, x2)
            new_x2 = np.where(take_left, x1, cand_x2)
            new_f1 = np.where(take_left, _curve_dist2(px, py, pz, coeffs, cand_x1), f2)
            new_f2 = np.where(take_left, f1, _curve_dist2(px, py, pz, coeffs, cand_x2))
            x1, x2, f1, f2 = new_x1, new_x2, new_f1, new_f2
        s_best = 0.5 * (a + b)
        d2 = _curve_dist2(px, py, pz, coeffs, s_best)
        better = d2 < best_d2
        best_s = np.where(better, s_best, best_s)
        best_d2 = np.where(better, d2, best_d2)
    return best_s, best_d2


def sdf_points(pts: np.ndarray, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2, freq2, phase2):
    """Signed distance to the tube wall (positive inside the lumen)."""
    s, d2 = nearest_param(pts, coeffs, s_lo, s_hi)
    return _radius(r0, amp1, freq1, amp2, freq2, phase2, s) - np.sqrt(d2)


def trace_rays(origin, dirs, u_max, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2, freq2,
               phase2, max_steps=TRACE_MAX_STEPS, safety=TRACE_SAFETY,
               hit_tol=TRACE_HIT_TOL):
    """Sphere-trace unit rays from one origin; returns (euclidean dist, hit mask).

    dirs: [P, 3] unit vectors; u_max: [P] euclidean cap per ray.
    """
    p_count = dirs.shape[0]
    u = np.zeros(p_count)
    hit = np.zeros(p_count, dtype=bool)
    active = np.ones(p_count, dtype=bool)
    for _ in range(max_steps):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        pts = origin[None, :] + u[idx, None] * dirs[idx]
        sd = sdf_points(pts, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2, freq2, phase2)
        newly_hit = sd < hit_tol
        hit[idx[newly_hit]] = True
        u[idx] = u[idx] + np.where(newly_hit, 0.0, safety * sd)
        active[idx] = ~newly_hit & (u[idx] < u_max[idx])
    return u, hit


def _hash01(ix, iy, iz, seed):
    h = (ix.astype(np.uint64) * _C1) & _MASK32
    h ^= (iy.astype(np.uint64) * _C2) & _MASK32
    h ^= (iz.astype(np.uint64) * _C3) & _MASK32
    h ^= (np.uint64(seed) * _C4) & _MASK32
    h ^= h >> np.uint64(15)
    h = (h * _C2) & _MASK32
    h ^= h >> np.uint64(13)
    h = (h * _C3) & _MASK32
    h ^= h >> np.uint64(16)
    return (h & np.uint64(0xFFFFFF)).astype(np.float64) / 16777216.0


def _lattice_noise(pts, seed):
    q = pts * NOISE_FREQ
    base = np.floor(q)
    frac = q - base
    cell = (base.astype(np.int64) & np.int64(0xFFFFFFFF)).astype(np.uint64)
    t = frac * frac * (3.0 - 2.0 * frac)
    total = np.zeros(pts.shape[0])
    for dx in (0, 1):
        wx = t[:, 0] if dx else 1.0 - t[:, 0]
        for dy in (0, 1):
            wy = t[:, 1] if dy else 1.0 - t[:, 1]
            for dz in (0, 1):
                wz = t[:, 2] if dz else 1.0 - t[:, 2]
                corner = _hash01(cell[:, 0] + np.uint64(dx),
                                 cell[:, 1] + np.uint64(dy),
                                 cell[:, 2] + np.uint64(dz), seed)
                total += wx * wy * wz * corner
    return total


def noise_points(pts: np.ndarray, seed: int):
    """Two-octave value noise in [0, 1]."""
    one = _lattice_noise(pts, seed)
    two = _lattice_noise(pts * 2.0, seed + 1)
    return (one + 0.5 * two) / 1.5
