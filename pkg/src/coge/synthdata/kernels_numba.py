"""@njit renderer kernels; scalar twins of kernels_numpy (keep in sync!)."""

from __future__ import annotations

import numpy as np
from numba import njit

from .constants import (
    GS_BRACKETS,
    INVPHI,
    NOISE_FREQ,
    TRACE_HIT_TOL,
    TRACE_MAX_STEPS,
    TRACE_SAFETY,
    golden_iterations,
)


@njit(cache=True)
def _curve_dist2(px, py, pz, coeffs, s):
    cx = coeffs[0, 0] + s * (coeffs[0, 1] + s * (coeffs[0, 2] + s * coeffs[0, 3]))
    cy = coeffs[1, 0] + s * (coeffs[1, 1] + s * (coeffs[1, 2] + s * coeffs[1, 3]))
    cz = coeffs[2, 0] + s * (coeffs[2, 1] + s * (coeffs[2, 2] + s * coeffs[2, 3]))
    return (px - cx) ** 2 + (py - cy) ** 2 + (pz - cz) ** 2


@njit(cache=True)
def _radius(r0, amp1, freq1, amp2, freq2, phase2, s):
    return r0 * (1.0 + amp1 * np.sin(freq1 * s) + amp2 * np.sin(freq2 * s + phase2))


@njit(cache=True)
def _nearest_d2_scalar(px, py, pz, coeffs, s_lo, s_hi, iters):
    width = (s_hi - s_lo) / GS_BRACKETS
    best_s = s_lo
    best_d2 = np.inf
    for k in range(GS_BRACKETS):
        a = s_lo + k * width
        b = a + width
        h = b - a
        x1 = b - INVPHI * h
        x2 = a + INVPHI * h
        f1 = _curve_dist2(px, py, pz, coeffs, x1)
        f2 = _curve_dist2(px, py, pz, coeffs, x2)
        for _ in range(iters):
            if f1 < f2:
                b = x2
                h = b - a
                x2 = x1
                f2 = f1
                x1 = b - INVPHI * h
                f1 = _curve_dist2(px, py, pz, coeffs, x1)
            else:
                a = x1
                h = b - a
                x1 = x2
                f1 = f2
                x2 = a + INVPHI * h
                f2 = _curve_dist2(px, py, pz, coeffs, x2)
        s_best = 0.5 * (a + b)
        d2 = _curve_dist2(px, py, pz, coeffs, s_best)
        if d2 < best_d2:
            best_d2 = d2
            best_s = s_best
    return best_s, best_d2


@njit(cache=True)
def _sdf_scalar(px, py, pz, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2, freq2, phase2,
                iters):
    s, d2 = _nearest_d2_scalar(px, py, pz, coeffs, s_lo, s_hi, iters)
    return _radius(r0, amp1, freq1, amp2, freq2, phase2, s) - np.sqrt(d2)


@njit(cache=True)
def _nearest_param_kernel(pts, coeffs, s_lo, s_hi, iters, out_s, out_d2):
    for i in range(pts.shape[0]):
        s, d2 = _nearest_d2_scalar(pts[i, 0], pts[i, 1], pts[i, 2], coeffs,
                                   s_lo, s_hi, iters)
        out_s[i] = s
        out_d2[i] = d2


@njit(cache=True)
def _sdf_points_kernel(pts, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2, freq2, phase2,
                       iters, out):
    for i in range(pts.shape[0]):
        out[i] = _sdf_scalar(pts[i, 0], pts[i, 1], pts[i, 2], coeffs, s_lo, s_hi,
                             r0, amp1, freq1, amp2, freq2, phase2, iters)


@njit(cache=True)
def _trace_kernel(origin, dirs, u_max, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2,
                  freq2, phase2, iters, max_steps, safety, hit_tol, out_u, out_hit):
    for i in range(dirs.shape[0]):
        u = 0.0
        hit = False
        for _ in range(max_steps):
            px = origin[0] + u * dirs[i, 0]
            py = origin[1] + u * dirs[i, 1]
            pz = origin[2] + u * dirs[i, 2]
            sd = _sdf_scalar(px, py, pz, coeffs, s_lo, s_hi, r0, amp1, freq1,
                             amp2, freq2, phase2, iters)
            if sd < hit_tol:
                hit = True
                break
            u = u + safety * sd
            if u >= u_max[i]:
                break
        out_u[i] = u
        out_hit[i] = 1 if hit else 0


@njit(cache=True)
def _hash01_scalar(ix, iy, iz, seed):
    mask = np.uint64(0xFFFFFFFF)
    h = (np.uint64(ix) * np.uint64(2654435761)) & mask
    h ^= (np.uint64(iy) * np.uint64(2246822519)) & mask
    h ^= (np.uint64(iz) * np.uint64(3266489917)) & mask
    h ^= (np.uint64(seed) * np.uint64(668265263)) & mask
    h ^= h >> np.uint64(15)
    h = (h * np.uint64(2246822519)) & mask
    h ^= h >> np.uint64(13)
    h = (h * np.uint64(3266489917)) & mask
    h ^= h >> np.uint64(16)
    return np.float64(h & np.uint64(0xFFFFFF)) / 16777216.0


@njit(cache=True)
def _lattice_noise_scalar(x, y, z, seed):
    qx = x * NOISE_FREQ
    qy = y * NOISE_FREQ
    qz = z * NOISE_FREQ
    bx = np.floor(qx)
    by = np.floor(qy)
    bz = np.floor(qz)
    fx = qx - bx
    fy = qy - by
    fz = qz - bz
    cx = np.uint64(np.int64(bx) & np.int64(0xFFFFFFFF))
    cy = np.uint64(np.int64(by) & np.int64(0xFFFFFFFF))
    cz = np.uint64(np.int64(bz) & np.int64(0xFFFFFFFF))
    tx = fx * fx * (3.0 - 2.0 * fx)
    ty = fy * fy * (3.0 - 2.0 * fy)
    tz = fz * fz * (3.0 - 2.0 * fz)
    total = 0.0
    for dx in range(2):
        wx = tx if dx else 1.0 - tx
        for dy in range(2):
            wy = ty if dy else 1.0 - ty
            for dz in range(2):
                wz = tz if dz else 1.0 - tz
                corner = _hash01_scalar(cx + np.uint64(dx), cy + np.uint64(dy),
                                        cz + np.uint64(dz), seed)
                total += wx * wy * wz * corner
    return total


@njit(cache=True)
def _noise_points_kernel(pts, seed, out):
    for i in range(pts.shape[0]):
        one = _lattice_noise_scalar(pts[i, 0], pts[i, 1], pts[i, 2], seed)
        two = _lattice_noise_scalar(pts[i, 0] * 2.0, pts[i, 1] * 2.0, pts[i, 2] * 2.0,
                                    seed + 1)
        out[i] = (one + 0.5 * two) / 1.5


# ---- python-facing wrappers matching kernels_numpy signatures -----------------


def nearest_param(pts, coeffs, s_lo, s_hi):
    iters = golden_iterations((s_hi - s_lo) / GS_BRACKETS)
    out_s = np.empty(pts.shape[0])
    out_d2 = np.empty(pts.shape[0])
    _nearest_param_kernel(np.ascontiguousarray(pts), np.ascontiguousarray(coeffs),
                          s_lo, s_hi, iters, out_s, out_d2)
    return out_s, out_d2


def sdf_points(pts, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2, freq2, phase2):
    iters = golden_iterations((s_hi - s_lo) / GS_BRACKETS)
    out = np.empty(pts.shape[0])
    _sdf_points_kernel(np.ascontiguousarray(pts), np.ascontiguousarray(coeffs),
                       s_lo, s_hi, r0, amp1, freq1, amp2, freq2, phase2, iters, out)
    return out


def trace_rays(origin, dirs, u_max, coeffs, s_lo, s_hi, r0, amp1, freq1, amp2, freq2,
               phase2, max_steps=TRACE_MAX_STEPS, safety=TRACE_SAFETY,
               hit_tol=TRACE_HIT_TOL):
    iters = golden_iterations((s_hi - s_lo) / GS_BRACKETS)
    out_u = np.empty(dirs.shape[0])
    out_hit = np.empty(dirs.shape[0], dtype=np.uint8)
    _trace_kernel(np.ascontiguousarray(origin), np.ascontiguousarray(dirs),
                  np.ascontiguousarray(u_max), np.ascontiguousarray(coeffs),
                  s_lo, s_hi, r0, amp1, freq1, amp2, freq2, phase2, iters,
                  max_steps, safety, hit_tol, out_u, out_hit)
    return out_u, out_hit.astype(bool)


def noise_points(pts, seed):
    out = np.empty(pts.shape[0])
    _noise_points_kernel(np.ascontiguousarray(pts), seed, out)
    return out
