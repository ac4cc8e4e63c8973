"""Procedural tube scene: cubic centerline, sinusoidal radius, noise albedo."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass
class TubeScene:
    """Implicit colon-like tube.

    centerline c(s) = coeffs[:,0] + coeffs[:,1] s + coeffs[:,2] s^2 + coeffs[:,3] s^3
    radius     r(s) = r0 (1 + amp_main sin(freq_main s) + amp_fold sin(freq_fold s + fold_phase))
    """

    seed: int
    coeffs: np.ndarray  # [3, 4]
    s_lo: float
    s_hi: float
    r0: float
    amp_main: float
    freq_main: float
    amp_fold: float
    freq_fold: float
    fold_phase: float
    albedo_seed: int
    far: float

    def __post_init__(self):
        if self.amp_main + self.amp_fold >= 0.5:
            raise ConfigError("radius modulation too strong; tube could pinch shut")

    def centerline(self, s):
        s = np.asarray(s, dtype=np.float64)
        powers = np.stack([np.ones_like(s), s, s * s, s * s * s])
        return (self.coeffs @ powers).T if s.ndim else self.coeffs @ powers

    def radius(self, s):
        s = np.asarray(s, dtype=np.float64)
        return self.r0 * (1.0 + self.amp_main * np.sin(self.freq_main * s)
                          + self.amp_fold * np.sin(self.freq_fold * s + self.fold_phase))

    def param_pack(self) -> tuple:
        """Flat argument tuple consumed by both kernel backends."""
        return (np.ascontiguousarray(self.coeffs), float(self.s_lo), float(self.s_hi),
                float(self.r0), float(self.amp_main), float(self.freq_main),
                float(self.amp_fold), float(self.freq_fold), float(self.fold_phase))


def make_scene(seed: int) -> TubeScene:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5CE17E]))
    heading = np.array([1.0, 0.0, 0.0])
    bend = rng.normal(0.0, 0.02, 3)
    twist = rng.normal(0.0, 0.004, 3)
    coeffs = np.stack([np.zeros(3), heading + rng.normal(0, 0.02, 3), bend, twist], axis=1)
    return TubeScene(
        seed=seed,
        coeffs=coeffs,
        s_lo=0.0,
        s_hi=12.0,
        r0=1.0,
        amp_main=0.12,
        freq_main=1.3,
        amp_fold=0.06,
        freq_fold=9.0,
        fold_phase=float(rng.uniform(0.0, 2.0 * np.pi)),
        albedo_seed=int(rng.integers(0, 2**31 - 1)),
        far=8.0,
    )
