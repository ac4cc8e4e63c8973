"""Shared numeric constants for the twin kernel backends (keep in sync!)."""

INVPHI = 0.6180339887498949  # (sqrt(5) - 1) / 2
GS_TOL = 1e-7  # golden-section bracket tolerance for the nearest-parameter search
GS_BRACKETS = 3  # sub-brackets of the curve domain (distance^2 has <= 3 local minima)

TRACE_MAX_STEPS = 256
TRACE_SAFETY = 0.9
TRACE_HIT_TOL = 1e-5

NOISE_FREQ = 2.2  # albedo value-noise lattice frequency
NORMAL_H = 1e-4  # central-difference step for surface normals
LIGHT_FALLOFF = 0.5  # attenuation 1 / (1 + k d^2)
GAMMA = 2.2
ALBEDO_LO = 0.3
ALBEDO_HI = 0.9
TINT = (1.0, 0.62, 0.52)


def golden_iterations(width: float, tol: float = GS_TOL) -> int:
    """Fixed iteration count shrinking `width` below `tol` (same in both backends)."""
    import math

    if width <= tol:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(INVPHI)))
