"""Kernel backend selection for the renderer's hot loops.

COGE_BACKEND=numba|numpy|auto (default auto) picks between the @njit kernels
and their pure-numpy vectorized twins.  Both implement the same arithmetic,
step for step; `benchmarks/bench_render.py` compares them.
"""

from __future__ import annotations

import os

from .errors import ConfigError

_FORCED: str | None = None


def _numba_available() -> bool:
    try:
        import numba  # noqa: F401
        return True
    except ImportError:
        return False


def active_backend() -> str:
    """Resolve the backend name: 'numba' or 'numpy'."""
    choice = _FORCED or os.environ.get("COGE_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ConfigError(f"COGE_BACKEND must be auto|numba|numpy, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if not _numba_available():
            raise ConfigError("COGE_BACKEND=numba but numba is not importable")
        return "numba"
    return "numba" if _numba_available() else "numpy"


def force_backend(name: str | None) -> None:
    """Override the env flag (tests and benchmarks); None restores it."""
    global _FORCED
    if name is not None and name not in ("numba", "numpy", "auto"):
        raise ConfigError(f"unknown backend {name!r}")
    _FORCED = name
