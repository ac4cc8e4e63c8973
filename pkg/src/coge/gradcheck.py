"""Central finite-difference oracle for analytic gradients.

``gradcheck`` re-evaluates a scalar-valued function under +/- eps
perturbations of every scalar parameter and compares against the recorded
reverse-mode gradient.  It is the ground truth every differentiable
operation in the package is certified against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OracleError
from .tensor import Param


@dataclass
class ParamReport:
    name: str
    worst_rel_error: float
    worst_index: int
    analytic: float
    numeric: float
    checked: int


@dataclass
class GradCheckResult:
    reports: list
    tol: float

    @property
    def worst(self) -> "ParamReport":
        return max(self.reports, key=lambda r: r.worst_rel_error)

    @property
    def passed(self) -> bool:
        return all(r.worst_rel_error <= self.tol for r in self.reports)

    def summary(self) -> str:
        lines = []
        for r in sorted(self.reports, key=lambda r: -r.worst_rel_error):
            status = "ok" if r.worst_rel_error <= self.tol else "FAIL"
            lines.append(
                f"{status:4s} {r.name:50s} rel={r.worst_rel_error:.3e} "
                f"(analytic={r.analytic:+.6e} numeric={r.numeric:+.6e})"
            )
        return "\n".join(lines)


def _evaluate(f) -> float:
    out = f()
    value = float(out.data)
    if not np.isfinite(value):
        raise OracleError(f"function value is not finite: {value}")
    return value, out


def gradcheck(f, params, eps: float = 1e-5, tol: float = 1e-4,
              max_entries_per_param: int | None = None, seed: int = 0) -> GradCheckResult:
    """Compare analytic gradients of ``f()`` against central differences.

    ``f`` must rebuild its graph from the params' current data on every call
    and return a scalar Tensor.  Params must be float64 for the stated
    tolerances to be meaningful.  ``max_entries_per_param`` optionally
    subsamples the scalar entries checked in each Param (seeded); the default
    checks every scalar.
    """
    params = list(params)
    for p in params:
        if not isinstance(p, Param):
            raise OracleError(f"gradcheck needs Params, got {type(p).__name__}")
        p.grad = None
    _, out = _evaluate(f)
    out.backward()
    analytic = {id(p): (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for p in params}

    rng = np.random.default_rng(seed)
    reports = []
    for p in params:
        flat = p.data.reshape(-1)
        ana = analytic[id(p)].reshape(-1)
        n = flat.size
        if max_entries_per_param is not None and n > max_entries_per_param:
            idxs = rng.choice(n, size=max_entries_per_param, replace=False)
        else:
            idxs = range(n)
        worst = ParamReport(p.name or "<unnamed>", 0.0, -1, 0.0, 0.0, 0)
        for i in idxs:
            keep = flat[i]
            flat[i] = keep + eps
            f_plus, _ = _evaluate(f)
            flat[i] = keep - eps
            f_minus, _ = _evaluate(f)
            flat[i] = keep
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(ana[i])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst.checked += 1
            if rel > worst.worst_rel_error:
                worst.worst_rel_error = rel
                worst.worst_index = int(i)
                worst.analytic = a
                worst.numeric = numeric
        reports.append(worst)
    return GradCheckResult(reports, tol)


def randomize_params(module, rng: np.random.Generator, scale: float = 0.3) -> None:
    """Fill every param with small random values (for exercising zero-init paths)."""
    for _, p in module.named_params():
        p.data = rng.normal(0.0, scale, p.data.shape).astype(p.data.dtype)
