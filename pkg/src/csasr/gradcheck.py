"""Finite-difference verification of backward passes.

``grad_check`` rebuilds the graph from scratch for every probe, so the
numeric side never reuses anything computed by backward(); the two sides
stay independent. Probed graphs are independent of each other and could be
evaluated concurrently, but at desk scale a serial loop is fast enough.
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GradCheckReport:
    """Per-parameter worst relative error, plus every entry over tolerance."""

    h: float
    tol: float
    max_rel_error: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)  # (param, flat index, analytic, numeric, rel)

    @property
    def passed(self) -> bool:
        return not self.failures

    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    def __str__(self):
        lines = [f"grad check (h={self.h:g}, tol={self.tol:g})"]
        for name, err in self.max_rel_error.items():
            mark = "ok" if err <= self.tol else "FAIL"
            lines.append(f"  {name}: max rel err {err:.3e} [{mark}]")
        return "\n".join(lines)


def _rel_error(a: float, n: float) -> float:
    return abs(a - n) / max(1.0, abs(a), abs(n))


def grad_check(f, params, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare backward() gradients of ``loss = f(*params)`` to central differences.

    f must be a deterministic graph builder returning a scalar Tensor from
    the given parameter Tensors. Parameter values are restored after probing.
    Never raises on a mismatch; inspect the report.
    """
    report = GradCheckReport(h=h, tol=tol)

    for p in params:
        p.zero_grad()
    loss = f(*params)
    loss.backward()
    analytic = [np.array(p.grad) if p.grad is not None else np.zeros_like(p.data) for p in params]

    for pi, p in enumerate(params):
        name = p.name or f"param{pi}"
        worst = 0.0
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f(*params).item()
            flat[i] = orig - h
            down = f(*params).item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = analytic[pi].reshape(-1)[i]
            rel = _rel_error(a, numeric)
            worst = max(worst, rel)
            if rel > tol:
                report.failures.append((name, i, float(a), float(numeric), float(rel)))
        report.max_rel_error[name] = worst
    return report
