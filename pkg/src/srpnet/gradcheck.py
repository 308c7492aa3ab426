"""Central-difference gradient checking for ops built on :mod:`srpnet.tensor`."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_input: list[float] = field(default_factory=list)
    tol: float = 1e-4

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol


def rel_err(a: float, n: float) -> float:
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


def grad_check(
    op: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    directions: int = 8,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic and numeric Jacobian-vector products.

    ``op`` may return a tensor of any shape; it is contracted with a fixed
    random cotangent to give a scalar.  For each input that requires grad,
    ``directions`` random unit directions ``v`` are probed and
    ``<grad, v>`` is compared with ``(f(x + h v) - f(x - h v)) / 2h``.
    """
    rng = np.random.default_rng(seed)
    out = op(*inputs)
    cot = rng.standard_normal(out.shape)

    def scalar() -> float:
        return float(np.sum(op(*inputs).data * cot))

    for t in inputs:
        t.grad = None
    backward(out, cot.astype(out.dtype))
    analytic = [None if t.grad is None else t.grad.copy() for t in inputs]

    per_input = []
    for t, g in zip(inputs, analytic):
        if not t.requires_grad:
            continue
        if g is None:
            g = np.zeros_like(t.data)
        worst = 0.0
        base = t.data.copy()
        for _ in range(directions):
            v = rng.standard_normal(t.shape)
            v /= np.linalg.norm(v)
            t.data = base + h * v
            fp = scalar()
            t.data = base - h * v
            fm = scalar()
            t.data = base.copy()
            num = (fp - fm) / (2 * h)
            worst = max(worst, rel_err(float(np.sum(g * v)), num))
        per_input.append(worst)
    for t in inputs:
        t.grad = None
    return GradCheckReport(max(per_input, default=0.0), per_input, tol)
