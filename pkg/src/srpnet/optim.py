"""SGD with Nesterov momentum and step-wise learning-rate decay."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .tensor import Tensor


class NesterovSGD:
    """Stochastic gradient descent with Nesterov momentum.

    Per parameter ``p`` with gradient ``g``::

        d = g + wd * p
        v = m * v + d
        p = p - lr * (d + m * v)

    Gradients are cleared after every step.
    """

    def __init__(self, params: Iterable[Tensor], lr: float, momentum: float = 0.9, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        sgd_nesterov_step(self.params, self.velocity, self.lr, self.momentum, self.weight_decay)


def sgd_nesterov_step(params: Sequence[Tensor], velocity: Sequence[np.ndarray], lr: float,
                      momentum: float, weight_decay: float) -> None:
    for p, v in zip(params, velocity):
        if p.grad is None:
            continue
        dt = p.dtype.type
        d = p.grad + dt(weight_decay) * p.data
        v *= dt(momentum)
        v += d
        p.data -= dt(lr) * (d + dt(momentum) * v)
        p.grad = None


def step_lr(base: float, epoch: int, milestones: Sequence[int], decay: float) -> float:
    """Learning rate after ``sum(m <= epoch for m in milestones)`` decays."""
    return base * decay ** sum(1 for m in milestones if m <= epoch)
