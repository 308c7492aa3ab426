"""Parameter containers: a small module base plus conv, batch-norm and affine layers."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import RunningStats, Tensor


class Module:
    """Anything holding parameters.

    Parameters, running statistics and child modules are discovered from
    instance attributes in assignment order, which fixes their names.
    """

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, list) and val and isinstance(val[0], Module):
                for i, child in enumerate(val):
                    yield from child.named_parameters(f"{name}.{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, RunningStats):
                yield name + ".mean", val.mean
                yield name + ".var", val.var
            elif isinstance(val, Module):
                yield from val.named_buffers(name + ".")
            elif isinstance(val, list) and val and isinstance(val[0], Module):
                for i, child in enumerate(val):
                    yield from child.named_buffers(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())


def kaiming_normal(gen: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    w = gen.standard_normal(shape) * math.sqrt(2.0 / fan_in)
    return Tensor(w.astype(dtype), requires_grad=True)


def fan_in_uniform(gen: np.random.Generator, shape, fan_in: int, dtype) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(gen.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def zeros(shape, dtype) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=True)


class Conv(Module):
    def __init__(self, gen, c_in: int, c_out: int, size: int, stride: int = 1, dtype=np.float32):
        self.weight = kaiming_normal(gen, (c_out, c_in, size, size), c_in * size * size, dtype)
        self.stride = stride
        self.pad = size // 2

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.stride, self.pad)


class BatchNorm(Module):
    def __init__(self, channels: int, dtype=np.float32):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = zeros(channels, dtype)
        self.stats = RunningStats(channels, dtype)

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return T.batchnorm2d(x, self.gamma, self.beta, self.stats, training)


class Affine(Module):
    def __init__(self, gen, d_in: int, d_out: int, dtype=np.float32):
        self.weight = fan_in_uniform(gen, (d_in, d_out), d_in, dtype)
        self.bias = zeros(d_out, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.affine(x, self.weight, self.bias)
