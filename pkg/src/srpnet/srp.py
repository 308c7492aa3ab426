"""Stochastic Region Pooling.

During training the channel descriptor of a feature map is the mean over a
randomly placed square region (single-square mode) or over the union of
several random squares (multi-square mode).  At evaluation the descriptor
is the plain global average.  The square side shrinks with depth according
to a linear schedule.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .rng import SrpRng
from .tensor import Tensor, _make


class SrpMode(str, enum.Enum):
    OFF = "off"
    SS = "ss"
    MS = "ms"


class Schedule(str, enum.Enum):
    FIXED = "fixed"
    LINEAR = "linear"


class Mode(str, enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


class ConfigError(ValueError):
    pass


# Default scale ratios and square count for the two sampling modes.
SS_DEFAULT_LAMBDA = 0.8
MS_DEFAULT_LAMBDA = 0.6
MS_DEFAULT_REGIONS = 5


@dataclass(frozen=True)
class SrpConfig:
    mode: SrpMode = SrpMode.OFF
    lambda_target: float = 1.0
    regions: int = 1
    schedule: Schedule = Schedule.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "mode", SrpMode(self.mode))
        object.__setattr__(self, "schedule", Schedule(self.schedule))
        if not 0 < self.lambda_target <= 1:
            raise ConfigError(f"scale ratio must lie in (0, 1], got {self.lambda_target}")
        if int(self.regions) != self.regions or self.regions < 1:
            raise ConfigError(f"region count must be a positive integer, got {self.regions}")

    @classmethod
    def off(cls) -> "SrpConfig":
        return cls(SrpMode.OFF)

    @classmethod
    def single_square(cls, lambda_target: float = SS_DEFAULT_LAMBDA,
                      schedule: Schedule = Schedule.LINEAR) -> "SrpConfig":
        return cls(SrpMode.SS, lambda_target, 1, schedule)

    @classmethod
    def multi_square(cls, lambda_target: float = MS_DEFAULT_LAMBDA, regions: int = MS_DEFAULT_REGIONS,
                     schedule: Schedule = Schedule.LINEAR) -> "SrpConfig":
        return cls(SrpMode.MS, lambda_target, regions, schedule)

    @property
    def effective_regions(self) -> int:
        return 1 if self.mode is SrpMode.SS else self.regions

    def block_lambda(self, block_index: int, num_blocks: int) -> float:
        if self.schedule is Schedule.FIXED:
            return self.lambda_target
        return scheduled_lambda(block_index, num_blocks, self.lambda_target)


@dataclass(frozen=True)
class RegionMask:
    """Membership grid of the pooled region of one feature map."""

    membership: np.ndarray

    @property
    def height(self) -> int:
        return self.membership.shape[0]

    @property
    def width(self) -> int:
        return self.membership.shape[1]

    @property
    def cardinality(self) -> int:
        return int(self.membership.sum())


def region_dims(h: int, w: int, lam: float) -> tuple[int, int]:
    """Side lengths of the square region, rounded to nearest and kept in [1, extent]."""
    if h < 1 or w < 1:
        raise ConfigError(f"feature map must be non-empty, got {h}x{w}")
    if not 0 < lam <= 1:
        raise ConfigError(f"scale ratio must lie in (0, 1], got {lam}")
    hr = math.floor(lam * h + 0.5)
    wr = math.floor(lam * w + 0.5)
    return min(max(hr, 1), h), min(max(wr, 1), w)


def sample_positions(gen: np.random.Generator, h: int, w: int, hr: int, wr: int, m: int) -> np.ndarray:
    """``m`` top-left corners drawn uniformly with replacement, as an [m, 2] int array."""
    if not (1 <= hr <= h and 1 <= wr <= w):
        raise ConfigError(f"region {hr}x{wr} does not fit in {h}x{w}")
    rows = gen.integers(0, h - hr + 1, size=m)
    cols = gen.integers(0, w - wr + 1, size=m)
    return np.stack([rows, cols], axis=1)


def build_union_mask(positions, hr: int, wr: int, h: int, w: int) -> RegionMask:
    grid = np.zeros((h, w), dtype=bool)
    for a, b in np.asarray(positions).reshape(-1, 2):
        if not (0 <= a <= h - hr and 0 <= b <= w - wr):
            raise AssertionError(f"region at ({a}, {b}) of size {hr}x{wr} leaves the {h}x{w} map")
        grid[a:a + hr, b:b + wr] = True
    return RegionMask(grid)


def area_ratio(mask: RegionMask) -> float:
    return mask.cardinality / (mask.height * mask.width)


def scheduled_lambda(block_index: int, num_blocks: int, lambda_target: float) -> float:
    """Scale ratio of attention block ``block_index`` out of ``num_blocks``.

    Falls linearly from 1 at the first block to ``lambda_target`` at the last.
    """
    if num_blocks < 1 or not 0 <= block_index < num_blocks:
        raise ConfigError(f"block {block_index} out of range for {num_blocks} blocks")
    if num_blocks == 1:
        return lambda_target
    if block_index == num_blocks - 1:
        return lambda_target
    return 1.0 - (1.0 - lambda_target) * block_index / (num_blocks - 1)


def sample_masks(cfg: SrpConfig, lam: float, n: int, h: int, w: int, rng: SrpRng,
                 block_index: int, branch: int = 0) -> np.ndarray:
    """Per-sample region masks for one SRP call, as an [n, h, w] bool array."""
    hr, wr = region_dims(h, w, lam)
    m = cfg.effective_regions
    masks = np.empty((n, h, w), dtype=bool)
    for i in range(n):
        pos = sample_positions(rng.generator(block_index, branch, i), h, w, hr, wr, m)
        masks[i] = build_union_mask(pos, hr, wr, h, w).membership
    return masks


def gap(u: np.ndarray) -> np.ndarray:
    """Global average over the spatial axes of an [N,C,H,W] array."""
    return u.sum(axis=(2, 3)) / u.dtype.type(u.shape[2] * u.shape[3])


def masked_mean(u: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Mean of ``u[n, c]`` over the cells where ``masks[n]`` is set.

    Samples whose mask covers the whole map go through :func:`gap` so that
    the full-map case is bit-identical to global average pooling.
    """
    card = masks.sum(axis=(1, 2))
    out = (u * masks[:, None]).sum(axis=(2, 3)) / card[:, None].astype(u.dtype)
    full = card == u.shape[2] * u.shape[3]
    if full.any():
        out[full] = gap(u[full])
    return out


def pool_with_masks(u: Tensor, masks: Optional[np.ndarray]) -> Tensor:
    """Differentiable descriptor; ``masks=None`` means the whole map."""
    n, c, h, w = u.shape
    if masks is None:
        area = u.dtype.type(h * w)

        def back_gap(g):
            return (np.broadcast_to((g / area)[:, :, None, None], u.shape).copy(),)

        return _make(gap(u.data), (u,), back_gap, "srp_pool")

    weights = (masks / masks.sum(axis=(1, 2), keepdims=True)).astype(u.dtype)

    def back(g):
        return (g[:, :, None, None] * weights[:, None],)

    return _make(masked_mean(u.data, masks), (u,), back, "srp_pool")


def srp_pool(
    u: Tensor,
    cfg: SrpConfig,
    block_index: int,
    mode: Mode,
    rng: Optional[SrpRng],
    *,
    num_blocks: int = 1,
    branch: int = 0,
    positions: Optional[Sequence] = None,
) -> Tensor:
    """Channel descriptors [N, C] of ``u`` [N, C, H, W].

    In eval mode, or with ``cfg.mode == OFF``, this is global average pooling
    and ``rng`` is never touched.  In train mode each sample draws its own
    region, shared by all its channels.  ``positions`` ([N, M, 2] or [M, 2])
    bypasses sampling, which is handy for tests.
    """
    if u.ndim != 4 or u.data.size == 0:
        raise ValueError(f"srp_pool expects a non-empty [N,C,H,W] tensor, got {u.shape}")
    if Mode(mode) is Mode.EVAL or cfg.mode is SrpMode.OFF:
        return pool_with_masks(u, None)

    n, _, h, w = u.shape
    lam = cfg.block_lambda(block_index, num_blocks)
    if positions is not None:
        hr, wr = region_dims(h, w, lam)
        pos = np.asarray(positions)
        if pos.ndim == 2:
            pos = np.broadcast_to(pos, (n,) + pos.shape)
        masks = np.stack([build_union_mask(p, hr, wr, h, w).membership for p in pos])
    else:
        masks = sample_masks(cfg, lam, n, h, w, rng, block_index, branch)
    return pool_with_masks(u, masks)
