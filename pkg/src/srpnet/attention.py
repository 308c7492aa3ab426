"""Channel-attention blocks whose squeeze step is stochastic region pooling.

The one-branch block gates the residual activation from its own
descriptor through two affine maps.  The double-branch block also pools
the identity branch, stacks both descriptors into a 2 x C grid and mixes
them with a 3 x 3 convolution before the affine head.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .layers import Affine, BatchNorm, Conv, Module, fan_in_uniform, zeros
from .rng import SrpRng
from .srp import Mode, SrpConfig, srp_pool
from .tensor import ShapeError, Tensor

BRANCH_RESIDUAL = 0
BRANCH_IDENTITY = 1


class AttentionKind(str, enum.Enum):
    NONE = "none"
    ONE = "one"
    DOUBLE = "double"


@dataclass
class ForwardContext:
    """Per-call state threaded through the network.

    ``taps``, when not None, collects named intermediate tensors (conv
    outputs, branch activations, descriptors) for analysis.
    """

    mode: Mode = Mode.EVAL
    srp: SrpConfig = field(default_factory=SrpConfig.off)
    rng: Optional[SrpRng] = None
    num_blocks: int = 1
    taps: Optional[dict] = None

    @property
    def training(self) -> bool:
        return self.mode is Mode.TRAIN

    def tap(self, name: str, t: Tensor) -> Tensor:
        if self.taps is not None:
            self.taps[name] = t
        return t


class OneBranchParams(Module):
    def __init__(self, gen, channels: int, reduction: int = 16, dtype=np.float32):
        hidden = max(-(-channels // reduction), 1)
        self.w1 = fan_in_uniform(gen, (channels, hidden), channels, dtype)
        self.b1 = zeros(hidden, dtype)
        self.w2 = fan_in_uniform(gen, (hidden, channels), hidden, dtype)
        self.b2 = zeros(channels, dtype)
        self.channels = channels


class DoubleBranchParams(Module):
    def __init__(self, gen, channels: int, fold_channels: int = 4, dtype=np.float32):
        self.fold = fan_in_uniform(gen, (fold_channels, 1, 3, 3), 9, dtype)
        self.head_w = fan_in_uniform(gen, (fold_channels * 2 * channels, channels), fold_channels * 2 * channels, dtype)
        self.head_b = zeros(channels, dtype)
        self.channels = channels


def one_branch_gate(z: Tensor, params: OneBranchParams) -> Tensor:
    hidden = T.relu(T.affine(z, params.w1, params.b1))
    return T.sigmoid(T.affine(hidden, params.w2, params.b2))


def double_branch_gate(z_id: Tensor, z_res: Tensor, params: DoubleBranchParams) -> Tensor:
    n, c = z_res.shape
    grid = T.reshape(T.stack([z_id, z_res], axis=1), (n, 1, 2, c))
    mixed = T.conv2d(grid, params.fold, stride=1, pad=1)
    flat = T.reshape(mixed, (n, -1))
    return T.sigmoid(T.affine(flat, params.head_w, params.head_b))


def one_branch_forward(u_res: Tensor, params: OneBranchParams, cfg: SrpConfig, block_index: int,
                       mode: Mode, rng: Optional[SrpRng], num_blocks: int = 1) -> Tensor:
    """Recalibrate ``u_res`` by a gate computed from its own descriptor."""
    if u_res.shape[1] != params.channels:
        raise ShapeError(f"attention block built for {params.channels} channels, got {u_res.shape[1]}")
    z = srp_pool(u_res, cfg, block_index, mode, rng, num_blocks=num_blocks, branch=BRANCH_RESIDUAL)
    return T.mul_channelwise(u_res, one_branch_gate(z, params))


def double_branch_forward(u_id: Tensor, u_res: Tensor, params: DoubleBranchParams, cfg: SrpConfig,
                          block_index: int, mode: Mode, rng: Optional[SrpRng], num_blocks: int = 1) -> Tensor:
    """Recalibrate ``u_res`` by a gate computed from both branch descriptors."""
    if u_id.shape != u_res.shape:
        raise ShapeError(f"identity branch {u_id.shape} and residual branch {u_res.shape} differ")
    if u_res.shape[1] != params.channels:
        raise ShapeError(f"attention block built for {params.channels} channels, got {u_res.shape[1]}")
    z_id = srp_pool(u_id, cfg, block_index, mode, rng, num_blocks=num_blocks, branch=BRANCH_IDENTITY)
    z_res = srp_pool(u_res, cfg, block_index, mode, rng, num_blocks=num_blocks, branch=BRANCH_RESIDUAL)
    return T.mul_channelwise(u_res, double_branch_gate(z_id, z_res, params))


class ResidualBlock(Module):
    """Basic two-conv residual block with optional channel attention.

    The shortcut is the identity when shapes match, else a strided 1 x 1
    convolution with batch norm.
    """

    def __init__(self, gen, c_in: int, c_out: int, stride: int, kind: AttentionKind, block_index: int,
                 reduction: int = 16, fold_channels: int = 4, dtype=np.float32, name: str = ""):
        self.conv1 = Conv(gen, c_in, c_out, 3, stride, dtype)
        self.bn1 = BatchNorm(c_out, dtype)
        self.conv2 = Conv(gen, c_out, c_out, 3, 1, dtype)
        self.bn2 = BatchNorm(c_out, dtype)
        self.project = None
        if stride != 1 or c_in != c_out:
            self.project = Conv(gen, c_in, c_out, 1, stride, dtype)
            self.project_bn = BatchNorm(c_out, dtype)
        self.kind = AttentionKind(kind)
        if self.kind is AttentionKind.ONE:
            self.attn = OneBranchParams(gen, c_out, reduction, dtype)
        elif self.kind is AttentionKind.DOUBLE:
            self.attn = DoubleBranchParams(gen, c_out, fold_channels, dtype)
        self.block_index = block_index
        self.name = name

    def __call__(self, x: Tensor, ctx: ForwardContext) -> Tensor:
        return residual_block_forward(x, self, ctx)


def residual_block_forward(x: Tensor, block: ResidualBlock, ctx: ForwardContext) -> Tensor:
    p = block.name + "."
    train = ctx.training
    h = ctx.tap(p + "conv1", block.conv1(x))
    h = T.relu(block.bn1(h, train))
    h = ctx.tap(p + "conv2", block.conv2(h))
    u_res = ctx.tap(p + "residual", block.bn2(h, train))
    if block.project is None:
        u_id = x
    else:
        u_id = block.project_bn(ctx.tap(p + "shortcut", block.project(x)), train)
    ctx.tap(p + "identity", u_id)

    if block.kind is AttentionKind.ONE:
        gated = one_branch_forward(u_res, block.attn, ctx.srp, block.block_index, ctx.mode, ctx.rng, ctx.num_blocks)
    elif block.kind is AttentionKind.DOUBLE:
        gated = double_branch_forward(u_id, u_res, block.attn, ctx.srp, block.block_index, ctx.mode, ctx.rng,
                                      ctx.num_blocks)
    else:
        gated = u_res
    return ctx.tap(p + "out", T.relu(T.add(u_id, gated)))
