"""Small CIFAR-style residual classifier with pluggable channel attention."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import tensor as T
from .attention import AttentionKind, ForwardContext, ResidualBlock
from .layers import Affine, BatchNorm, Conv, Module
from .rng import TAG_INIT, SrpRng, stream
from .srp import ConfigError, Mode, SrpConfig
from .tensor import Tensor


@dataclass(frozen=True)
class NetworkConfig:
    depth: int = 14
    widths: tuple[int, ...] = (16, 32, 64)
    attention: AttentionKind = AttentionKind.ONE
    srp: SrpConfig = field(default_factory=SrpConfig.off)
    classes: int = 10
    reduction: int = 16
    fold_channels: int = 4
    in_channels: int = 3
    input_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "attention", AttentionKind(self.attention))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) != 3:
            raise ConfigError(f"need three stage widths, got {self.widths}")
        if self.depth < 8 or (self.depth - 2) % 6:
            raise ConfigError(f"depth must be 6n+2 with n >= 1, got {self.depth}")
        if self.classes < 2:
            raise ConfigError("need at least two classes")

    @property
    def blocks_per_stage(self) -> int:
        return (self.depth - 2) // 6

    @property
    def num_blocks(self) -> int:
        return 3 * self.blocks_per_stage

    def block_names(self) -> list[str]:
        n = self.blocks_per_stage
        return [f"stage{s + 1}.block{b}" for s in range(3) for b in range(n)]

    def feature_sizes(self) -> list[tuple[int, int]]:
        """Spatial size of each residual block's output."""
        sizes = []
        for s in range(3):
            side = self.input_size // (2 ** s)
            sizes += [(side, side)] * self.blocks_per_stage
        return sizes


class ResNet(Module):
    """Stem conv, three stages of residual blocks, global average pool, linear head."""

    def __init__(self, cfg: NetworkConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        gen = stream(seed, TAG_INIT)
        w0, w1, w2 = cfg.widths
        self.stem = Conv(gen, cfg.in_channels, w0, 3, 1, dtype)
        self.stem_bn = BatchNorm(w0, dtype)
        self.blocks: list[ResidualBlock] = []
        names = cfg.block_names()
        c_in = w0
        for s, width in enumerate(cfg.widths):
            for b in range(cfg.blocks_per_stage):
                stride = 2 if (s > 0 and b == 0) else 1
                idx = len(self.blocks)
                self.blocks.append(ResidualBlock(gen, c_in, width, stride, cfg.attention, idx,
                                                 cfg.reduction, cfg.fold_channels, dtype, names[idx]))
                c_in = width
        self.head = Affine(gen, w2, cfg.classes, dtype)

    def layer_names(self) -> list[str]:
        names = ["stem"]
        for blk in self.blocks:
            names += [blk.name + ".conv1", blk.name + ".conv2"]
            if blk.project is not None:
                names.append(blk.name + ".shortcut")
            names += [blk.name + ".residual", blk.name + ".identity", blk.name + ".out"]
        return names

    def last_conv_name(self) -> str:
        """Tap name of the final convolution on the main path."""
        return self.blocks[-1].name + ".conv2"

    def forward(self, x, mode: Mode = Mode.EVAL, rng: Optional[SrpRng] = None,
                taps: Optional[dict] = None, srp: Optional[SrpConfig] = None) -> Tensor:
        """Logits for a batch ``x`` of shape [N, C, H, W].

        ``srp`` overrides the configured pooling for this call only.
        """
        ctx = ForwardContext(Mode(mode), srp or self.cfg.srp, rng, self.cfg.num_blocks, taps)
        h = ctx.tap("stem", self.stem(T.as_tensor(x)))
        h = T.relu(self.stem_bn(h, ctx.training))
        for blk in self.blocks:
            h = blk(h, ctx)
        return self.head(T.spatial_mean(h))

    __call__ = forward
