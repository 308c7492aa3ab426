"""Stochastic region pooling for channel-attention networks, on a small numpy autodiff core."""

from .attention import AttentionKind, double_branch_forward, one_branch_forward, residual_block_forward
from .net import NetworkConfig, ResNet
from .rng import SrpRng
from .srp import (Mode, RegionMask, Schedule, SrpConfig, SrpMode, area_ratio, build_union_mask, region_dims,
                  sample_positions, scheduled_lambda, srp_pool)
from .tensor import Tensor, backward

__version__ = "0.1.0"
