"""
Stochastic region pooling on a single feature map
=================================================

Global average pooling squeezes a whole map into one number per channel.
Region pooling averages over a random union of squares instead, and falls
back to the plain average at test time.
"""

import numpy as np

from srpnet import Mode, SrpConfig, SrpRng, Tensor, region_dims, srp_pool
from srpnet.srp import build_union_mask, sample_positions, scheduled_lambda

# A batch of two samples with three channels on an 8 x 8 grid.
u = Tensor(np.random.default_rng(0).standard_normal((2, 3, 8, 8)))

# At scale 0.6 each square is round(0.6 * 8) = 5 cells on a side.
print("square size at lambda=0.6:", region_dims(8, 8, 0.6))

# Five squares drawn uniformly; their union is the pooled region.
gen = np.random.default_rng(1)
pos = sample_positions(gen, 8, 8, 5, 5, 5)
mask = build_union_mask(pos, 5, 5, 8, 8)
print("top-left corners:", pos.tolist())
print(mask.membership.astype(int))
print("cells covered:", mask.cardinality, "of 64")

# Training-mode pooling draws one such mask per sample, shared by channels.
ms = SrpConfig.multi_square()  # lambda 0.6, five squares
z_train = srp_pool(u, ms, block_index=0, mode=Mode.TRAIN, rng=SrpRng(seed=0, step=0))
z_eval = srp_pool(u, ms, block_index=0, mode=Mode.EVAL, rng=None)
print("train descriptors:\n", z_train.data.round(3))
print("eval descriptors (plain average):\n", z_eval.data.round(3))
print("eval equals mean:", np.array_equal(z_eval.data, u.data.sum(axis=(2, 3)) / 64))

# A new step gives a new mask; the same (seed, step) gives the same one.
again = srp_pool(u, ms, 0, Mode.TRAIN, SrpRng(0, 0)).data
later = srp_pool(u, ms, 0, Mode.TRAIN, SrpRng(0, 1)).data
print("same step reproduces:", np.array_equal(again, z_train.data), "| next step differs:",
      not np.array_equal(later, z_train.data))

# Deeper blocks pool over smaller regions: the scale falls linearly from 1
# at the first attention block to the target at the last.
print("schedule over 6 blocks:", [round(scheduled_lambda(b, 6, 0.6), 3) for b in range(6)])
