"""
Channel attention with one and two branches
===========================================

The one-branch block gates the residual activation from its own pooled
descriptor.  The double-branch block also pools the identity branch and
mixes both descriptors with a small 3 x 3 convolution.  Both are checked
against central differences here.
"""

import numpy as np

from srpnet import Mode, SrpConfig, SrpRng, Tensor
from srpnet.attention import DoubleBranchParams, OneBranchParams, double_branch_forward, one_branch_forward
from srpnet.gradcheck import grad_check

gen = np.random.default_rng(0)
u_res = Tensor(gen.standard_normal((2, 8, 4, 4)), requires_grad=True)
u_id = Tensor(gen.standard_normal((2, 8, 4, 4)), requires_grad=True)
cfg = SrpConfig.multi_square()

one = OneBranchParams(gen, channels=8, reduction=4, dtype=np.float64)
out = one_branch_forward(u_res, one, cfg, 0, Mode.TRAIN, SrpRng(0))
print("one-branch: params", one.num_parameters(), "| output", out.shape)

two = DoubleBranchParams(gen, channels=8, fold_channels=4, dtype=np.float64)
out = double_branch_forward(u_id, u_res, two, cfg, 0, Mode.TRAIN, SrpRng(0))
print("double-branch: params", two.num_parameters(), "| output", out.shape)

# Gates lie in (0, 1), so each residual channel is scaled down, never flipped.
ratio = out.data / u_res.data
print("per-channel scale, sample 0:", ratio[0, :, 0, 0].round(3))

# Gradients through pooling, gate and product agree with finite differences.
for name, fn, params in [
    ("one-branch", lambda *a: one_branch_forward(u_res, one, cfg, 0, Mode.TRAIN, SrpRng(0)), one.parameters()),
    ("double-branch", lambda *a: double_branch_forward(u_id, u_res, two, cfg, 0, Mode.TRAIN, SrpRng(0)),
     two.parameters()),
]:
    report = grad_check(fn, [u_id, u_res, *params])
    print(f"{name}: max relative error {report.max_rel_err:.2e} (passed: {report.passed})")
