"""
Looking inside a trained network
================================

Loads the checkpoint written by ``04_train_synthetic.py`` and produces a
Grad-CAM heatmap, a feature-map grid for each branch of one block, and the
channel-descriptor similarity at every block.
"""

import os
import sys

from srpnet.analysis import (descriptor_similarity, dump_feature_maps, gradcam, heat_rgb, save_ppm,
                             similarity_csv, to_gray_rgb)
from srpnet.checkpoint import Checkpoint
from srpnet.data import TEST_FILE, normalize, read_cifar_batch
from srpnet.train import model_from_checkpoint

run = sys.argv[1] if len(sys.argv) > 1 else "run_synthetic"
data_dir = sys.argv[2] if len(sys.argv) > 2 else None
ckpt = Checkpoint.load(os.path.join(run, "checkpoint.srpc"))
model = model_from_checkpoint(ckpt)
print("layers:", model.layer_names()[:6], "...")

if data_dir:
    raw, labels = read_cifar_batch(os.path.join(data_dir, TEST_FILE), 64)
    images = normalize(raw.astype("float32") / 255, ckpt.tensors["data.mean"], ckpt.tensors["data.std"])
else:
    import numpy as np
    images = np.random.default_rng(0).standard_normal((64, 3, 32, 32)).astype("float32")
image = images[0]

# Grad-CAM for the predicted class at the last block's output.
cls = int(model(image[None]).data.argmax())
heat = gradcam(model, image, cls)
save_ppm(os.path.join(run, "gradcam.ppm"), heat_rgb(heat))
print(f"gradcam for class {cls}: shape {heat.shape}, range [{heat.min():.2f}, {heat.max():.2f}]")

# First 16 channels of each branch of the last block, min-max scaled.
last = len(model.blocks) - 1
for branch in ("identity", "residual"):
    grid = dump_feature_maps(model, image, last, branch, count=16)
    save_ppm(os.path.join(run, f"features_{branch}.ppm"), to_gray_rgb(grid))
    print(branch, "grid", grid.shape)

# How alike the channel descriptors are across a probe batch.
rows = [(run, model.cfg.attention.value, model.cfg.srp.mode.value, b, descriptor_similarity(model, images, b))
        for b in range(len(model.blocks))]
print(similarity_csv(rows))
