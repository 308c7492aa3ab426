"""
Training a small attention network end to end
=============================================

Writes a learnable stand-in dataset in the CIFAR binary layout, trains a
depth-8 double-branch network with multi-square pooling for a few epochs,
and saves a checkpoint plus metrics.  Point ``--data`` at a real CIFAR-10
directory to train on it instead.
"""

import argparse
import os
import tempfile

from srpnet import AttentionKind, NetworkConfig, SrpConfig
from srpnet.config import RunConfig, TrainConfig, format_config
from srpnet.data import load_cifar, synthetic_cifar
from srpnet.train import evaluate, metrics_csv, train

parser = argparse.ArgumentParser()
parser.add_argument("--data")
parser.add_argument("--out", default="run_synthetic")
parser.add_argument("--epochs", type=int, default=4)
args = parser.parse_args()

data_dir = args.data or os.path.join(tempfile.mkdtemp(), "synthetic")
if args.data is None:
    synthetic_cifar(data_dir, n_train=1000, n_test=200, seed=0)
data = load_cifar(data_dir, subset_size=1000, test_size=200)
print("train", data.train.images.shape, "test", data.test.images.shape)

cfg = RunConfig(
    NetworkConfig(depth=8, attention=AttentionKind.DOUBLE, srp=SrpConfig.multi_square()),
    TrainConfig(epochs=args.epochs, batch_size=64, lr=0.05, milestones=(args.epochs - 1,), seed=0),
)
print(format_config(cfg))


def report(m):
    print(f"epoch {m.epoch}: loss {m.train_loss:.3f}, test accuracy {m.test_acc:.3f} ({m.seconds:.0f}s)")


result = train(cfg, data.train, data.test, data.mean, data.std, on_epoch=report)

os.makedirs(args.out, exist_ok=True)
result.checkpoint.save(os.path.join(args.out, "checkpoint.srpc"))
with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
    fh.write(metrics_csv(result.metrics))
print("reloaded checkpoint accuracy:", evaluate(result.checkpoint, data.test))
print("saved to", args.out)
