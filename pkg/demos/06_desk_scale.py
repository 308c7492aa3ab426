"""
The desk-scale comparison
=========================

Depth-14 networks with one- and double-branch attention, each with plain
pooling, one square and five squares: 5000 training and 1000 test images,
15 epochs, batch 128, learning rate 0.1 divided by 10 after epoch 10.

    python demos/06_desk_scale.py --data /path/to/cifar-10-batches-bin
    python demos/06_desk_scale.py --synthetic --variants double/ms

Prints one line per variant and writes each run's metrics CSV.
"""

import argparse
import os
import tempfile
import time

from srpnet import AttentionKind, NetworkConfig, SrpConfig
from srpnet.config import RunConfig, TrainConfig
from srpnet.data import load_cifar, synthetic_cifar
from srpnet.train import metrics_csv, train

SRP = {"off": SrpConfig.off(), "ss": SrpConfig.single_square(), "ms": SrpConfig.multi_square()}

parser = argparse.ArgumentParser()
parser.add_argument("--data")
parser.add_argument("--synthetic", action="store_true", help="use a generated stand-in dataset")
parser.add_argument("--variants", nargs="*", default=[f"{a}/{s}" for a in ("one", "double") for s in SRP])
parser.add_argument("--epochs", type=int, default=15)
parser.add_argument("--seed", type=int, default=0)
parser.add_argument("--out", default="desk_runs")
args = parser.parse_args()

if args.synthetic:
    root = os.path.join(tempfile.mkdtemp(), "synthetic")
    synthetic_cifar(root, n_train=5000, n_test=1000, seed=args.seed)
elif args.data:
    root = args.data
else:
    parser.error("give --data DIR or --synthetic")
data = load_cifar(root, subset_size=5000, test_size=1000)
os.makedirs(args.out, exist_ok=True)

for name in args.variants:
    kind, mode = name.split("/")
    cfg = RunConfig(NetworkConfig(depth=14, attention=AttentionKind(kind), srp=SRP[mode]),
                    TrainConfig(epochs=args.epochs, batch_size=128, lr=0.1, milestones=(10,), seed=args.seed))
    start = time.perf_counter()
    result = train(cfg, data.train, data.test, data.mean, data.std,
                   on_epoch=lambda m: print(f"  {name} epoch {m.epoch}: loss {m.train_loss:.3f} "
                                            f"acc {m.test_acc:.3f} ({m.seconds:.0f}s)", flush=True))
    minutes = (time.perf_counter() - start) / 60
    with open(os.path.join(args.out, name.replace("/", "_") + ".csv"), "w") as fh:
        fh.write(metrics_csv(result.metrics))
    print(f"{name}: top-1 {result.metrics[-1].test_acc:.4f} after {len(result.metrics)} epochs, "
          f"{minutes:.1f} min", flush=True)
