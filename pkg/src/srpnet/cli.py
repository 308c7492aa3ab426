"""Command-line entry point: ``srpnet <subcommand> ...``.

Exit codes: 0 success, 2 config/usage error, 3 data or checkpoint error,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np

from . import analysis
from .checkpoint import Checkpoint, CheckpointError
from .config import load_config, with_seed
from .data import TEST_FILE, DataError, ImageSet, load_cifar, normalize, read_cifar_batch
from .srp import ConfigError, Schedule, SrpConfig
from .train import DivergenceError, evaluate, metrics_csv, model_from_checkpoint, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("srpnet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _norm_stats(ckpt: Checkpoint):
    if "data.mean" not in ckpt.tensors:
        raise CheckpointError("checkpoint has no normalization statistics (data.mean/data.std)")
    return ckpt.tensors["data.mean"], ckpt.tensors["data.std"]


def load_input_image(path: str, ckpt: Checkpoint, index: int = 0) -> np.ndarray:
    """Normalized [3, 32, 32] image from a P6 PPM or a CIFAR batch record."""
    mean, std = _norm_stats(ckpt)
    if path.endswith(".bin"):
        imgs, _ = read_cifar_batch(path)
        if not 0 <= index < len(imgs):
            raise DataError(f"{path}: record {index} out of range ({len(imgs)} records)")
        raw = imgs[index]
    else:
        try:
            raw = analysis.read_ppm(path).transpose(2, 0, 1)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read image {path}: {exc}") from exc
    return normalize(raw.astype(np.float32)[None] / 255, mean, std)[0]


def cmd_train(args) -> int:
    if not os.path.isfile(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    data = load_cifar(args.data, cfg.train.train_size, cfg.train.test_size)
    os.makedirs(args.out, exist_ok=True)
    result = train(cfg, data.train, data.test, data.mean, data.std)
    result.checkpoint.save(os.path.join(args.out, "checkpoint.srpc"))
    with open(os.path.join(args.out, "metrics.csv"), "w") as fh:
        fh.write(metrics_csv(result.metrics, with_seconds=not args.no_timing))
    last = result.metrics[-1] if result.metrics else None
    if last is not None:
        print(f"epoch={last.epoch} train_loss={last.train_loss:.4f} test_acc={last.test_acc:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    mean, std = _norm_stats(ckpt)
    imgs, labels = read_cifar_batch(os.path.join(args.data, TEST_FILE), args.test_size)
    test = ImageSet(normalize(imgs.astype(np.float32) / 255, mean, std), labels)
    print(f"top1={evaluate(model_from_checkpoint(ckpt), test)}")
    return EXIT_OK


def cmd_gradcam(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    image = load_input_image(args.input, ckpt, args.index)
    try:
        heat = analysis.gradcam(model, image, args.class_index, args.layer)
    except analysis.UnknownLayerError as exc:
        raise ConfigError(str(exc)) from exc
    analysis.save_ppm(args.out, analysis.heat_rgb(heat))
    return EXIT_OK


def cmd_dump_features(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    if not 0 <= args.block < len(model.blocks):
        raise ConfigError(f"block {args.block} out of range (network has {len(model.blocks)})")
    image = load_input_image(args.input, ckpt, args.index)
    grid = analysis.dump_feature_maps(model, image, args.block, args.branch, args.count, args.cols)
    analysis.save_ppm(args.out, analysis.to_gray_rgb(grid))
    return EXIT_OK


def cmd_area_ratio(args) -> int:
    schedule = Schedule(args.schedule)
    if args.m == 1:
        srp = SrpConfig.single_square(args.lam, schedule)
    else:
        srp = SrpConfig.multi_square(args.lam, args.m, schedule)
    rows = analysis.area_ratio_curve([(args.height, args.width)] * args.blocks, srp, args.trials, args.seed)
    text = analysis.area_ratio_csv(rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return EXIT_OK


def cmd_similarity(args) -> int:
    rows = []
    for path in args.checkpoint:
        ckpt = Checkpoint.load(path)
        model = model_from_checkpoint(ckpt)
        mean, std = _norm_stats(ckpt)
        imgs, _ = read_cifar_batch(os.path.join(args.data, TEST_FILE), args.probe)
        probe = normalize(imgs.astype(np.float32) / 255, mean, std)
        cfg = model.cfg
        for b in range(len(model.blocks)):
            rows.append((path, cfg.attention.value, cfg.srp.mode.value, b,
                         analysis.descriptor_similarity(model, probe, b)))
    text = analysis.similarity_csv(rows)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="srpnet", description="Stochastic region pooling for channel attention networks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a network")
    t.add_argument("--config", required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-timing", action="store_true", help="leave the seconds column blank")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="top-1 accuracy on the test batch")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--test-size", type=int)
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcam", help="Grad-CAM heatmap as PPM")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--input", required=True, help="P6 PPM image or CIFAR .bin batch")
    g.add_argument("--index", type=int, default=0, help="record index for .bin input")
    g.add_argument("--class", dest="class_index", type=int, required=True)
    g.add_argument("--layer", default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gradcam)

    d = sub.add_parser("dump-features", help="feature-map grid as PPM")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--input", required=True)
    d.add_argument("--index", type=int, default=0)
    d.add_argument("--block", type=int, required=True)
    d.add_argument("--branch", choices=("identity", "residual"), default="residual")
    d.add_argument("--count", type=int, default=20)
    d.add_argument("--cols", type=int)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_dump_features)

    a = sub.add_parser("area-ratio", help="region area-ratio curve as CSV")
    a.add_argument("--height", type=int, required=True)
    a.add_argument("--width", type=int, required=True)
    a.add_argument("--lambda", dest="lam", type=float, required=True)
    a.add_argument("--m", type=int, default=1)
    a.add_argument("--trials", type=int, default=10000)
    a.add_argument("--blocks", type=int, default=1)
    a.add_argument("--schedule", choices=("linear", "fixed"), default="linear")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="-")
    a.set_defaults(func=cmd_area_ratio)

    s = sub.add_parser("similarity", help="descriptor-similarity diagnostic as CSV")
    s.add_argument("--checkpoint", required=True, nargs="+")
    s.add_argument("--data", required=True)
    s.add_argument("--probe", type=int, default=256)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_similarity)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                            format="%(levelname)s %(message)s")
        return args.func(args)
    except ConfigError as exc:
        print(f"srpnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"srpnet: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"srpnet: error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
