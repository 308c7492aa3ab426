"""Training loop, evaluation, and conversion between models and checkpoints."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint, CheckpointError
from .config import RunConfig, format_config, parse_config
from .data import ImageSet, augment_batch, mixup
from .net import ResNet
from .optim import NesterovSGD, step_lr
from .rng import TAG_AUGMENT, TAG_MIXUP, TAG_SHUFFLE, SrpRng, stream
from .srp import Mode

logger = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "train_loss", "test_acc", "seconds")


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, detail: str = ""):
        super().__init__(f"training diverged at step {step}" + (f": {detail}" if detail else ""))
        self.step = step


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_acc: float
    seconds: float


@dataclass
class TrainResult:
    model: ResNet
    checkpoint: Checkpoint
    metrics: list[EpochMetrics] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)


def mixup_loss(logits: T.Tensor, labels, partner_labels, lam: float) -> T.Tensor:
    return T.add(T.scale(T.softmax_xent(logits, labels), lam),
                 T.scale(T.softmax_xent(logits, partner_labels), 1 - lam))


def predict_logits(model: ResNet, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Eval-mode logits; region pooling is inactive here by construction."""
    out = [model(images[i:i + batch_size], Mode.EVAL).data for i in range(0, len(images), batch_size)]
    return np.concatenate(out)


def evaluate(model: Union[ResNet, Checkpoint], data: ImageSet, batch_size: int = 256) -> float:
    """Top-1 accuracy in eval mode."""
    if isinstance(model, Checkpoint):
        model = model_from_checkpoint(model)
    if len(data) == 0:
        return float("nan")
    pred = predict_logits(model, data.images, batch_size).argmax(axis=1)
    return float((pred == data.labels).mean())


def model_to_checkpoint(model: ResNet, cfg: RunConfig, mean=None, std=None) -> Checkpoint:
    tensors = {name: p.data for name, p in model.named_parameters()}
    tensors.update({name: buf for name, buf in model.named_buffers()})
    if mean is not None:
        tensors["data.mean"] = np.asarray(mean, dtype=np.float32)
        tensors["data.std"] = np.asarray(std, dtype=np.float32)
    return Checkpoint({k: np.array(v, copy=True) for k, v in tensors.items()}, cfg.train.seed, format_config(cfg))


def model_from_checkpoint(ckpt: Checkpoint) -> ResNet:
    cfg = parse_config(ckpt.config_text, "<checkpoint>")
    model = ResNet(cfg.net, seed=cfg.train.seed)
    targets = {name: p.data for name, p in model.named_parameters()}
    targets.update(dict(model.named_buffers()))
    missing = set(targets) - set(ckpt.tensors)
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors: {sorted(missing)[:5]}")
    for name, dst in targets.items():
        src = ckpt.tensors[name]
        if src.shape != dst.shape:
            raise CheckpointError(f"{name}: shape {src.shape} != model shape {dst.shape}")
        dst[...] = src
    return model


def run_config_of(ckpt: Checkpoint) -> RunConfig:
    return parse_config(ckpt.config_text, "<checkpoint>")


def train(
    cfg: RunConfig,
    train_set: ImageSet,
    test_set: Optional[ImageSet] = None,
    mean=None,
    std=None,
    on_epoch: Optional[Callable[[EpochMetrics], Optional[bool]]] = None,
) -> TrainResult:
    """Train from scratch; everything random is keyed by ``cfg.train.seed``.

    ``on_epoch`` sees each epoch's metrics and may return True to stop early.

    The returned checkpoint snapshots the final parameters, running
    statistics, normalization constants (when given) and config.
    """
    tc = cfg.train
    seed = tc.seed
    model = ResNet(cfg.net, seed=seed)
    opt = NesterovSGD(model.parameters(), tc.lr, tc.momentum, tc.weight_decay)
    n = len(train_set)
    result = TrainResult(model, Checkpoint())
    step = 0
    for epoch in range(tc.epochs):
        start = time.perf_counter()
        opt.lr = step_lr(tc.lr, epoch, tc.milestones, tc.decay)
        order = stream(seed, TAG_SHUFFLE, epoch).permutation(n)
        total, seen = 0.0, 0
        for b, lo in enumerate(range(0, n, tc.batch_size)):
            idx = order[lo:lo + tc.batch_size]
            x = augment_batch(train_set.images[idx], stream(seed, TAG_AUGMENT, epoch, b), tc.translate, tc.mirror)
            y = train_set.labels[idx]
            try:
                if tc.mixup:
                    x, ya, yb, lam = mixup(x, y, stream(seed, TAG_MIXUP, step), tc.mixup_alpha)
                    logits = model(x, Mode.TRAIN, SrpRng(seed, step))
                    loss = mixup_loss(logits, ya, yb, lam)
                else:
                    loss = T.softmax_xent(model(x, Mode.TRAIN, SrpRng(seed, step)), y)
                T.backward(loss)
            except T.NonFiniteError as exc:
                raise DivergenceError(step, str(exc)) from exc
            val = loss.item()
            if not np.isfinite(val):
                raise DivergenceError(step, "loss is not finite")
            opt.step()
            result.losses.append(val)
            total += val * len(idx)
            seen += len(idx)
            step += 1
        acc = evaluate(model, test_set) if test_set is not None else float("nan")
        m = EpochMetrics(epoch, total / max(seen, 1), acc, time.perf_counter() - start)
        result.metrics.append(m)
        logger.info("epoch %d loss %.4f acc %.4f (%.1fs)", m.epoch, m.train_loss, m.test_acc, m.seconds)
        if on_epoch is not None and on_epoch(m):
            break
    final = RunConfig(cfg.net, cfg.train, len(result.metrics))
    result.checkpoint = model_to_checkpoint(model, final, mean, std)
    return result


def metrics_csv(metrics: list[EpochMetrics], with_seconds: bool = True) -> str:
    """CSV text with header ``epoch,train_loss,test_acc,seconds``.

    ``with_seconds=False`` blanks the wall-clock column, which is the only
    field that differs between two runs with the same seed.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in metrics:
        w.writerow([m.epoch, repr(m.train_loss), repr(m.test_acc), f"{m.seconds:.3f}" if with_seconds else ""])
    return buf.getvalue()
