"""Flat ``key = value`` run configuration.

Recognized keys (dotted)::

    model.depth           6n+2 residual depth (default 14)
    model.widths          three stage widths, comma separated (16,32,64)
    model.classes         number of classes (10)
    attention.kind        none | one | double (one)
    attention.reduction   excitation reduction ratio (16)
    attention.fold_channels  filters of the double-branch 3x3 fold conv (4)
    srp.mode              off | ss | ms (off)
    srp.lambda            target scale ratio (0.8 for ss, 0.6 for ms)
    srp.regions           squares per map in ms mode (5)
    srp.schedule          linear | fixed (linear)
    train.epochs, train.batch_size, train.lr, train.milestones, train.decay,
    train.momentum, train.weight_decay, train.seed
    augment.translate, augment.mirror, augment.mixup, augment.mixup_alpha
    data.train_size, data.test_size
    run.epoch             written into checkpoints; ignored when training

Blank lines and ``#`` comments are skipped.  Unknown keys are errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .attention import AttentionKind
from .net import NetworkConfig
from .srp import (MS_DEFAULT_LAMBDA, MS_DEFAULT_REGIONS, SS_DEFAULT_LAMBDA, ConfigError, Schedule, SrpConfig,
                  SrpMode)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 15
    batch_size: int = 128
    lr: float = 0.1
    milestones: tuple[int, ...] = (10,)
    decay: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    seed: int = 0
    translate: bool = True
    mirror: bool = True
    mixup: bool = False
    mixup_alpha: float = 1.0
    train_size: Optional[int] = None
    test_size: Optional[int] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ConfigError(f"milestones must be strictly increasing, got {self.milestones}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.mixup_alpha <= 0:
            raise ConfigError("mixup alpha must be positive")


@dataclass(frozen=True)
class RunConfig:
    net: NetworkConfig = field(default_factory=NetworkConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    epoch: int = 0


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    s = s.strip()
    return tuple(int(p) for p in s.split(",") if p.strip()) if s else ()


def _opt_int(s: str) -> Optional[int]:
    return None if s.strip().lower() in ("", "none", "all") else int(s)


_TRAIN_KEYS = {
    "train.epochs": ("epochs", int),
    "train.batch_size": ("batch_size", int),
    "train.lr": ("lr", float),
    "train.milestones": ("milestones", _ints),
    "train.decay": ("decay", float),
    "train.momentum": ("momentum", float),
    "train.weight_decay": ("weight_decay", float),
    "train.seed": ("seed", int),
    "augment.translate": ("translate", _bool),
    "augment.mirror": ("mirror", _bool),
    "augment.mixup": ("mixup", _bool),
    "augment.mixup_alpha": ("mixup_alpha", float),
    "data.train_size": ("train_size", _opt_int),
    "data.test_size": ("test_size", _opt_int),
}

_NET_KEYS = {
    "model.depth": ("depth", int),
    "model.widths": ("widths", _ints),
    "model.classes": ("classes", int),
    "attention.kind": ("attention", AttentionKind),
    "attention.reduction": ("reduction", int),
    "attention.fold_channels": ("fold_channels", int),
}

_SRP_KEYS = ("srp.mode", "srp.lambda", "srp.regions", "srp.schedule")


def parse_pairs(text: str, source: str = "<config>") -> dict[str, str]:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        known = key in _TRAIN_KEYS or key in _NET_KEYS or key in _SRP_KEYS or key == "run.epoch"
        if not known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        pairs[key] = value
    return pairs


def srp_from_pairs(pairs: dict[str, str]) -> SrpConfig:
    """Mode-dependent defaults: single square 0.8, multi square 0.6 with 5 squares."""
    mode = SrpMode(pairs.get("srp.mode", "off").strip().lower())
    schedule = Schedule(pairs.get("srp.schedule", "linear").strip().lower())
    if mode is SrpMode.SS:
        lam, regions = SS_DEFAULT_LAMBDA, 1
    elif mode is SrpMode.MS:
        lam, regions = MS_DEFAULT_LAMBDA, MS_DEFAULT_REGIONS
    else:
        lam, regions = 1.0, 1
    lam = float(pairs.get("srp.lambda", lam))
    regions = int(pairs.get("srp.regions", regions))
    return SrpConfig(mode, lam, regions, schedule)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    pairs = parse_pairs(text, source)
    try:
        net_kw = {attr: conv(pairs[k]) for k, (attr, conv) in _NET_KEYS.items() if k in pairs}
        train_kw = {attr: conv(pairs[k]) for k, (attr, conv) in _TRAIN_KEYS.items() if k in pairs}
        srp = srp_from_pairs(pairs)
        epoch = int(pairs.get("run.epoch", 0))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return RunConfig(NetworkConfig(srp=srp, **net_kw), TrainConfig(**train_kw), epoch)


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        return parse_config(fh.read(), path)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if v is None:
        return "none"
    if hasattr(v, "value"):
        return v.value
    return repr(v) if isinstance(v, float) else str(v)


def format_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(format_config(c)) == c``."""
    net, tr = cfg.net, cfg.train
    lines = [f"{k} = {_fmt(getattr(net, attr))}" for k, (attr, _) in _NET_KEYS.items()]
    lines += [
        f"srp.mode = {net.srp.mode.value}",
        f"srp.lambda = {net.srp.lambda_target!r}",
        f"srp.regions = {net.srp.regions}",
        f"srp.schedule = {net.srp.schedule.value}",
    ]
    lines += [f"{k} = {_fmt(getattr(tr, attr))}" for k, (attr, _) in _TRAIN_KEYS.items()]
    lines.append(f"run.epoch = {cfg.epoch}")
    return "\n".join(lines) + "\n"


def with_seed(cfg: RunConfig, seed: int) -> RunConfig:
    return replace(cfg, train=replace(cfg.train, seed=seed))
