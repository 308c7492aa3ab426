"""CIFAR binary ingestion, augmentation and mixup."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

RECORD_BYTES = 3073
IMAGE_SHAPE = (3, 32, 32)
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILE = "test_batch.bin"
PAD = 4


class DataError(IOError):
    """Malformed or missing dataset files."""


@dataclass
class ImageSet:
    images: np.ndarray  # [N, 3, 32, 32] float32
    labels: np.ndarray  # [N] int64

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, n: int) -> "ImageSet":
        return ImageSet(self.images[:n], self.labels[:n])


@dataclass
class CifarData:
    train: ImageSet
    test: ImageSet
    mean: np.ndarray  # per channel, computed on the loaded training subset
    std: np.ndarray


def read_cifar_batch(path: str, limit: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Raw ``uint8`` images [N,3,32,32] and labels [N] from one binary batch file."""
    try:
        raw = np.fromfile(path, dtype=np.uint8)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if raw.size == 0 or raw.size % RECORD_BYTES:
        n = raw.size // RECORD_BYTES
        raise DataError(
            f"{path}: {raw.size} bytes is not a whole number of {RECORD_BYTES}-byte records "
            f"(expected {max(n, 1) * RECORD_BYTES} bytes)"
        )
    records = raw.reshape(-1, RECORD_BYTES)
    if limit is not None:
        records = records[:limit]
    return records[:, 1:].reshape((-1,) + IMAGE_SHAPE), records[:, 0].astype(np.int64)


def write_cifar_batch(path: str, images: np.ndarray, labels: np.ndarray) -> None:
    """Inverse of :func:`read_cifar_batch` for ``uint8`` images."""
    images = np.asarray(images, dtype=np.uint8).reshape(len(labels), -1)
    out = np.empty((len(labels), RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = labels
    out[:, 1:] = images
    out.tofile(path)


def _read_prefix(paths: Sequence[str], n: Optional[int]):
    imgs, labs, have = [], [], 0
    for p in paths:
        if n is not None and have >= n:
            break
        x, y = read_cifar_batch(p, None if n is None else n - have)
        imgs.append(x)
        labs.append(y)
        have += len(y)
    return np.concatenate(imgs), np.concatenate(labs)


def load_cifar(root: str, subset_size: Optional[int] = None, test_size: Optional[int] = None) -> CifarData:
    """Load CIFAR-10 binary batches from ``root``.

    The first ``subset_size`` training records (in file order) and the first
    ``test_size`` test records are kept.  Pixels are scaled to [0, 1] and
    then standardized with the per-channel mean and std of the loaded
    training images.
    """
    train_paths = [os.path.join(root, f) for f in TRAIN_FILES if os.path.exists(os.path.join(root, f))]
    test_path = os.path.join(root, TEST_FILE)
    if not train_paths:
        raise DataError(f"no training batches ({TRAIN_FILES[0]}, ...) found in {root}")
    if not os.path.exists(test_path):
        raise DataError(f"{test_path} not found")

    xtr, ytr = _read_prefix(train_paths, subset_size)
    xte, yte = _read_prefix([test_path], test_size)
    xtr = xtr.astype(np.float32) / 255
    xte = xte.astype(np.float32) / 255
    mean = xtr.mean(axis=(0, 2, 3), dtype=np.float64).astype(np.float32)
    std = xtr.std(axis=(0, 2, 3), dtype=np.float64).astype(np.float32)
    std = np.where(std > 0, std, np.float32(1))
    return CifarData(ImageSet(normalize(xtr, mean, std), ytr), ImageSet(normalize(xte, mean, std), yte), mean, std)


def normalize(images: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    return ((images - mean[:, None, None]) / std[:, None, None]).astype(np.float32)


def augment(image: np.ndarray, gen: np.random.Generator, translate: bool = True, mirror: bool = True) -> np.ndarray:
    """Random translation by zero-pad-and-crop, then a coin-flip mirror.

    Draws happen in a fixed order (row offset, column offset, flip) and only
    for enabled steps.
    """
    out = image
    if translate:
        _, h, w = image.shape
        dy, dx = gen.integers(0, 2 * PAD + 1, size=2)
        padded = np.pad(image, ((0, 0), (PAD, PAD), (PAD, PAD)))
        out = padded[:, dy:dy + h, dx:dx + w]
    if mirror and gen.random() < 0.5:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def augment_batch(images: np.ndarray, gen: np.random.Generator, translate: bool = True,
                  mirror: bool = True) -> np.ndarray:
    if not (translate or mirror):
        return images
    return np.stack([augment(img, gen, translate, mirror) for img in images])


def mixup(images: np.ndarray, labels: np.ndarray, gen: np.random.Generator, alpha: float = 1.0):
    """Blend each sample with a random partner from the same batch.

    Returns ``(mixed, labels, partner_labels, lam)``; the training loss is
    ``lam * CE(labels) + (1 - lam) * CE(partner_labels)``.
    """
    lam = float(gen.beta(alpha, alpha))
    perm = gen.permutation(len(labels))
    mixed = (lam * images + (1 - lam) * images[perm]).astype(images.dtype)
    return mixed, labels, labels[perm], lam


def synthetic_cifar(root: str, n_train: int = 5000, n_test: int = 1000, classes: int = 10,
                    seed: int = 0, noise: float = 40.0) -> None:
    """Write a learnable stand-in dataset in CIFAR binary layout.

    Each class is a smooth random colour pattern; samples are randomly
    shifted, optionally mirrored, contrast-jittered and noised copies of
    their class pattern.
    """
    gen = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:32, 0:32] / 32.0
    protos = []
    for _ in range(classes):
        img = np.zeros(IMAGE_SHAPE)
        for ch in range(3):
            for _ in range(3):
                fy, fx = gen.uniform(0.5, 3.0, size=2)
                py, px = gen.uniform(0, 2 * np.pi, size=2)
                img[ch] += np.sin(2 * np.pi * fy * yy + py) * np.cos(2 * np.pi * fx * xx + px)
        protos.append(img / 3.0)
    protos = np.stack(protos)

    def make(n):
        labels = gen.integers(0, classes, size=n)
        imgs = np.empty((n,) + IMAGE_SHAPE)
        for i, c in enumerate(labels):
            sy, sx = gen.integers(-6, 7, size=2)
            img = np.roll(protos[c], (sy, sx), axis=(1, 2))
            if gen.random() < 0.5:
                img = img[:, :, ::-1]
            imgs[i] = 128 + gen.uniform(50, 100) * img + gen.normal(0, noise, size=IMAGE_SHAPE)
        return np.clip(imgs, 0, 255).astype(np.uint8), labels

    os.makedirs(root, exist_ok=True)
    per_file = -(-n_train // len(TRAIN_FILES))
    x, y = make(n_train)
    for i, name in enumerate(TRAIN_FILES):
        sl = slice(i * per_file, min((i + 1) * per_file, n_train))
        if sl.start < n_train:
            write_cifar_batch(os.path.join(root, name), x[sl], y[sl])
    x, y = make(n_test)
    write_cifar_batch(os.path.join(root, TEST_FILE), x, y)
