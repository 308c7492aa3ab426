"""Diagnostics: region area ratios, Grad-CAM, feature-map grids, descriptor similarity.

Images are written as binary PPM (P6, maxval 255) and tables as CSV.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .net import NetworkConfig, ResNet
from .rng import TAG_ANALYSIS, stream
from .srp import Mode, SrpConfig, SrpMode, area_ratio, build_union_mask, gap, region_dims, sample_positions

AREA_RATIO_HEADER = ("block", "lambda", "mean_ratio", "p2_5", "p97_5", "ss_ratio")
SIMILARITY_HEADER = ("run", "attention", "srp_mode", "block", "similarity")


# --------------------------------------------------------------------------
# area ratio


@dataclass
class AreaRatioRow:
    block: int
    lam: float
    mean: float
    p2_5: float
    p97_5: float
    ss_ratio: float


def area_ratio_samples(h: int, w: int, lam: float, regions: int, trials: int, gen: np.random.Generator) -> np.ndarray:
    hr, wr = region_dims(h, w, lam)
    out = np.empty(trials)
    for t in range(trials):
        out[t] = area_ratio(build_union_mask(sample_positions(gen, h, w, hr, wr, regions), hr, wr, h, w))
    return out


def area_ratio_curve(
    sizes: Union[NetworkConfig, Sequence[tuple[int, int]]],
    srp: SrpConfig,
    trials: int,
    seed: int = 0,
) -> list[AreaRatioRow]:
    """Monte-Carlo area ratio of the pooled region at every attention block.

    ``sizes`` is either a network config (its block output sizes are used)
    or an explicit list of (H, W) per block.  The 95% band is the empirical
    2.5/97.5 percentile pair.  ``ss_ratio`` is the closed-form single-square
    ratio H'W'/(HW) at the same scale.
    """
    if isinstance(sizes, NetworkConfig):
        sizes = sizes.feature_sizes()
    sizes = list(sizes)
    regions = 1 if srp.mode is SrpMode.SS else srp.regions
    rows = []
    for b, (h, w) in enumerate(sizes):
        lam = srp.block_lambda(b, len(sizes))
        hr, wr = region_dims(h, w, lam)
        ratios = area_ratio_samples(h, w, lam, regions, trials, stream(seed, TAG_ANALYSIS, b))
        lo, hi = np.percentile(ratios, [2.5, 97.5])
        rows.append(AreaRatioRow(b, lam, float(ratios.mean()), float(lo), float(hi), hr * wr / (h * w)))
    return rows


def area_ratio_csv(rows: Sequence[AreaRatioRow]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(AREA_RATIO_HEADER)
    for r in rows:
        wr.writerow([r.block, repr(r.lam), repr(r.mean), repr(r.p2_5), repr(r.p97_5), repr(r.ss_ratio)])
    return buf.getvalue()


# --------------------------------------------------------------------------
# images


def save_ppm(path: str, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def read_ppm(path: str) -> np.ndarray:
    """HxWx3 ``uint8`` array from a binary P6 file with maxval 255."""
    with open(path, "rb") as fh:
        buf = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        end = pos
        while not buf[end:end + 1].isspace():
            end += 1
        tokens.append(buf[pos:end])
        pos = end
    if tokens[0] != b"P6" or tokens[3] != b"255":
        raise ValueError(f"{path}: only binary P6 with maxval 255 is supported")
    w, h = int(tokens[1]), int(tokens[2])
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * 3, offset=pos + 1)
    return data.reshape(h, w, 3)


def to_gray_rgb(values: np.ndarray) -> np.ndarray:
    v = np.round(np.clip(values, 0, 1) * 255).astype(np.uint8)
    return np.repeat(v[:, :, None], 3, axis=2)


def heat_rgb(values: np.ndarray) -> np.ndarray:
    """Linear gray (128,128,128) at 0 to red (255,0,0) at 1."""
    v = np.clip(values, 0, 1)[:, :, None]
    lo = np.array([128.0, 128.0, 128.0])
    hi = np.array([255.0, 0.0, 0.0])
    return np.round(lo + v * (hi - lo)).astype(np.uint8)


# --------------------------------------------------------------------------
# Grad-CAM


def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Half-pixel-centre linear interpolation weights, [n_out, n_in]."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1)
        lo = int(math.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1 - frac
        m[i, hi] += frac
    return m


def bilinear_resize(a: np.ndarray, h: int, w: int) -> np.ndarray:
    return _interp_matrix(h, a.shape[0]) @ a @ _interp_matrix(w, a.shape[1]).T


class UnknownLayerError(KeyError):
    pass


def gradcam(model, image: np.ndarray, class_index: int, layer_name: Optional[str] = None) -> np.ndarray:
    """Class-activation heatmap in [0, 1] at the input resolution.

    Channel weights are the spatial mean of d(logit)/d(activation) at
    ``layer_name``; the weighted sum is rectified, bilinearly upsampled and
    divided by its maximum (an all-zero map stays zero).  ``model`` is
    anything with ``forward(x, mode, taps=...)`` filling ``taps`` by name.
    The default layer is ``model.last_conv_name()`` when the model has one,
    else the last entry of ``model.layer_names()``.
    """
    if layer_name is None:
        last_conv = getattr(model, "last_conv_name", None)
        layer_name = last_conv() if last_conv else model.layer_names()[-1]
    x = np.asarray(image)[None]

    class _Recorder(dict):
        # the target must be a graph node before downstream ops consume it
        def __setitem__(self, key, t):
            if key == layer_name:
                t.requires_grad = True
            super().__setitem__(key, t)

    taps = _Recorder()
    logits = model.forward(x, Mode.EVAL, taps=taps)
    if layer_name not in taps:
        raise UnknownLayerError(f"unknown layer {layer_name!r}; known: {sorted(taps)}")
    a = taps[layer_name]
    T.backward(T.select(logits, (0, class_index)))
    grad = a.grad if a.grad is not None else np.zeros_like(a.data)
    for p in getattr(model, "parameters", list)():
        p.grad = None
    weights = grad[0].mean(axis=(1, 2))
    cam = np.maximum(np.tensordot(weights, a.data[0], axes=1), 0)
    cam = bilinear_resize(cam.astype(np.float64), x.shape[2], x.shape[3])
    cam = np.maximum(cam, 0)
    peak = cam.max()
    return cam / peak if peak > 0 else np.zeros_like(cam)


# --------------------------------------------------------------------------
# feature maps


def _branch_tap(model: ResNet, block_index: int, branch: str) -> str:
    if branch not in ("identity", "residual"):
        raise ValueError(f"branch must be 'identity' or 'residual', got {branch!r}")
    return f"{model.blocks[block_index].name}.{branch}"


def block_activation(model: ResNet, image: np.ndarray, block_index: int, branch: str) -> np.ndarray:
    """Eval-mode activation [C, H, W] of one branch of one block."""
    taps: dict = {}
    model.forward(np.asarray(image)[None], Mode.EVAL, taps=taps)
    return taps[_branch_tap(model, block_index, branch)].data[0]


def normalize_channels(maps: np.ndarray) -> np.ndarray:
    """Min-max scale each channel to [0, 1]; a constant channel becomes 0.5."""
    lo = maps.min(axis=(1, 2), keepdims=True)
    hi = maps.max(axis=(1, 2), keepdims=True)
    span = hi - lo
    out = np.full(maps.shape, 0.5)
    ok = (span > 0)[:, 0, 0]
    out[ok] = (maps[ok] - lo[ok]) / span[ok]
    return out


def tile_grid(maps: np.ndarray, cols: Optional[int] = None) -> np.ndarray:
    """Lay ``maps`` [K, H, W] out row-major; tile (r, c) holds map r*cols + c."""
    k, h, w = maps.shape
    cols = cols or math.ceil(math.sqrt(k))
    rows = math.ceil(k / cols)
    grid = np.zeros((rows * h, cols * w))
    for i in range(k):
        r, c = divmod(i, cols)
        grid[r * h:(r + 1) * h, c * w:(c + 1) * w] = maps[i]
    return grid


def dump_feature_maps(model: ResNet, image: np.ndarray, block_index: int, branch: str = "residual",
                      count: int = 20, cols: Optional[int] = None) -> np.ndarray:
    """Grid of the first ``count`` normalized channels, values in [0, 1]."""
    maps = block_activation(model, image, block_index, branch)[:count].astype(np.float64)
    return tile_grid(normalize_channels(maps), cols)


# --------------------------------------------------------------------------
# descriptor similarity


def mean_pairwise_cosine(vectors: np.ndarray) -> float:
    """Mean cosine similarity over all unordered pairs of rows."""
    v = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(v, axis=1)
    unit = v / np.where(norms > 0, norms, 1)[:, None]
    sims = unit @ unit.T
    iu = np.triu_indices(len(v), k=1)
    return float(sims[iu].mean())


def descriptor_similarity(model: ResNet, images: np.ndarray, block_index: int, branch: str = "residual") -> float:
    """Homogeneity of channel descriptors at one block.

    Each channel's descriptor, viewed across the probe batch, is a vector of
    length N; the result is the mean pairwise cosine between channels.
    """
    taps: dict = {}
    model.forward(np.asarray(images), Mode.EVAL, taps=taps)
    z = gap(taps[_branch_tap(model, block_index, branch)].data)
    return mean_pairwise_cosine(z.T)


def similarity_csv(rows: Sequence[tuple]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(SIMILARITY_HEADER)
    for r in rows:
        wr.writerow([r[0], r[1], r[2], r[3], repr(float(r[4]))])
    return buf.getvalue()
