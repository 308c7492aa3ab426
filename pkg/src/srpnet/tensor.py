"""Dense tensors with reverse-mode differentiation.

Every differentiable op returns a new :class:`Tensor` that remembers its
inputs and a closure computing the vector-Jacobian product.  Each op gets a
monotonically increasing sequence number when it executes, and
:func:`backward` replays the recorded ops in exactly the reverse of that
order, accumulating gradients additively.

Activations use the N, C, H, W layout throughout.
"""

from __future__ import annotations

import itertools
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

# Checked after every forward and backward op.
CHECK_FINITE = True

_sequence = itertools.count()


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class Tensor:
    """N-dimensional array with an optional gradient buffer.

    Leaf tensors created by the user carry ``requires_grad`` explicitly;
    op outputs require grad whenever any input does.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_seq", "_op")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._seq = -1
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op})"


def _check_finite(arr: np.ndarray, op: str, stage: str) -> None:
    if CHECK_FINITE and not np.isfinite(arr).all():
        raise NonFiniteError(f"{op}: non-finite values in {stage}")


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn, op: str) -> Tensor:
    _check_finite(data, op, "forward output")
    out = Tensor(data)
    out._op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._seq = next(_sequence)
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
    """Populate ``.grad`` on every tensor that ``loss`` depends on.

    Gradients add onto whatever is already stored, so calling this for two
    losses in turn leaves the gradient of their sum.
    """
    if grad is None:
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss or an explicit grad, got shape {loss.shape}")
        grad = np.ones_like(loss.data)
    grad = np.asarray(grad, dtype=loss.dtype)
    if grad.shape != loss.shape:
        raise ShapeError(f"seed grad shape {grad.shape} != loss shape {loss.shape}")

    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if id(t) in nodes or not t.requires_grad:
            continue
        nodes[id(t)] = t
        stack.extend(t._parents)

    pending: dict[int, np.ndarray] = {id(loss): grad}
    for t in sorted(nodes.values(), key=lambda n: n._seq, reverse=True):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g
        if t._backward is None:
            continue
        for parent, pg in zip(t._parents, t._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            _check_finite(pg, t._op, "backward")
            key = id(parent)
            pending[key] = pg if key not in pending else pending[key] + pg


# --------------------------------------------------------------------------
# elementwise


def add(x: Tensor, y: Tensor) -> Tensor:
    if x.shape != y.shape:
        raise ShapeError(f"add: shapes {x.shape} and {y.shape} differ")
    return _make(x.data + y.data, (x, y), lambda g: (g, g), "add")


def scale(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)
    return _make(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return _make(np.where(pos, x.data, x.dtype.type(0)), (x,), lambda g: (g * pos,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    # two-sided form avoids exp overflow
    e = np.exp(-np.abs(d))
    s = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(d.dtype, copy=False)
    return _make(s, (x,), lambda g: (g * s * (1 - s),), "sigmoid")


def mul_channelwise(u: Tensor, alpha: Tensor) -> Tensor:
    """Scale every spatial position of channel ``c`` by ``alpha[n, c]``."""
    if u.ndim != 4 or alpha.ndim != 2 or u.shape[:2] != alpha.shape:
        raise ShapeError(f"mul_channelwise: U {u.shape} is not [N,C,H,W] matching alpha {alpha.shape}")
    a4 = alpha.data[:, :, None, None]

    def back(g):
        return g * a4, (g * u.data).sum(axis=(2, 3))

    return _make(u.data * a4, (u, alpha), back, "mul_channelwise")


# --------------------------------------------------------------------------
# shape plumbing


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def stack(tensors: Sequence[Tensor], axis: int) -> Tensor:
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: mismatched shapes {sorted(shapes)}")

    def back(g):
        return [np.take(g, i, axis=axis) for i in range(len(tensors))]

    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, back, "stack")


def spatial_mean(x: Tensor) -> Tensor:
    """Mean over H and W of an [N,C,H,W] tensor."""
    if x.ndim != 4:
        raise ShapeError(f"spatial_mean expects [N,C,H,W], got {x.shape}")
    n, c, h, w = x.shape
    area = h * w
    out = x.data.sum(axis=(2, 3)) / x.dtype.type(area)

    def back(g):
        return (np.broadcast_to((g / x.dtype.type(area))[:, :, None, None], x.shape).copy(),)

    return _make(out, (x,), back, "spatial_mean")


def select(x: Tensor, index: tuple) -> Tensor:
    """Pick a single element, e.g. one logit, as a scalar tensor."""
    val = np.asarray(x.data[index])

    def back(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _make(val, (x,), back, "select")


# --------------------------------------------------------------------------
# linear maps


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` for ``x`` [N,D], ``w`` [D,E], ``b`` [E]."""
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise ShapeError(f"affine: need x[N,D], W[D,E], b[E]; got {x.shape}, {w.shape}, {b.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(f"affine: inner dims disagree: x {x.shape}, W {w.shape}, b {b.shape}")

    def back(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _make(x.data @ w.data + b.data, (x, w, b), back, "affine")


def conv2d(x: Tensor, k: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Direct 2-D cross-correlation without bias.

    Args:
        x: input of shape [N, C, H, W].
        k: kernel of shape [F, C, kh, kw].
        stride: step between output positions.
        pad: zeros added on each spatial border.

    Returns:
        Tensor of shape [N, F, (H + 2*pad - kh)//stride + 1, ...].
    """
    if x.ndim != 4 or k.ndim != 4:
        raise ShapeError(f"conv2d: need x[N,C,H,W] and k[F,C,kh,kw]; got {x.shape}, {k.shape}")
    n, c, h, w = x.shape
    f, kc, kh, kw = k.shape
    if kc != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {kc}")
    hp, wp = h + 2 * pad, w + 2 * pad
    if kh > hp or kw > wp:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    kmat = k.data.reshape(f, -1)
    out = np.ascontiguousarray((cols @ kmat.T).reshape(n, ho, wo, f).transpose(0, 3, 1, 2))

    def back(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, f)
        dk = (gmat.T @ cols).reshape(k.shape)
        dcols = (gmat @ kmat).reshape(n, ho, wo, c, kh, kw).transpose(4, 5, 0, 3, 1, 2)
        dxp = np.zeros((n, c, hp, wp), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[i, j]
        dx = dxp[:, :, pad:pad + h, pad:pad + w] if pad else dxp
        return dx, dk

    return _make(out, (x, k), back, "conv2d")


# --------------------------------------------------------------------------
# normalization


class RunningStats:
    """Per-channel running mean/variance owned by a batch-norm layer."""

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)


def batchnorm2d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    stats: RunningStats,
    training: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
) -> Tensor:
    """Per-channel batch normalization over N, H, W.

    In training mode the batch statistics normalize ``x`` and the running
    statistics are blended toward them (unbiased variance, like most
    frameworks).  In eval mode the running statistics are used as is.
    """
    if x.ndim != 4 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ShapeError(f"batchnorm2d: x {x.shape}, gamma {gamma.shape}, beta {beta.shape}")
    dt = x.dtype.type
    g4 = gamma.data[None, :, None, None]
    b4 = beta.data[None, :, None, None]

    if not training:
        inv = 1 / np.sqrt(stats.var.astype(x.dtype) + dt(eps))
        xhat = (x.data - stats.mean.astype(x.dtype)[None, :, None, None]) * inv[None, :, None, None]

        def back_eval(g):
            return g * g4 * inv[None, :, None, None], (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

        return _make(xhat * g4 + b4, (x, gamma, beta), back_eval, "batchnorm2d")

    m = x.shape[0] * x.shape[2] * x.shape[3]
    mean = x.data.mean(axis=(0, 2, 3))
    centered = x.data - mean[None, :, None, None]
    var = (centered * centered).mean(axis=(0, 2, 3))
    inv = 1 / np.sqrt(var + dt(eps))
    xhat = centered * inv[None, :, None, None]

    unbiased = var * (m / max(m - 1, 1))
    stats.mean[...] = (1 - momentum) * stats.mean + momentum * mean
    stats.var[...] = (1 - momentum) * stats.var + momentum * unbiased

    def back(g):
        dxhat = g * g4
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        dx = (inv[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
        return dx, (g * xhat).sum(axis=(0, 2, 3)), g.sum(axis=(0, 2, 3))

    return _make(xhat * g4 + b4, (x, gamma, beta), back, "batchnorm2d")


# --------------------------------------------------------------------------
# objective


def softmax_xent(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under softmax(``logits``)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"softmax_xent: logits {logits.shape}, labels {labels.shape}")
    n = logits.shape[0]
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = (logz - shifted[rows, labels]).mean()

    def back(g):
        p = np.exp(shifted - logz[:, None])
        p[rows, labels] -= 1
        return (p * (g / n),)

    return _make(np.asarray(loss, dtype=logits.dtype), (logits,), back, "softmax_xent")
