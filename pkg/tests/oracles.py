"""Slow reference implementations used as independent test oracles."""

import itertools

import numpy as np


def conv2d_naive(x, k, stride=1, pad=0):
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    xp[:, :, pad:pad + h, pad:pad + w] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n, f, ho, wo))
    for b in range(n):
        for o in range(f):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for ch in range(c):
                        for a in range(kh):
                            for bb in range(kw):
                                acc += xp[b, ch, i * stride + a, j * stride + bb] * k[o, ch, a, bb]
                    out[b, o, i, j] = acc
    return out


def matmul_loops(x, w, b):
    n, d = x.shape
    e = w.shape[1]
    out = np.zeros((n, e))
    for i in range(n):
        for j in range(e):
            s = b[j]
            for t in range(d):
                s += x[i, t] * w[t, j]
            out[i, j] = s
    return out


def mask_mean(u, cells):
    """Average of u over an explicit list of (i, j) cells."""
    return sum(u[i, j] for i, j in cells) / len(cells)


def covered_cells(positions, hr, wr):
    cells = set()
    for a, b in positions:
        for i in range(a, a + hr):
            for j in range(b, b + wr):
                cells.add((int(i), int(j)))
    return sorted(cells)


def expected_union_area(h, w, hr, wr, m):
    """Exact E|union of m iid uniform hr x wr squares| by linearity of expectation."""
    nr, nc = h - hr + 1, w - wr + 1
    total = 0.0
    for i, j in itertools.product(range(h), range(w)):
        rows = sum(1 for a in range(nr) if a <= i < a + hr)
        cols = sum(1 for b in range(nc) if b <= j < b + wr)
        q = rows * cols / (nr * nc)
        total += 1 - (1 - q) ** m
    return total


def union_area_mc(h, w, hr, wr, m, trials, seed):
    """Vectorized Monte-Carlo union area, independent of the library code path."""
    rng = np.random.default_rng(seed)
    a = rng.integers(0, h - hr + 1, size=(trials, m))
    b = rng.integers(0, w - wr + 1, size=(trials, m))
    ii = np.arange(h)
    jj = np.arange(w)
    rin = (ii[None, None, :] >= a[:, :, None]) & (ii[None, None, :] < a[:, :, None] + hr)
    cin = (jj[None, None, :] >= b[:, :, None]) & (jj[None, None, :] < b[:, :, None] + wr)
    cover = (rin[:, :, :, None] & cin[:, :, None, :]).any(axis=1)
    return cover.sum(axis=(1, 2))
