"""Hot numeric kernels with a numba path and a pure-numpy path.

The backend is picked once at import time from ``HSR_ZERMELO_NUMBA``:
``1`` forces numba, ``0`` forces numpy, unset means numba when importable.
Both implementations are always importable by name (``*_numpy`` and
``*_numba``) so they can be compared against each other.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba ships with the test env
    numba = None
    HAVE_NUMBA = False


def _want_numba() -> bool:
    flag = os.environ.get("HSR_ZERMELO_NUMBA", "").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return False
    if flag in ("1", "true", "yes", "on") and not HAVE_NUMBA:
        raise ImportError("HSR_ZERMELO_NUMBA=1 but numba is not installed")
    return HAVE_NUMBA


# ---------------------------------------------------------------- PUCT select

def puct_select_numpy(q, prior, visits, c_puct, theoretical=False):
    total = visits.sum()
    if theoretical:
        explore = np.sqrt(total / (visits + 1.0))
    else:
        explore = math.sqrt(total) / (visits + 1.0)
    # np.argmax returns the first maximum -> lowest-index tie-break
    return int(np.argmax(q + c_puct * prior * explore))


def _puct_select_loop(q, prior, visits, c_puct, theoretical=False):
    total = 0.0
    for i in range(visits.shape[0]):
        total += visits[i]
    root = math.sqrt(total)
    best = 0
    best_score = -np.inf
    for i in range(q.shape[0]):
        if theoretical:
            e = math.sqrt(total / (visits[i] + 1.0))
        else:
            e = root / (visits[i] + 1.0)
        score = q[i] + c_puct * prior[i] * e
        if score > best_score:
            best_score = score
            best = i
    return best


# ---------------------------------------------------------------- conv1d
# x: (B, L, Cin); w: (K, Cin, Cout); b: (Cout,); zero 'same' padding, odd K.

def conv1d_forward_numpy(x, w, b):
    bsz, length, _ = x.shape
    ksize = w.shape[0]
    pad = ksize // 2
    xp = np.zeros((bsz, length + 2 * pad, x.shape[2]), dtype=x.dtype)
    xp[:, pad:pad + length] = x
    out = np.broadcast_to(b, (bsz, length, w.shape[2])).copy()
    for t in range(ksize):
        out += xp[:, t:t + length] @ w[t]
    return out


def conv1d_backward_numpy(x, w, dout):
    bsz, length, cin = x.shape
    ksize = w.shape[0]
    pad = ksize // 2
    xp = np.zeros((bsz, length + 2 * pad, cin), dtype=x.dtype)
    xp[:, pad:pad + length] = x
    dxp = np.zeros_like(xp)
    dw = np.empty_like(w)
    flat_dout = dout.reshape(-1, dout.shape[2])
    for t in range(ksize):
        dw[t] = xp[:, t:t + length].reshape(-1, cin).T @ flat_dout
        dxp[:, t:t + length] += dout @ w[t].T
    db = flat_dout.sum(axis=0)
    return dxp[:, pad:pad + length], dw, db


def _conv1d_forward_loop(x, w, b):
    bsz, length, cin = x.shape
    ksize, _, cout = w.shape
    pad = ksize // 2
    out = np.empty((bsz, length, cout), dtype=x.dtype)
    for n in range(bsz):
        for i in range(length):
            for o in range(cout):
                acc = b[o]
                for t in range(ksize):
                    j = i + t - pad
                    if 0 <= j < length:
                        for c in range(cin):
                            acc += x[n, j, c] * w[t, c, o]
                out[n, i, o] = acc
    return out


def _conv1d_backward_loop(x, w, dout):
    bsz, length, cin = x.shape
    ksize, _, cout = w.shape
    pad = ksize // 2
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    db = np.zeros(cout, dtype=w.dtype)
    for n in range(bsz):
        for i in range(length):
            for o in range(cout):
                g = dout[n, i, o]
                db[o] += g
                for t in range(ksize):
                    j = i + t - pad
                    if 0 <= j < length:
                        for c in range(cin):
                            dw[t, c, o] += x[n, j, c] * g
                            dx[n, j, c] += w[t, c, o] * g
    return dx, dw, db


if HAVE_NUMBA:
    puct_select_numba = numba.njit(cache=True)(_puct_select_loop)
    conv1d_forward_numba = numba.njit(cache=True)(_conv1d_forward_loop)
    conv1d_backward_numba = numba.njit(cache=True)(_conv1d_backward_loop)
else:  # pragma: no cover
    puct_select_numba = _puct_select_loop
    conv1d_forward_numba = _conv1d_forward_loop
    conv1d_backward_numba = _conv1d_backward_loop


USE_NUMBA = _want_numba()
BACKEND = "numba" if USE_NUMBA else "numpy"

# Past this batch size numpy's BLAS-backed matmul beats the numba loops
# (see benchmarks/bench_kernels.py), so training batches take the numpy path.
NUMBA_BATCH_LIMIT = 8


def _conv1d_forward_dispatch(x, w, b):
    if x.shape[0] <= NUMBA_BATCH_LIMIT:
        return conv1d_forward_numba(x, w, b)
    return conv1d_forward_numpy(x, w, b)


def _conv1d_backward_dispatch(x, w, dout):
    if x.shape[0] <= NUMBA_BATCH_LIMIT:
        return conv1d_backward_numba(x, w, dout)
    return conv1d_backward_numpy(x, w, dout)


if USE_NUMBA:
    puct_select = puct_select_numba
    conv1d_forward = _conv1d_forward_dispatch
    conv1d_backward = _conv1d_backward_dispatch
else:
    puct_select = puct_select_numpy
    conv1d_forward = conv1d_forward_numpy
    conv1d_backward = conv1d_backward_numpy
