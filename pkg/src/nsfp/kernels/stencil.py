"""Axis-wise correlation with a short symmetric-support stencil.

``out[..., i, ...] = sum_j w[j] * f[..., i + j - r, ...]`` with zeros outside
the grid, ``r = (len(w) - 1) // 2``. This is a discrete convolution with the
reversed stencil, which is what the heat-kernel convolutions need after the
kernel has been sampled on ``x_i - x_j``.
"""

import numpy as np

from .._accel import njit, prange


def correlate_axis_numpy(f, w, axis):
    f = np.moveaxis(np.asarray(f, dtype=np.float64), axis, 0)
    n = f.shape[0]
    r = (len(w) - 1) // 2
    out = np.zeros_like(f)
    for j, wj in enumerate(w):
        s = j - r
        if wj == 0.0 or abs(s) >= n:
            continue
        if s >= 0:
            out[: n - s] += wj * f[s:]
        else:
            out[-s:] += wj * f[: n + s]
    return np.moveaxis(out, 0, axis)


@njit(cache=True, parallel=True)
def _correlate_rows(f2, w, out):
    # f2: (n, m) with the convolved axis first
    n, m = f2.shape
    r = (w.shape[0] - 1) // 2
    for i in prange(n):
        jlo = max(0, r - i)
        jhi = min(w.shape[0], n - i + r)
        for j in range(jlo, jhi):
            wj = w[j]
            src = i + j - r
            for c in range(m):
                out[i, c] += wj * f2[src, c]


def correlate_axis_numba(f, w, axis):
    f = np.moveaxis(np.asarray(f, dtype=np.float64), axis, 0)
    shape = f.shape
    f2 = np.ascontiguousarray(f.reshape(shape[0], -1))
    out = np.zeros_like(f2)
    _correlate_rows(f2, np.ascontiguousarray(w, dtype=np.float64), out)
    return np.moveaxis(out.reshape(shape), 0, axis)
