"""Ensemble evaluation of the truncated convolution sum over triads.

Coefficient arrays have shape ``(E, 2 * n_wavevectors)``; entry ``2*w + a`` is
the amplitude of polarization ``a`` at wavevector ``w``. ``coef[t, a, b, i]``
holds ``(x_a(m) . n) (x_b(n) . x_i(k))`` for triad ``t = (m, n, k = m + n)``.
"""

import numpy as np

from .._accel import njit, prange

_CHUNK = 2048


def triad_sum_numpy(cu, cv, tm, tn, tk, coef, starts, kgroups):
    """``out[e, 2k+i] = i * sum_t sum_ab cu[e,2m+a] cv[e,2n+b] coef[t,a,b,i]``.

    ``starts``/``kgroups`` describe the runs of equal ``tk`` (triads are sorted
    by output wavevector).
    """
    E, M = cu.shape
    out = np.zeros((E, M), dtype=np.complex128)
    if tm.size == 0:
        return out
    nw = M // 2
    for lo in range(0, E, _CHUNK):
        hi = min(E, lo + _CHUNK)
        U = cu[lo:hi].reshape(hi - lo, nw, 2)[:, tm]
        V = cv[lo:hi].reshape(hi - lo, nw, 2)[:, tn]
        contrib = np.einsum("eta,etb,tabi->eti", U, V, coef, optimize=True)
        summed = np.add.reduceat(contrib, starts, axis=1)
        blk = out[lo:hi].reshape(hi - lo, nw, 2)
        blk[:, kgroups] = 1j * summed
    return out


@njit(cache=True, parallel=True)
def _triad_sum_numba(cu, cv, tm, tn, tk, coef, out):
    E = cu.shape[0]
    T = tm.shape[0]
    for e in prange(E):
        for t in range(T):
            m2 = 2 * tm[t]
            n2 = 2 * tn[t]
            k2 = 2 * tk[t]
            u0 = cu[e, m2]
            u1 = cu[e, m2 + 1]
            v0 = cv[e, n2]
            v1 = cv[e, n2 + 1]
            p00 = u0 * v0
            p01 = u0 * v1
            p10 = u1 * v0
            p11 = u1 * v1
            for i in range(2):
                s = (p00 * coef[t, 0, 0, i] + p01 * coef[t, 0, 1, i]
                     + p10 * coef[t, 1, 0, i] + p11 * coef[t, 1, 1, i])
                out[e, k2 + i] += 1j * s


def triad_sum_numba(cu, cv, tm, tn, tk, coef, starts=None, kgroups=None):
    out = np.zeros(cu.shape, dtype=np.complex128)
    if tm.size == 0:
        return out
    _triad_sum_numba(np.ascontiguousarray(cu), np.ascontiguousarray(cv),
                     tm, tn, tk, coef, out)
    return out
