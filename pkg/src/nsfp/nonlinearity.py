"""Projected bilinear operator ``B^N(u, v) = pi_N Pi_L (u . grad v)``.

With ``grad v`` having amplitude ``i n v(n)`` at wavevector ``n``, the output
amplitude at ``k`` is ``i sum_{m+n=k} (u(m).n) v(n)``. Projecting that vector on
the frame ``x_i(k)`` (which is orthogonal to ``k``) applies the Leray projector
and extracts the polarization component in one step, so no explicit
``I - k k^T/|k|^2`` is ever formed.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .spectral import SpectralField, SubspaceMismatchError, embed_subspace, project_subspace


class BilinearWorkspace:
    """Interaction table of all triads ``(m, n, k = m + n)`` inside the cutoff.

    Only canonical output wavevectors are tabulated; the amplitude at ``-k`` is
    the conjugate, filled in by :meth:`apply`.
    """

    def __init__(self, mode_set):
        self.mode_set = mode_set
        wv = mode_set.wavevectors
        tm, tn, tk = [], [], []
        for k_idx in mode_set.canonical_wv:
            k_idx = int(k_idx)
            k = wv[k_idx]
            for m_idx in range(mode_set.n_wavevectors):
                n = tuple(int(v) for v in k - wv[m_idx])
                n_idx = mode_set._wv_index.get(n)
                if n_idx is not None:
                    tm.append(m_idx)
                    tn.append(n_idx)
                    tk.append(k_idx)
        self.tm = np.array(tm, dtype=np.int64)
        self.tn = np.array(tn, dtype=np.int64)
        self.tk = np.array(tk, dtype=np.int64)
        fr = mode_set.frames
        n_vec = wv[self.tn].astype(np.float64)
        xm_dot_n = np.einsum("tad,td->ta", fr[self.tm], n_vec)            # (T, a)
        xn_dot_xk = np.einsum("tbd,tid->tbi", fr[self.tn], fr[self.tk])  # (T, b, i)
        self.coef = np.ascontiguousarray(xm_dot_n[:, :, None, None] * xn_dot_xk[:, None, :, :])
        if self.tk.size:
            change = np.flatnonzero(np.diff(self.tk)) + 1
            self.starts = np.concatenate([[0], change]).astype(np.int64)
            self.kgroups = self.tk[self.starts]
        else:
            self.starts = np.zeros(0, dtype=np.int64)
            self.kgroups = np.zeros(0, dtype=np.int64)

    @property
    def n_triads(self):
        return int(self.tm.size)

    def apply(self, cu, cv, kernel=None):
        """Ensemble evaluation on coefficient arrays of shape ``(E, M)``."""
        kernel = kernels.triad_sum if kernel is None else kernel
        out = kernel(cu, cv, self.tm, self.tn, self.tk, self.coef, self.starts, self.kgroups)
        ms = self.mode_set
        src = np.concatenate([2 * ms.canonical_wv, 2 * ms.canonical_wv + 1])
        out[:, ms.conj[src]] = np.conj(out[:, src])
        return out


_WS_CACHE: dict = {}


def workspace(mode_set) -> BilinearWorkspace:
    ws = _WS_CACHE.get(mode_set.N)
    if ws is None:
        ws = _WS_CACHE[mode_set.N] = BilinearWorkspace(mode_set)
    return ws


def bilinear(u: SpectralField, v: SpectralField, ws: BilinearWorkspace | None = None) -> SpectralField:
    if u.mode_set != v.mode_set:
        raise SubspaceMismatchError("bilinear: fields live on different mode sets")
    ws = workspace(u.mode_set) if ws is None else ws
    if ws.mode_set != u.mode_set:
        raise SubspaceMismatchError("bilinear: workspace built for another cutoff")
    out = ws.apply(u.coeffs[None, :], v.coeffs[None, :])[0]
    return SpectralField(u.mode_set, out)


def decompose_drift_terms(u: SpectralField, F, ws: BilinearWorkspace | None = None):
    """``pi_F B(x',x'), pi_F B(x',x''), pi_F B(x'',x'), pi_F B(x'',x'')``.

    ``x' = pi_F u`` and ``x'' = u - x'``; the four pieces sum to ``pi_F B(u, u)``.
    """
    ws = workspace(u.mode_set) if ws is None else ws
    xp = embed_subspace(project_subspace(u, F), F, u.mode_set)
    xpp = u - xp
    return tuple(project_subspace(bilinear(a, b, ws), F)
                 for a, b in ((xp, xp), (xp, xpp), (xpp, xp), (xpp, xpp)))
