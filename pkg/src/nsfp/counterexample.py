"""A smooth bounded planar density whose marginals are unbounded.

Put a copy of a compactly supported bump, compressed by the factor
``k1*k2``, around every lattice point ``k`` with both coordinates nonzero.
Every copy keeps the peak value of the bump, yet the mass of the copies in
the column ``x1 = k1`` adds up like a harmonic series along that column.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .besov import GridFunction


def psi(s):
    """``exp(-1/(1 - s^2))`` on ``(-1, 1)``, zero outside."""
    s = np.asarray(s, dtype=np.float64)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


@lru_cache(maxsize=None)
def psi_integral():
    """``int_{-1}^{1} psi``; the integrand is flat to all orders at the ends."""
    s = np.linspace(-1.0, 1.0, 400_001)
    return float(np.trapezoid(psi(s), s))


def bump_constant():
    # int psi(2x) dx = psi_integral / 2 on each axis
    return 1.0 / (0.5 * psi_integral()) ** 2


def bump(x1, x2):
    """Unit-mass bump supported in ``(-1/2, 1/2)^2``."""
    return bump_constant() * psi(2.0 * np.asarray(x1)) * psi(2.0 * np.asarray(x2))


def bump_marginal(s):
    """``int bump(s, y) dy``."""
    return bump_constant() * psi(2.0 * np.asarray(s)) * 0.5 * psi_integral()


def _joint_values(X1, X2, K):
    k1 = np.rint(X1)
    k2 = np.rint(X2)
    scale = k1 * k2
    keep = (scale != 0) & (np.abs(k1) <= K) & (np.abs(k2) <= K)
    out = np.zeros(np.broadcast(X1, X2).shape)
    out[keep] = bump((scale * (X1 - k1))[keep], (scale * (X2 - k2))[keep])
    return out


def counterexample_density(K_window, grid):
    """Joint density (unnormalized sum) and its first-coordinate marginal on a grid.

    ``grid`` is a pair of axes (or anything with ``.axes()``). The marginal is
    summed cell by cell from the closed-form 1-D integral of each compressed
    copy, ``bump_marginal(k1 k2 (x1 - k1)) / |k1 k2|``, so it stays exact even
    where the joint grid cannot resolve the narrowest copies.
    """
    K = int(K_window)
    if K < 0:
        raise ValueError("K_window must be nonnegative")
    axes = grid.axes() if hasattr(grid, "axes") and callable(grid.axes) else list(grid)
    a1, a2 = (np.asarray(a, dtype=np.float64) for a in axes)
    X1, X2 = np.meshgrid(a1, a2, indexing="ij")
    joint = _joint_values(X1, X2, K)
    marg = np.zeros(a1.size)
    k1 = np.rint(a1)
    for c1 in range(-K, K + 1):
        if c1 == 0:
            continue
        col = k1 == c1
        if not col.any():
            continue
        for c2 in range(-K, K + 1):
            if c2 == 0:
                continue
            sc = abs(c1 * c2)
            marg[col] += bump_marginal(sc * (a1[col] - c1)) / sc
    return GridFunction([a1, a2], joint), GridFunction([a1], marg)


def default_grid(K, nodes_per_unit=64):
    """Square grid over ``[-K-1/2, K+1/2]^2`` with every integer as a node."""
    half = K + 0.5
    m = int(round(half * nodes_per_unit))
    ax = np.arange(-m, m + 1) / nodes_per_unit
    return [ax, ax]


def peak_value():
    return bump_constant() * math.exp(-2.0)
