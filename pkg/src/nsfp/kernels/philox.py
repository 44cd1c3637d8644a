"""Philox4x32-10 counter-based generator and Box-Muller normals.

Every normal variate is a pure function of ``(seed, step, member, coord)``, so
ensemble members can be simulated in any order, in any batch size, and on any
number of threads without changing a single bit of their noise.

Counter layout: ``(coord // 2, step, member, 0)``; key: the two 32-bit halves
of the 64-bit seed. Each counter yields two 53-bit uniforms and so two normals.
"""

import numpy as np

from .._accel import njit, prange

PHILOX_M0 = 0xD2511F53
PHILOX_M1 = 0xCD9E8D57
PHILOX_W0 = 0x9E3779B9
PHILOX_W1 = 0xBB67AE85
_MASK32 = 0xFFFFFFFF
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def split_seed(seed):
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    return seed & _MASK32, (seed >> 32) & _MASK32


# ---------------------------------------------------------------- numpy path


def philox4x32_numpy(c0, c1, c2, c3, k0, k1, rounds=10):
    """Vectorized Philox4x32 on uint64 arrays holding 32-bit words."""
    m = np.uint64(_MASK32)
    c0 = np.asarray(c0, dtype=np.uint64) & m
    c1 = np.asarray(c1, dtype=np.uint64) & m
    c2 = np.asarray(c2, dtype=np.uint64) & m
    c3 = np.asarray(c3, dtype=np.uint64) & m
    k0 = int(k0) & _MASK32
    k1 = int(k1) & _MASK32
    m0 = np.uint64(PHILOX_M0)
    m1 = np.uint64(PHILOX_M1)
    s32 = np.uint64(32)
    for r in range(rounds):
        p0 = m0 * c0
        p1 = m1 * c2
        hi0, lo0 = p0 >> s32, p0 & m
        hi1, lo1 = p1 >> s32, p1 & m
        c0, c1, c2, c3 = (hi1 ^ c1 ^ np.uint64(k0)), lo1, (hi0 ^ c3 ^ np.uint64(k1)), lo0
        if r < rounds - 1:
            k0 = (k0 + PHILOX_W0) & _MASK32
            k1 = (k1 + PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


def normals_numpy(seed, step, members, n_coords):
    """Standard normals of shape ``(len(members), n_coords)``."""
    k0, k1 = split_seed(seed)
    members = np.asarray(members, dtype=np.uint64)
    n_blocks = (n_coords + 1) // 2
    blk = np.arange(n_blocks, dtype=np.uint64)
    c0 = np.broadcast_to(blk[None, :], (members.size, n_blocks))
    c2 = np.broadcast_to(members[:, None], (members.size, n_blocks))
    c1 = np.full_like(c0, np.uint64(int(step) & _MASK32))
    x0, x1, x2, x3 = philox4x32_numpy(c0, c1, c2, np.zeros_like(c0), k0, k1)
    u1 = ((x0 >> np.uint64(5)).astype(np.float64) * 67108864.0
          + (x1 >> np.uint64(6)).astype(np.float64) + 0.5) * _INV_2_53
    u2 = ((x2 >> np.uint64(5)).astype(np.float64) * 67108864.0
          + (x3 >> np.uint64(6)).astype(np.float64) + 0.5) * _INV_2_53
    r = np.sqrt(-2.0 * np.log(u1))
    out = np.empty((members.size, 2 * n_blocks))
    out[:, 0::2] = r * np.cos(_TWO_PI * u2)
    out[:, 1::2] = r * np.sin(_TWO_PI * u2)
    return out[:, :n_coords]


# ---------------------------------------------------------------- numba path


@njit(cache=True)
def _philox_scalar(c0, c1, c2, c3, k0, k1):
    for r in range(10):
        p0 = np.uint64(PHILOX_M0) * c0
        p1 = np.uint64(PHILOX_M1) * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & np.uint64(_MASK32)
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & np.uint64(_MASK32)
        n0 = hi1 ^ c1 ^ k0
        n2 = hi0 ^ c3 ^ k1
        c0 = n0
        c1 = lo1
        c2 = n2
        c3 = lo0
        if r < 9:
            k0 = (k0 + np.uint64(PHILOX_W0)) & np.uint64(_MASK32)
            k1 = (k1 + np.uint64(PHILOX_W1)) & np.uint64(_MASK32)
    return c0, c1, c2, c3


@njit(cache=True, parallel=True)
def _normals_numba(k0, k1, step, members, n_coords, out):
    n_blocks = (n_coords + 1) // 2
    for i in prange(members.shape[0]):
        mem = np.uint64(members[i])
        for b in range(n_blocks):
            x0, x1, x2, x3 = _philox_scalar(np.uint64(b), step, mem, np.uint64(0), k0, k1)
            u1 = (np.float64(x0 >> np.uint64(5)) * 67108864.0
                  + np.float64(x1 >> np.uint64(6)) + 0.5) * _INV_2_53
            u2 = (np.float64(x2 >> np.uint64(5)) * 67108864.0
                  + np.float64(x3 >> np.uint64(6)) + 0.5) * _INV_2_53
            r = np.sqrt(-2.0 * np.log(u1))
            out[i, 2 * b] = r * np.cos(_TWO_PI * u2)
            if 2 * b + 1 < n_coords:
                out[i, 2 * b + 1] = r * np.sin(_TWO_PI * u2)


def normals_numba(seed, step, members, n_coords):
    k0, k1 = split_seed(seed)
    members = np.ascontiguousarray(members, dtype=np.uint64)
    out = np.empty((members.size, n_coords))
    _normals_numba(np.uint64(k0), np.uint64(k1), np.uint64(int(step) & _MASK32),
                   members, n_coords, out)
    return out
