"""Finite differences, Besov and Hoelder (semi)norms on grid functions.

Norms over all of ``F`` are approximated on a bounded grid. Off-node values
come from multilinear interpolation, and a stencil that leaves the grid is
dropped from the quadrature rather than padded. The supremum over shifts
``|h| <= 1`` is sampled on a log ladder of lengths times a fixed set of
directions, so every computed seminorm is an under-estimate of the
continuum one.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .density import trapezoid_weights

LADDER_SIZE = 20


class BesovParamError(ValueError):
    pass


@dataclass
class GridFunction:
    axes: list
    values: np.ndarray
    t: float | None = None

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=np.float64) for a in self.axes]
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function has non-finite values")

    @classmethod
    def of(cls, obj):
        if isinstance(obj, cls):
            return obj
        dens = getattr(obj, "density", obj)
        return cls(dens.axes, dens.values, getattr(dens, "t", None))

    @property
    def d(self):
        return len(self.axes)

    @property
    def spacing(self):
        return np.array([a[1] - a[0] for a in self.axes])


@dataclass(frozen=True)
class BesovParams:
    s: float
    p: float = math.inf
    q: float = math.inf
    n: int | None = None

    def __post_init__(self):
        if self.s <= 0:
            raise BesovParamError("smoothness s must be positive")
        if not (self.p >= 1 and self.q >= 1):
            raise BesovParamError("p and q must be at least 1")
        n = int(math.floor(self.s)) + 1 if self.n is None else int(self.n)
        if n <= self.s:
            raise BesovParamError(f"difference order n={n} must exceed s={self.s}")
        object.__setattr__(self, "n", n)


# ------------------------------------------------------------ differences


def shifted(values, axes, shift):
    """Values at ``node + shift`` by multilinear interpolation; NaN off-grid."""
    out = np.asarray(values, dtype=np.float64)
    for a, ax in enumerate(axes):
        s = float(shift[a])
        if s == 0.0:
            continue
        h = ax[1] - ax[0]
        q = s / h
        i0 = math.floor(q + 1e-9)
        frac = q - i0
        if abs(frac) < 1e-9:
            frac = 0.0
        out = _shift_axis(out, a, i0, frac)
    return out


def _shift_axis(f, axis, i0, frac):
    n = f.shape[axis]
    f = np.moveaxis(f, axis, 0)
    idx = np.arange(n) + i0
    ok0 = (idx >= 0) & (idx < n)
    res = np.full(f.shape, np.nan)
    res[ok0] = f[idx[ok0]]
    if frac:
        ok1 = (idx + 1 >= 0) & (idx + 1 < n)
        nxt = np.full(f.shape, np.nan)
        nxt[ok1] = f[idx[ok1] + 1]
        res = (1.0 - frac) * res + frac * nxt
    return np.moveaxis(res, 0, axis)


def difference_field(f, h, n):
    """``Delta_h^n f`` at every node; NaN where the stencil leaves the grid."""
    f = GridFunction.of(f)
    h = np.broadcast_to(np.asarray(h, dtype=np.float64), (f.d,))
    acc = np.zeros(f.values.shape)
    for j in range(n + 1):
        c = (-1) ** (n - j) * math.comb(n, j)
        acc = acc + c * shifted(f.values, f.axes, j * h)
    return acc


def finite_difference(f, h, n, x):
    """``Delta_h^n f(x)`` at a node ``x`` (coordinates or an index tuple).

    Returns NaN when some ``x + j h`` lies outside the grid.
    """
    f = GridFunction.of(f)
    if isinstance(x, tuple) and all(isinstance(i, (int, np.integer)) for i in x):
        idx = x
    else:
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        idx = tuple(int(np.argmin(np.abs(ax - xi))) for ax, xi in zip(f.axes, x))
        if not all(np.isclose(ax[i], xi) for ax, i, xi in zip(f.axes, idx, x)):
            raise ValueError(f"{x} is not a grid node")
    h = np.broadcast_to(np.asarray(h, dtype=np.float64), (f.d,))
    total = 0.0
    for j in range(n + 1):
        c = (-1) ** (n - j) * math.comb(n, j)
        total += c * _interp_at(f, np.array([ax[i] for ax, i in zip(f.axes, idx)]) + j * h)
    return float(total)


def _interp_at(f, x):
    idx, frac = [], []
    for ax, xi in zip(f.axes, x):
        s = (xi - ax[0]) / (ax[1] - ax[0])
        if s < -1e-9 or s > ax.size - 1 + 1e-9:
            return math.nan
        s = min(max(s, 0.0), ax.size - 1)
        i = min(int(math.floor(s + 1e-9)), ax.size - 1)
        idx.append(i)
        frac.append(max(s - i, 0.0))
    val = 0.0
    for corner in itertools.product((0, 1), repeat=f.d):
        w = 1.0
        sl = []
        for c, i, fr, ax in zip(corner, idx, frac, f.axes):
            w *= fr if c else 1.0 - fr
            if c and fr == 0.0:
                w = 0.0
            sl.append(min(i + c, ax.size - 1))
        if w:
            val += w * f.values[tuple(sl)]
    return val


def lp_norm(values, axes, p):
    """Grid ``L^p`` norm over finite entries; returns ``(norm, excluded fraction of |values|)``."""
    ok = np.isfinite(values)
    if p == math.inf:
        return (float(np.max(np.abs(values[ok]))) if ok.any() else 0.0), float(np.mean(~ok))
    w = trapezoid_weights(axes)
    v = np.where(ok, np.abs(values), 0.0)
    return float(np.sum(w * v ** p) ** (1.0 / p)), float(np.sum(w[~ok]) / np.sum(w))


# ------------------------------------------------------------- seminorms


def default_ladder(f, size=LADDER_SIZE, h_max=1.0):
    f = GridFunction.of(f)
    h_min = 2.0 * float(np.max(f.spacing))
    if h_min >= h_max:
        raise ValueError(f"grid too coarse: 2*spacing={h_min} is not below {h_max}")
    return np.geomspace(h_min, h_max, size)


def directions(d):
    """Unit vectors along the coordinate axes and the diagonals, one per +- pair."""
    out = []
    for v in itertools.product((-1, 0, 1), repeat=d):
        v = np.array(v, dtype=np.float64)
        if not v.any():
            continue
        first = v[np.flatnonzero(v)[0]]
        if first > 0:
            out.append(v / np.linalg.norm(v))
    return out


def _sphere_area(d):
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def difference_norms(f, n, p, ladder=None, dirs=None):
    """``||Delta_h^n f||_{L^p}`` for every ladder length and direction.

    Both signs of a direction give the same continuum norm; each pair is
    evaluated once. Returns ``(ladder, dirs, norms[len(ladder), len(dirs)])``.
    """
    f = GridFunction.of(f)
    ladder = default_ladder(f) if ladder is None else np.asarray(ladder, dtype=np.float64)
    dirs = directions(f.d) if dirs is None else [np.asarray(v, dtype=np.float64) for v in dirs]
    out = np.empty((ladder.size, len(dirs)))
    for i, r in enumerate(ladder):
        for j, e in enumerate(dirs):
            out[i, j] = lp_norm(difference_field(f, r * e, n), f.axes, p)[0]
    return ladder, dirs, out


def besov_seminorm(f, params: BesovParams, ladder=None, dirs=None) -> float:
    """``[f]_{B^s_{p,q}}`` on the shift ladder.

    ``q = inf`` takes the maximum of ``||Delta_h^n f||_p / |h|^s``. For finite
    ``q`` the integral over the unit ball is done in polar form: trapezoid in
    ``log |h|`` times the direction average times the sphere area.
    """
    f = GridFunction.of(f)
    if not np.any(f.values):
        return 0.0
    ladder, dirs, nrm = difference_norms(f, params.n, params.p, ladder, dirs)
    ratio = nrm / ladder[:, None] ** params.s
    if params.q == math.inf:
        return float(ratio.max())
    radial = np.mean(ratio ** params.q, axis=1) * _sphere_area(f.d)
    return float(np.trapezoid(radial, np.log(ladder)) ** (1.0 / params.q))


def holder_norm(f, alpha, ladder=None, dirs=None) -> float:
    """``||f||_inf + [f]_{B^alpha_{inf,inf}}`` with first differences."""
    if not 0.0 < alpha < 1.0:
        raise BesovParamError("alpha must lie in (0, 1)")
    f = GridFunction.of(f)
    return float(np.max(np.abs(f.values))) + besov_seminorm(f, BesovParams(alpha, math.inf, math.inf, 1),
                                                            ladder, dirs)


# ---------------------------------------------------------- time functionals


def _in_window(traj, T, t_min):
    out = [GridFunction.of(s) for s in traj]
    sel = [g for g in out if g.t is not None and t_min - 1e-12 <= g.t <= T + 1e-12]
    if not sel:
        raise ValueError(f"no snapshot in [{t_min}, {T}]")
    return sel


def f_alpha_functional(traj, alpha, T, t_min) -> float:
    """``max_t t^alpha ||f(t)||_inf`` over snapshots with ``t_min <= t <= T``."""
    if t_min <= 0:
        raise ValueError("t_min must be positive")
    return max(g.t ** alpha * float(np.max(g.values)) for g in _in_window(traj, T, t_min))


def main_theorem_table(traj, alpha, T, t_min, ladder=None):
    """Rows ``(t, t^{(d+alpha)/2} ||f(t)||_{C^alpha})`` for snapshots in the window."""
    if t_min <= 0:
        raise ValueError("t_min must be positive")
    rows = []
    for g in _in_window(traj, T, t_min):
        rows.append((g.t, g.t ** (0.5 * (g.d + alpha)) * holder_norm(g, alpha, ladder)))
    return rows


def main_theorem_statistic(traj, alpha, T, t_min, ladder=None) -> float:
    return max(v for _, v in main_theorem_table(traj, alpha, T, t_min, ladder))


def besov_audit(traj, g1, ladder=None, dirs=None):
    """Per-snapshot fitted constant of ``||Delta_h^2 f||_1 <= 4c (1^t)^{-1/2} (1+G_1) |h|``.

    ``g1`` maps each snapshot to its ``G_1`` value (already a running sup in
    time if the caller wants the exact functional). Returns a list of dicts
    with the per-``t`` constant ``c_hat`` and the per-``h`` ratios.
    """
    rows = []
    for g, G in zip((GridFunction.of(s) for s in traj), g1):
        lad, _, nrm = difference_norms(g, 2, 1.0, ladder, dirs)
        worst = nrm.max(axis=1)
        scale = 4.0 / math.sqrt(min(1.0, g.t)) * (1.0 + G) * lad
        ratios = worst / scale
        rows.append({"t": g.t, "G1": G, "c_hat": float(ratios.max()), "h": lad.tolist(),
                     "ratio": ratios.tolist()})
    return rows


# --------------------------------------------------------- kernel bounds


def _kernel_grid(std, t, reach, pts_per_sd=24):
    """Symmetric grid covering ``+-(8 sqrt(t) std + reach)`` with the origin as a node."""
    axes = []
    for s in std:
        sd = s * math.sqrt(t)
        h = sd / pts_per_sd
        m = int(math.ceil((8.0 * sd + reach) / h))
        axes.append(h * np.arange(-m, m + 1))
    return axes


def _gauss(X, t, inv, norm):
    q = np.einsum("...i,ij,...j->...", X, inv, X) / t
    return norm * np.exp(-0.5 * q)


def kernel_norms(hk, t, h_vec, n, p, which):
    """``||Delta_h^n K||_p`` with ``K`` the kernel (``which='f'``) or its gradient.

    The kernel is evaluated in closed form at every ``x + j h``; only the
    quadrature is discrete. ``h_vec = 0`` gives the norm of ``K`` itself.
    """
    h_vec = np.asarray(h_vec, dtype=np.float64)
    axes = _kernel_grid(hk.std, t, n * float(np.linalg.norm(h_vec)))
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    norm = (2.0 * math.pi * t) ** (-hk.d / 2) / math.sqrt(hk.det)
    total = 0.0
    for j in range(n + 1) if h_vec.any() else (0,):
        c = (-1) ** (n - j) * math.comb(n, j) if h_vec.any() else 1.0
        Y = X + j * h_vec
        g = _gauss(Y, t, hk.inv, norm)
        val = g if which == "f" else -(Y @ hk.inv.T) / t * g[..., None]
        total = total + c * val
    mag = np.abs(total) if which == "f" else np.sqrt(np.sum(total ** 2, axis=-1))
    if p == math.inf:
        return float(mag.max())
    return float(np.sum(trapezoid_weights(axes) * mag ** p) ** (1.0 / p))


BOUNDS = ("K", "gradK", "DeltaK", "DeltaGradK")


def verify_kernel_bounds(hk, t_ladder, h_ladder, p_set, n=2, dirs=None):
    """Ratios of each kernel norm to its bound shape over the ladders.

    Shapes: ``t^{-d/2q}`` and ``t^{-d/2q - 1/2}`` for the kernel and its
    gradient, times ``(1 ^ |h|/sqrt(t))^n`` for the difference versions.
    Returns a list of row dicts ``(bound, t, h, p, lhs, shape, ratio)``; the
    ratio is maximized over directions.
    """
    t_ladder = np.asarray(t_ladder, dtype=np.float64)
    if t_ladder.max() / t_ladder.min() < 1e3 - 1e-9:
        raise ValueError("the t ladder must span at least three decades")
    dirs = directions(hk.d) if dirs is None else dirs
    rows = []
    for p in p_set:
        inv_q = 1.0 - 1.0 / p if p != math.inf else 1.0
        for t in t_ladder:
            base = t ** (-hk.d * inv_q / 2.0)
            for bound, which, extra in (("K", "f", 1.0), ("gradK", "g", t ** -0.5)):
                lhs = kernel_norms(hk, t, np.zeros(hk.d), n, p, which)
                shape = base * extra
                rows.append(dict(bound=bound, d=hk.d, t=float(t), h=0.0, p=p, n=n, lhs=lhs, shape=shape,
                                 ratio=lhs / shape))
            for r in h_ladder:
                cut = min(1.0, r / math.sqrt(t)) ** n
                for bound, which, extra in (("DeltaK", "f", 1.0), ("DeltaGradK", "g", t ** -0.5)):
                    lhs = max(kernel_norms(hk, t, r * e, n, p, which) for e in dirs)
                    shape = base * extra * cut
                    rows.append(dict(bound=bound, d=hk.d, t=float(t), h=float(r), p=p, n=n, lhs=lhs,
                                     shape=shape, ratio=lhs / shape))
    return rows


def fitted_constants(rows):
    """Per ``(bound, p)``: the fitted constant (max ratio) and the spread of the per-``t`` max.

    Spread is ``max_t c(t) / min_t c(t) - 1`` where ``c(t)`` is the largest
    ratio at that ``t`` over the ``h`` ladder.
    """
    out = {}
    for key in sorted({(r["bound"], r["p"]) for r in rows}, key=str):
        sel = [r for r in rows if (r["bound"], r["p"]) == key]
        per_t = {}
        for r in sel:
            per_t[r["t"]] = max(per_t.get(r["t"], 0.0), r["ratio"])
        vals = np.array(list(per_t.values()))
        out[key] = {"c": float(vals.max()), "spread": float(vals.max() / vals.min() - 1.0),
                    "per_t": per_t}
    return out


def write_kernel_table(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bound", "d", "t", "h", "p", "n", "lhs", "rhs_shape", "ratio"])
        for r in rows:
            w.writerow([r["bound"], r["d"], repr(r["t"]), repr(r["h"]), r["p"], r["n"],
                        repr(r["lhs"]), repr(r["shape"]), repr(r["ratio"])])


# -------------------------------------------------------- exponent iteration


def bootstrap_exponents(d, p, alpha0):
    """Iterate ``a -> max(d/2, d/(2q) + a/p - 1/2)`` from ``alpha0`` down to ``d/2``.

    ``q = p/(p-1)``; requires ``1 < p < d/(d-1)`` (any ``p > 1`` when ``d = 1``)
    and ``alpha0 >= d/2``.
    """
    d = int(d)
    if d < 1:
        raise BesovParamError("d must be a positive integer")
    upper = math.inf if d == 1 else d / (d - 1)
    if not 1.0 < p < upper:
        raise BesovParamError(f"p must lie in (1, {upper}), got {p}")
    if alpha0 < d / 2:
        raise BesovParamError(f"alpha0 must be at least d/2 = {d / 2}")
    q = p / (p - 1.0)
    seq = [float(alpha0)]
    # the gap to d/2 shrinks geometrically, so this bound is never reached
    for _ in range(10_000):
        if seq[-1] <= d / 2:
            break
        seq.append(max(d / 2, d / (2 * q) + seq[-1] / p - 0.5))
    return seq


def bootstrap_length_bound(d, p, alpha0):
    """Exact length of the exponent sequence, from the closed-form gap recursion."""
    g0 = alpha0 - d / 2
    if g0 <= 0:
        return 1
    c = p / (2.0 * (p - 1.0))
    # a positive gap always takes at least one step
    return max(1, int(math.ceil(math.log((g0 + c) / c) / math.log(p) - 1e-12))) + 1
