"""Grid estimates of the projected density and of the conditional drift.

The marginal density on ``F`` is a product-Gaussian kernel density estimate;
the conditional expectation of ``pi_F B`` given ``pi_F u = x'`` is the
Nadaraya-Watson regression with the same kernel. Because the kernel factorizes
over axes, both reduce to dense matrix products of per-axis kernel matrices.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

MIN_SAMPLES = 100
W_MIN = 10.0
DEFAULT_EXTENT = 6.0
_CHUNK = 4096


class InsufficientDataError(ValueError):
    pass


class UnreliableEstimateWarning(RuntimeWarning):
    pass


@dataclass
class GridSpec:
    """Regular tensor grid: per-axis ``(lo, hi)`` ranges and node counts."""

    ranges: list
    nodes: list

    def __post_init__(self):
        self.ranges = [(float(a), float(b)) for a, b in self.ranges]
        self.nodes = [int(n) for n in self.nodes]
        if len(self.ranges) != len(self.nodes):
            raise ValueError("ranges and nodes disagree on the dimension")
        if not 1 <= len(self.nodes) <= 3:
            raise ValueError(f"grids are limited to 1 <= d <= 3, got d={len(self.nodes)}")

    @property
    def d(self):
        return len(self.nodes)

    def axes(self):
        return [np.linspace(a, b, n) for (a, b), n in zip(self.ranges, self.nodes)]

    def to_json(self):
        return {"ranges": [list(r) for r in self.ranges], "nodes": list(self.nodes)}

    @classmethod
    def around(cls, samples, nodes, extent=DEFAULT_EXTENT):
        """Grid spanning ``mean +- extent * std`` of the samples on every axis."""
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        mu = samples.mean(axis=0)
        sd = samples.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        n = [nodes] * samples.shape[1] if np.isscalar(nodes) else list(nodes)
        return cls([(m - extent * s, m + extent * s) for m, s in zip(mu, sd)], n)

    @classmethod
    def symmetric(cls, half_widths, nodes):
        hw = np.atleast_1d(half_widths)
        n = [nodes] * hw.size if np.isscalar(nodes) else list(nodes)
        return cls([(-w, w) for w in hw], n)


def trapezoid_weights(axes):
    """Tensor-product trapezoid weights of shape ``(n1, ..., nd)``."""
    w = None
    for ax in axes:
        h = np.diff(ax)
        wa = np.zeros(ax.size)
        wa[:-1] += 0.5 * h
        wa[1:] += 0.5 * h
        w = wa if w is None else np.multiply.outer(w, wa)
    return w


def mesh(axes):
    """Node coordinates, shape ``(n1, ..., nd, d)``."""
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass
class DensityGrid:
    axes: list
    values: np.ndarray
    bandwidth: np.ndarray | None = None
    t: float | None = None
    mass_defect: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=np.float64) for a in self.axes]
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != tuple(a.size for a in self.axes):
            raise ValueError("values do not match the grid shape")

    @property
    def d(self):
        return len(self.axes)

    @property
    def spacing(self):
        return np.array([a[1] - a[0] for a in self.axes])

    def weights(self):
        return trapezoid_weights(self.axes)

    def mass(self):
        return float(np.sum(self.weights() * self.values))

    def nodes(self):
        return mesh(self.axes)

    def with_values(self, values, **kw):
        return DensityGrid(self.axes, values, kw.get("bandwidth", self.bandwidth), kw.get("t", self.t),
                           kw.get("mass_defect", self.mass_defect), dict(self.meta))

    def grid_spec(self):
        return GridSpec([(a[0], a[-1]) for a in self.axes], [a.size for a in self.axes])


@dataclass
class DriftField:
    axes: list
    values: np.ndarray          # (n1, ..., nd, d)
    mask: np.ndarray            # True where the regression had too little evidence
    t: float | None = None
    bandwidth: np.ndarray | None = None
    weight_sum: np.ndarray | None = field(default=None, repr=False)

    @property
    def d(self):
        return len(self.axes)

    def magnitude(self):
        return np.sqrt(np.sum(self.values ** 2, axis=-1))

    def at(self, x):
        """Multilinear interpolation of the drift at a point ``x``."""
        return _interp_point(self.axes, self.values, np.atleast_1d(x))


def _interp_point(axes, values, x):
    idx, frac = [], []
    for ax, xi in zip(axes, x):
        h = ax[1] - ax[0]
        s = np.clip((xi - ax[0]) / h, 0, ax.size - 1 - 1e-12)
        i = int(np.floor(s))
        idx.append(i)
        frac.append(s - i)
    out = 0.0
    for corner in np.ndindex(*(2,) * len(axes)):
        w = 1.0
        sl = []
        for c, i, f, ax in zip(corner, idx, frac, axes):
            w *= f if c else 1.0 - f
            sl.append(min(i + c, ax.size - 1))
        out = out + w * values[tuple(sl)]
    return out


def silverman_bandwidth(samples):
    """Per-axis Silverman rule ``sd_j (4 / ((d + 2) n))^{1/(d + 4)}``."""
    samples = np.atleast_2d(samples)
    n, d = samples.shape
    return samples.std(axis=0, ddof=1) * (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))


def curvature_bandwidth(samples, n=None):
    """Per-axis ``sd_j n^{-1/(d + 8)}``, the rate suited to second derivatives.

    ``n`` defaults to the number of samples; pass the number of independent
    draws when the samples are correlated (pooled time windows).
    """
    samples = np.atleast_2d(samples)
    m, d = samples.shape
    return samples.std(axis=0, ddof=1) * float(n or m) ** (-1.0 / (d + 8.0))


def _samples_of(obj):
    x = obj.x if hasattr(obj, "x") else obj
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def _resolve(samples, grid, bandwidth, nodes):
    n, d = samples.shape
    if d > 3:
        raise ValueError(f"grid estimators are limited to d <= 3, got d={d}")
    if n < MIN_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if bandwidth is None or (isinstance(bandwidth, str) and bandwidth == "silverman"):
        h = silverman_bandwidth(samples)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (d,)).copy()
    if np.any(h <= 0):
        raise InsufficientDataError("degenerate samples: bandwidth is zero, pass one explicitly")
    if grid is None:
        grid = GridSpec.around(samples, nodes)
    axes = grid.axes() if isinstance(grid, GridSpec) else [np.asarray(a, dtype=np.float64) for a in grid]
    if len(axes) != d:
        raise ValueError(f"grid has dimension {len(axes)}, samples have {d}")
    return axes, h


def _kernel_sums(samples, axes, h, targets=None):
    """``sum_s prod_j exp(-(x_j - X_sj)^2 / 2h_j^2) * [1, targets_s...]`` on the grid.

    Returns an array of shape ``grid + (1 + n_targets,)``.
    """
    n, d = samples.shape
    k = 1 if targets is None else 1 + targets.shape[1]
    shape = tuple(a.size for a in axes)
    acc = np.zeros(shape + (k,))
    for lo in range(0, n, _CHUNK):
        xs = samples[lo:lo + _CHUNK]
        Ks = [np.exp(-0.5 * ((ax[None, :] - xs[:, j, None]) / h[j]) ** 2) for j, ax in enumerate(axes)]
        W = np.ones((xs.shape[0], k))
        if targets is not None:
            W[:, 1:] = targets[lo:lo + _CHUNK]
        if d == 1:
            acc += Ks[0].T @ W
            continue
        rest = Ks[1] if d == 2 else (Ks[1][:, :, None] * Ks[2][:, None, :]).reshape(xs.shape[0], -1)
        for c in range(k):
            acc[..., c] += ((Ks[0] * W[:, c, None]).T @ rest).reshape(shape)
    return acc


def kde_marginal(snapshot, grid=None, bandwidth="silverman", nodes=64) -> DensityGrid:
    """Gaussian product-kernel density estimate of the samples on a grid."""
    samples = _samples_of(snapshot)
    axes, h = _resolve(samples, grid, bandwidth, nodes)
    n, d = samples.shape
    sums = _kernel_sums(samples, axes, h)[..., 0]
    norm = n * np.prod(np.sqrt(2.0 * np.pi) * h)
    dg = DensityGrid(axes, sums / norm, bandwidth=h, t=getattr(snapshot, "t", None))
    dg.mass_defect = abs(dg.mass() - 1.0)
    return dg


def estimate_drift(snapshot, grid=None, bandwidth="silverman", nu=None, ksq=None, w_min=W_MIN,
                   nodes=64, targets=None) -> DriftField:
    """Nadaraya-Watson estimate of ``nu A_F x' + E[pi_F B | pi_F u = x']``.

    ``ksq`` are the Stokes eigenvalues of the coordinates of ``F``. Nodes whose
    kernel-weight sum, counted in units of the peak kernel value, is below
    ``w_min`` are masked; there the regression part is set to zero and only
    the explicit linear term remains.
    """
    samples = _samples_of(snapshot)
    y = np.asarray(snapshot.b if targets is None else targets, dtype=np.float64)
    y = y[:, None] if y.ndim == 1 else y
    axes, h = _resolve(samples, grid, bandwidth, nodes)
    d = samples.shape[1]
    nu = getattr(snapshot, "nu", None) if nu is None else nu
    if nu is None:
        raise ValueError("estimate_drift needs the viscosity nu")
    ksq = np.ones(d) if ksq is None else np.asarray(ksq, dtype=np.float64)
    sums = _kernel_sums(samples, axes, h, y)
    wsum = sums[..., 0]
    mask = wsum < w_min
    with np.errstate(invalid="ignore", divide="ignore"):
        reg = sums[..., 1:] / wsum[..., None]
    reg[mask] = 0.0
    X = mesh(axes)
    drift = nu * ksq * X + reg
    return DriftField(axes, drift, mask, t=getattr(snapshot, "t", None), bandwidth=h, weight_sum=wsum)


def _check_grids(drift, density):
    if drift.values.shape[:-1] != density.values.shape:
        raise ValueError("drift and density live on different grids")
    for a, b in zip(drift.axes, density.axes):
        if a.size != b.size or not np.allclose(a, b):
            raise ValueError("drift and density live on different grids")


def _mask_warning(drift, density, w, f):
    total = np.sum(w * f)
    lost = np.sum((w * f)[drift.mask])
    if total > 0 and lost > 0.1 * total:
        warnings.warn(f"masked nodes carry {lost / total:.1%} of the mass; estimate unreliable",
                      UnreliableEstimateWarning, stacklevel=3)


def moment_G(drift: DriftField, density: DensityGrid, p=1.0) -> float:
    """``(int |G|^p f)^{1/p}`` over unmasked nodes (trapezoid quadrature)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    _check_grids(drift, density)
    w = density.weights()
    f = density.values
    _mask_warning(drift, density, w, f)
    keep = ~drift.mask
    val = np.sum((w * drift.magnitude() ** p * f)[keep])
    return float(val ** (1.0 / p))


def exp_moment_G(drift: DriftField, density: DensityGrid, lam) -> float:
    """Optional diagnostic ``int exp(lam |G|) f`` over unmasked nodes."""
    _check_grids(drift, density)
    w = density.weights()
    keep = ~drift.mask
    return float(np.sum((w * np.exp(lam * drift.magnitude()) * density.values)[keep]))


def product_norm(drift: DriftField, density: DensityGrid, p=1.0, sup_density=None):
    """``(||G f||_{L^p}, bound)`` with ``bound = G_p ||f||_inf^{1/q}``.

    ``sup_density`` stands for ``F^{d/2}(t) t^{-d/2}``; by default the grid
    maximum of ``f`` itself, which is the sharpest admissible value.
    """
    _check_grids(drift, density)
    w = density.weights()
    f = density.values
    keep = ~drift.mask
    lhs = float(np.sum((w * (drift.magnitude() * f) ** p)[keep]) ** (1.0 / p))
    gp = moment_G(drift, density, p)
    fmax = float(np.max(f)) if sup_density is None else float(sup_density)
    inv_q = 1.0 - 1.0 / p
    return lhs, gp * fmax ** inv_q


def bootstrap_moment_G(snapshot, grid, p=1.0, n_boot=50, rng=None, bandwidth="silverman", nu=None, ksq=None,
                       level=0.95):
    """Percentile interval of ``G_p`` under member resampling."""
    rng = np.random.default_rng(0) if rng is None else rng
    x = _samples_of(snapshot)
    b = np.asarray(snapshot.b)
    nu = snapshot.nu if nu is None else nu
    vals = []
    for _ in range(n_boot):
        idx = rng.integers(0, x.shape[0], x.shape[0])
        sub = _Resampled(x[idx], b[idx], nu, getattr(snapshot, "t", None))
        dens = kde_marginal(sub, grid, bandwidth)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnreliableEstimateWarning)
            vals.append(moment_G(estimate_drift(sub, grid, bandwidth, nu, ksq), dens, p))
    a = (1.0 - level) / 2.0
    return tuple(np.quantile(vals, [a, 1.0 - a]))


@dataclass
class _Resampled:
    x: np.ndarray
    b: np.ndarray
    nu: float
    t: float | None


# ------------------------------------------------------------------ I/O


def _grid_header(axes):
    return [f"x{j + 1}" for j in range(len(axes))]


def save_density(dg: DensityGrid, path_csv, extra=None):
    """CSV of ``(x1..xd, value)`` rows plus a JSON sidecar next to it."""
    X = dg.nodes().reshape(-1, dg.d)
    rows = np.column_stack([X, dg.values.reshape(-1)])
    np.savetxt(path_csv, rows, delimiter=",", header=",".join(_grid_header(dg.axes) + ["f"]),
               comments="", fmt="%.17g")
    side = {"grid": GridSpec([(a[0], a[-1]) for a in dg.axes], [a.size for a in dg.axes]).to_json(),
            "bandwidth": None if dg.bandwidth is None else [float(v) for v in dg.bandwidth],
            "t": dg.t, "mass_defect": dg.mass_defect, "mass": dg.mass()}
    side.update(extra or {})
    with open(_sidecar(path_csv), "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def load_density(path_csv) -> DensityGrid:
    with open(_sidecar(path_csv)) as fh:
        side = json.load(fh)
    spec = GridSpec(side["grid"]["ranges"], side["grid"]["nodes"])
    data = np.loadtxt(path_csv, delimiter=",", skiprows=1, ndmin=2)
    vals = data[:, -1].reshape(spec.nodes)
    bw = side.get("bandwidth")
    return DensityGrid(spec.axes(), vals, None if bw is None else np.array(bw), side.get("t"),
                       side.get("mass_defect", 0.0))


def save_drift(df: DriftField, path_csv, extra=None):
    d = df.d
    X = mesh(df.axes).reshape(-1, d)
    rows = np.column_stack([X, df.values.reshape(-1, d), df.mask.reshape(-1).astype(int)])
    header = _grid_header(df.axes) + [f"G{j + 1}" for j in range(d)] + ["masked"]
    np.savetxt(path_csv, rows, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    side = {"grid": GridSpec([(a[0], a[-1]) for a in df.axes], [a.size for a in df.axes]).to_json(),
            "bandwidth": None if df.bandwidth is None else [float(v) for v in df.bandwidth],
            "t": df.t, "masked_nodes": int(df.mask.sum())}
    side.update(extra or {})
    with open(_sidecar(path_csv), "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def load_drift(path_csv) -> DriftField:
    with open(_sidecar(path_csv)) as fh:
        side = json.load(fh)
    spec = GridSpec(side["grid"]["ranges"], side["grid"]["nodes"])
    d = spec.d
    data = np.loadtxt(path_csv, delimiter=",", skiprows=1, ndmin=2)
    vals = data[:, d:2 * d].reshape(tuple(spec.nodes) + (d,))
    mask = data[:, -1].astype(bool).reshape(spec.nodes)
    bw = side.get("bandwidth")
    return DriftField(spec.axes(), vals, mask, side.get("t"), None if bw is None else np.array(bw))


def _sidecar(path_csv):
    p = str(path_csv)
    return (p[:-4] if p.endswith(".csv") else p) + ".json"
