"""Marginal Fokker-Planck equation on ``F`` by heat-kernel time marching.

The equation is ``d_t f = 1/2 A_F f + div(G f)`` with ``A_F g = Tr(S D^2 g)``,
``S = pi_F Sigma Sigma* pi_F``. Its heat kernel ``p_t`` is the centered Gaussian
with covariance ``t S``; the variation-of-constants form, marched step by step,
reads

    f(t + dt) = p_dt * f(t) + dt (grad p_{dt/2}) * (G f)

where ``*`` is convolution and the drift is taken at the step midpoint. All
grid convolutions are separable, which requires ``S`` to be diagonal; that is
always the case for the diagonal noise models of this package.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ive

from . import kernels
from .density import DensityGrid, DriftField, _interp_point, mesh, trapezoid_weights

log = logging.getLogger(__name__)

EPS_NEG = 1e-6
TRUNCATE = 8.0


class FPDomainError(ValueError):
    pass


class FPInstabilityError(ArithmeticError):
    def __init__(self, t, min_value):
        self.t = t
        self.min_value = min_value
        super().__init__(f"density undershoot {min_value:.3g} at t={t:.6g}; "
                         "reduce dt or enlarge the grid")


class HeatKernelF:
    """Gaussian kernel of ``1/2 A_F``: mean zero, covariance ``t * cov``."""

    def __init__(self, cov):
        cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
            raise FPDomainError("covariance must be a symmetric square matrix")
        ev = np.linalg.eigvalsh(cov)
        if np.any(ev <= 0):
            raise FPDomainError("covariance must be positive definite")
        self.cov = cov
        self.inv = np.linalg.inv(cov)
        self.det = float(np.prod(ev))
        self.d = cov.shape[0]

    @property
    def diagonal(self):
        return bool(np.allclose(self.cov, np.diag(np.diag(self.cov))))

    @property
    def std(self):
        return np.sqrt(np.diag(self.cov))

    def peak(self, t):
        return (2.0 * math.pi * t) ** (-self.d / 2) / math.sqrt(self.det)


def kernel_eval(hk: HeatKernelF, t, x):
    """Density of ``N(0, t cov)`` at ``x`` (trailing axis of length ``d``)."""
    if t <= 0:
        raise FPDomainError(f"heat kernel needs t > 0, got {t}")
    x = np.asarray(x, dtype=np.float64)
    if hk.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    q = np.einsum("...i,ij,...j->...", x, hk.inv, x) / t
    return hk.peak(t) * np.exp(-0.5 * q)


def kernel_grad(hk: HeatKernelF, t, x):
    """Gradient of :func:`kernel_eval` in ``x``, shape ``x.shape``."""
    x = np.asarray(x, dtype=np.float64)
    if hk.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return -(x @ hk.inv.T) / t * kernel_eval(hk, t, x)[..., None]


# ---------------------------------------------------------- grid convolution


def _axis_kernel(var, h, deriv=False):
    """Correlation weights of the 1-D heat kernel with variance ``var`` (or of its derivative).

    When the kernel spans at least one grid spacing it is sampled from the
    Gaussian, truncated at 8 standard deviations and normalized to unit sum;
    the derivative kernel is normalized to differentiate affine functions
    exactly. Narrower kernels would collapse to the identity when sampled, so
    they use the discrete Gaussian ``exp(-s) I_n(s)`` (``s = var / h^2``),
    whose variance is exact, and its central difference for the derivative.
    """
    s = var / (h * h)
    if s >= 1.0:
        r = max(1, int(math.ceil(TRUNCATE * math.sqrt(var) / h)))
        z = h * np.arange(-r, r + 1)
        g = np.exp(-0.5 * z * z / var)
        g /= g.sum()
        if not deriv:
            return g
        # correlation weight at offset z realizes the convolution kernel at -z
        w = z / var * g
        return w / np.sum(w * z)
    r = max(3, int(math.ceil(TRUNCATE * math.sqrt(s))))
    g = ive(np.arange(-r, r + 1), s)
    g /= g.sum()
    if not deriv:
        return g
    return (np.concatenate([[0.0, 0.0], g]) - np.concatenate([g, [0.0, 0.0]])) / (2.0 * h)


def heat_convolve(values, axes, hk: HeatKernelF, t):
    """``p_t * f`` on the grid (zero outside)."""
    if not hk.diagonal:
        raise FPDomainError("grid convolution needs a diagonal covariance")
    out = values
    for a, ax in enumerate(axes):
        out = kernels.correlate_axis(out, _axis_kernel(t * hk.cov[a, a], ax[1] - ax[0]), a)
    return out


def grad_heat_convolve(vec_values, axes, hk: HeatKernelF, t):
    """``sum_a (d_a p_t) * g_a`` for a vector field ``g`` of shape ``grid + (d,)``."""
    if not hk.diagonal:
        raise FPDomainError("grid convolution needs a diagonal covariance")
    d = len(axes)
    hs = [ax[1] - ax[0] for ax in axes]
    smooth = [_axis_kernel(t * hk.cov[a, a], hs[a]) for a in range(d)]
    deriv = [_axis_kernel(t * hk.cov[a, a], hs[a], deriv=True) for a in range(d)]
    total = np.zeros(vec_values.shape[:-1])
    for a in range(d):
        g = np.ascontiguousarray(vec_values[..., a])
        for b in range(d):
            g = kernels.correlate_axis(g, deriv[b] if b == a else smooth[b], b)
        total += g
    return total


# ---------------------------------------------------------------- solver


@dataclass
class FPState:
    density: DensityGrid
    t: float
    history: list = field(default_factory=list)  # (t, mass, G1)

    @property
    def mass(self):
        return self.density.mass()


def _interp_drift(schedule, t):
    """Drift values at time ``t``, linear in time between schedule entries."""
    times = [s[0] for s in schedule]
    if t <= times[0]:
        return schedule[0][1].values
    if t >= times[-1]:
        return schedule[-1][1].values
    j = int(np.searchsorted(times, t))
    (t0, d0), (t1, d1) = schedule[j - 1], schedule[j]
    w = (t - t0) / (t1 - t0)
    return (1.0 - w) * d0.values + w * d1.values


def regrid_drift(drift: DriftField, axes) -> DriftField:
    """Multilinear interpolation of a drift field onto other grid axes.

    Nodes outside the source grid keep the nearest source value.
    """
    same = len(axes) == drift.d and all(a.size == b.size and np.allclose(a, b) for a, b in zip(axes, drift.axes))
    if same:
        return drift
    X = mesh(axes)
    out = np.empty(X.shape[:-1] + (drift.d,))
    mask = np.zeros(X.shape[:-1], dtype=bool)
    flatX = X.reshape(-1, drift.d)
    vals = out.reshape(-1, drift.d)
    mflat = mask.reshape(-1)
    fmask = drift.mask.astype(np.float64)
    for i, x in enumerate(flatX):
        vals[i] = drift.at(x)
        mflat[i] = _interp_point(drift.axes, fmask, x) > 0.5
    return DriftField([np.asarray(a) for a in axes], out, mask, drift.t, drift.bandwidth)


def duhamel_step(state: FPState, drift, dt, hk: HeatKernelF, eps_neg=EPS_NEG, renormalize=False) -> FPState:
    """One step of the marching scheme with a midpoint drift.

    ``drift`` is a :class:`DriftField` on the state grid or a raw value array of
    shape ``grid + (d,)``.
    """
    if dt <= 0:
        raise FPDomainError("dt must be positive")
    dens = state.density
    G = drift.values if isinstance(drift, DriftField) else np.asarray(drift)
    f = dens.values
    new = heat_convolve(f, dens.axes, hk, dt) + dt * grad_heat_convolve(G * f[..., None], dens.axes, hk, 0.5 * dt)
    t_new = state.t + dt
    low = float(new.min())
    if low < -eps_neg:
        raise FPInstabilityError(t_new, low)
    out = dens.with_values(new, t=t_new)
    mass = out.mass()
    out.mass_defect = abs(mass - 1.0)
    if renormalize and mass > 0:
        out.values /= mass
    return FPState(out, t_new, list(state.history))


def _g1(G, dens):
    w = dens.weights()
    return float(np.sum(w * np.sqrt(np.sum(G ** 2, axis=-1)) * dens.values))


def solve_fp(x0, schedule, T, dt, axes, hk: HeatKernelF, out_times=None, eps_neg=EPS_NEG,
             renormalize=False, t_first=None):
    """March the density from a Dirac mass at ``x0`` up to ``T``.

    ``schedule`` is a list of ``(t, DriftField)`` sorted in time; drift between
    entries is interpolated linearly and fields are moved onto ``axes`` first.
    The first step is analytic: ``p_{t1}(x - x0 + t1 G(x0))`` with ``t1`` at
    least ``dt`` and long enough for the Gaussian to span a few grid cells.
    Returns the states at ``out_times`` (default: schedule times in ``(t1, T]``).
    """
    axes = [np.asarray(a, dtype=np.float64) for a in axes]
    d = len(axes)
    if hk.d != d:
        raise FPDomainError("heat kernel and grid disagree on the dimension")
    if not schedule:
        raise FPDomainError("drift schedule is empty")
    schedule = sorted(((float(t), regrid_drift(df, axes)) for t, df in schedule), key=lambda s: s[0])
    x0 = np.broadcast_to(np.asarray(x0, dtype=np.float64), (d,))
    hmax = max(ax[1] - ax[0] for ax in axes)
    if t_first is None:
        t_first = max(dt, (2.0 * hmax) ** 2 / float(np.min(np.diag(hk.cov))))
    n_first = max(1, int(math.ceil(t_first / dt - 1e-9)))
    t1 = n_first * dt
    n_total = int(round(T / dt))
    if n_first > n_total:
        raise FPDomainError(f"first analytic step t1={t1} exceeds T={T}; refine the grid")
    if out_times is None:
        out_times = [t for t, _ in schedule if t1 - 1e-12 <= t <= T + 1e-12]
    out_steps = {int(round(t / dt)): t for t in out_times}
    if any(s < n_first for s in out_steps):
        raise FPDomainError(f"output times before the first step t1={t1} are not resolved")

    g0 = schedule[0][1]
    G0 = _interp_point_field(g0, x0)
    X = mesh(axes)
    vals = kernel_eval(hk, t1, X - x0 + t1 * G0)
    dens = DensityGrid(axes, vals, t=t1)
    dens.mass_defect = abs(dens.mass() - 1.0)
    state = FPState(dens, t1, [(t1, dens.mass(), _g1(_interp_drift(schedule, t1), dens))])
    results = []
    if n_first in out_steps:
        results.append(state)
    for n in range(n_first, n_total):
        G = _interp_drift(schedule, (n + 0.5) * dt)
        state = duhamel_step(state, G, dt, hk, eps_neg, renormalize)
        state.t = (n + 1) * dt
        state.density.t = state.t
        if (n + 1) in out_steps:
            state.history.append((state.t, state.density.mass(), _g1(_interp_drift(schedule, state.t), state.density)))
            results.append(state)
    return results


def _interp_point_field(df: DriftField, x):
    return _interp_point(df.axes, df.values, x)


def stationary_residual(k: DensityGrid, drift: DriftField, cov) -> float:
    """L1 norm of ``1/2 Tr(S D^2 k) + div(G k)`` on interior nodes.

    Central differences throughout; ``cov`` is ``S``. The outermost layer of
    nodes is left out so that every stencil is centered.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    f = k.values
    d = k.d
    hs = k.spacing
    lhs = np.zeros_like(f)
    for a in range(d):
        for b in range(d):
            if cov[a, b] == 0.0:
                continue
            if a == b:
                sec = np.zeros_like(f)
                core = [slice(1, -1) if ax == a else slice(None) for ax in range(d)]
                hi = [slice(2, None) if ax == a else slice(None) for ax in range(d)]
                lo = [slice(None, -2) if ax == a else slice(None) for ax in range(d)]
                sec[tuple(core)] = (f[tuple(hi)] - 2 * f[tuple(core)] + f[tuple(lo)]) / hs[a] ** 2
            else:
                sec = np.gradient(np.gradient(f, hs[a], axis=a), hs[b], axis=b)
            lhs += 0.5 * cov[a, b] * sec
    flux = drift.values * f[..., None]
    for a in range(d):
        lhs += np.gradient(flux[..., a], hs[a], axis=a)
    inner = tuple(slice(1, -1) for _ in range(d))
    inner_axes = [ax[1:-1] for ax in k.axes]
    return float(np.sum(trapezoid_weights(inner_axes) * np.abs(lhs[inner])))


def l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    if a.values.shape != b.values.shape:
        raise FPDomainError("densities live on different grids")
    return float(np.sum(a.weights() * np.abs(a.values - b.values)))


def save_trajectory(states, path_csv, params=None):
    """Long-format CSV ``(t, x1..xd, f)`` and a JSON sidecar with solver parameters."""
    if not states:
        raise ValueError("empty trajectory")
    d = states[0].density.d
    X = mesh(states[0].density.axes).reshape(-1, d)
    blocks = [np.column_stack([np.full(X.shape[0], s.t), X, s.density.values.reshape(-1)]) for s in states]
    header = ["t"] + [f"x{j + 1}" for j in range(d)] + ["f"]
    np.savetxt(path_csv, np.vstack(blocks), delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    side = {"times": [s.t for s in states], "masses": [s.mass for s in states],
            "grid": states[0].density.grid_spec().to_json(), "solver": params or {}}
    p = str(path_csv)
    with open((p[:-4] if p.endswith(".csv") else p) + ".json", "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True)


def peak_trajectory(states):
    return np.array([[s.t, float(s.density.values.max())] for s in states])
