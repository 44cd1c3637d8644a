"""Truncated wavevector lattice, polarization frames and spectral fields.

Conventions
-----------
A velocity field on the 3-torus is stored by its complex amplitudes
``c(k, i)`` on the basis ``e_k^i = x_k^i exp(i k.x)`` for every mode of a
:class:`ModeSet`, conjugates included. Reality means ``c(-k, i) = conj c(k, i)``.

``||u||_H^2 = sum |c|^2`` over *all* stored modes (each conjugate pair counts
twice). The matching real orthonormal coordinates of a pair ``{k, -k}`` with
polarization ``i`` are ``(sqrt(2) Re c(k, i), sqrt(2) Im c(k, i))`` taken at the
sign-canonical representative ``k`` (first nonzero component positive), so
Parseval holds exactly in these coordinates.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)


class SpectralError(ValueError):
    pass


class InvalidCutoffError(SpectralError):
    pass


class InvalidWavevectorError(SpectralError):
    pass


class SubspaceMismatchError(SpectralError):
    pass


@dataclass(frozen=True, order=True)
class WaveMode:
    k: tuple
    pol: int

    def __post_init__(self):
        k = tuple(int(v) for v in self.k)
        if len(k) != 3:
            raise InvalidWavevectorError(f"wavevector must have 3 components: {self.k}")
        if k == (0, 0, 0):
            raise InvalidWavevectorError("zero wavevector is not a mode")
        if self.pol not in (1, 2):
            raise InvalidWavevectorError(f"polarization must be 1 or 2, got {self.pol}")
        object.__setattr__(self, "k", k)


def canonical(k):
    """Representative of ``{k, -k}`` whose first nonzero component is positive."""
    k = tuple(int(v) for v in k)
    for v in k:
        if v > 0:
            return k
        if v < 0:
            return tuple(-x for x in k)
    raise InvalidWavevectorError("zero wavevector has no canonical form")


def polarization_frame(k):
    """Orthonormal frame ``(x1, x2)`` of ``k``-perp, identical for ``k`` and ``-k``.

    On the canonical representative: take the coordinate axis ``a`` least
    aligned with ``k`` (ties go to the later axis), ``x1 = k x a`` normalized and
    sign-fixed so its first nonzero component is positive, ``x2 = k/|k| x x1``.
    """
    k = np.asarray(k, dtype=np.int64)
    if k.shape != (3,) or not k.any():
        raise InvalidWavevectorError(f"invalid wavevector {k.tolist()}")
    kc = np.asarray(canonical(k), dtype=np.float64)
    absk = np.abs(kc)
    a_idx = 2 - int(np.argmin(absk[::-1]))
    a = np.zeros(3)
    a[a_idx] = 1.0
    x1 = np.cross(kc, a)
    x1 /= np.linalg.norm(x1)
    nz = np.flatnonzero(np.abs(x1) > 1e-14)
    if x1[nz[0]] < 0:
        x1 = -x1
    x2 = np.cross(kc / np.linalg.norm(kc), x1)
    return x1 + 0.0, x2 + 0.0


class ModeSet:
    """All modes ``(k, pol)`` with ``0 < |k| <= N``, in deterministic order.

    Wavevectors are sorted by ``(|k|^2, k1, k2, k3)``; the mode with
    polarization ``i`` of wavevector ``w`` lives at flat index ``2*w + i - 1``.
    """

    def __init__(self, N: int):
        if not isinstance(N, (int, np.integer)) or N < 1:
            raise InvalidCutoffError(f"cutoff N must be a positive integer, got {N!r}")
        self.N = int(N)
        pts = [k for k in itertools.product(range(-N, N + 1), repeat=3)
               if 0 < k[0] ** 2 + k[1] ** 2 + k[2] ** 2 <= N * N]
        pts.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2 + k[2] ** 2, k[0], k[1], k[2]))
        self.wavevectors = np.array(pts, dtype=np.int64)
        self.n_wavevectors = len(pts)
        self._wv_index = {k: i for i, k in enumerate(pts)}
        self.wv_conj = np.array([self._wv_index[tuple(-v for v in k)] for k in pts], dtype=np.int64)
        self.frames = np.empty((len(pts), 2, 3))
        for i, k in enumerate(pts):
            self.frames[i] = polarization_frame(k)
        self.ksq_wv = np.sum(self.wavevectors ** 2, axis=1).astype(np.float64)
        # flat mode arrays
        self.size = 2 * len(pts)
        self.ksq = np.repeat(self.ksq_wv, 2)
        self.conj = (2 * np.repeat(self.wv_conj, 2) + np.tile([0, 1], len(pts))).astype(np.int64)
        # canonical pairs, in order of first appearance of the canonical member
        self.canonical_wv = np.array([i for i, k in enumerate(pts) if canonical(k) == k], dtype=np.int64)
        self._pair_index = {pts[w]: p for p, w in enumerate(self.canonical_wv)}
        self.real_dim = self.size

    @property
    def modes(self):
        return [WaveMode(tuple(int(v) for v in self.wavevectors[w]), i + 1)
                for w in range(self.n_wavevectors) for i in range(2)]

    def wavevector_index(self, k):
        try:
            return self._wv_index[tuple(int(v) for v in k)]
        except KeyError:
            raise SubspaceMismatchError(f"wavevector {tuple(k)} not in mode set N={self.N}") from None

    def mode_index(self, k, pol):
        return 2 * self.wavevector_index(k) + int(pol) - 1

    def real_index(self, k, pol, part):
        """Index of the real coordinate ``part`` ('re'/'im') of mode ``(k, pol)``."""
        kc = canonical(k)
        if kc not in self._pair_index:
            raise SubspaceMismatchError(f"wavevector {tuple(k)} not in mode set N={self.N}")
        return 4 * self._pair_index[kc] + 2 * (int(pol) - 1) + (0 if part == "re" else 1)

    def real_ksq(self):
        """Stokes eigenvalue ``|k|^2`` of every real coordinate."""
        return np.repeat(self.ksq_wv[self.canonical_wv], 4)

    def to_real(self, coeffs):
        coeffs = np.asarray(coeffs)
        lead = coeffs.shape[:-1]
        c = coeffs.reshape(lead + (self.n_wavevectors, 2))[..., self.canonical_wv, :]
        out = np.empty(lead + (len(self.canonical_wv), 2, 2))
        out[..., 0] = SQRT2 * c.real
        out[..., 1] = SQRT2 * c.imag
        return out.reshape(lead + (self.real_dim,))

    def from_real(self, x):
        x = np.asarray(x, dtype=np.float64)
        lead = x.shape[:-1]
        x = x.reshape(lead + (len(self.canonical_wv), 2, 2))
        c = (x[..., 0] + 1j * x[..., 1]) / SQRT2
        out = np.empty(lead + (self.n_wavevectors, 2), dtype=np.complex128)
        out[..., self.canonical_wv, :] = c
        out[..., self.wv_conj[self.canonical_wv], :] = np.conj(c)
        return out.reshape(lead + (self.size,))

    def to_json(self):
        return {"N": self.N,
                "modes": [{"k": [int(v) for v in self.wavevectors[w]], "pol": i + 1}
                          for w in range(self.n_wavevectors) for i in range(2)]}

    def __eq__(self, other):
        return isinstance(other, ModeSet) and other.N == self.N

    def __hash__(self):
        return hash(("ModeSet", self.N))

    def __repr__(self):
        return f"ModeSet(N={self.N}, wavevectors={self.n_wavevectors}, modes={self.size})"


_MODESET_CACHE: dict = {}


def build_mode_set(N: int) -> ModeSet:
    if not isinstance(N, (int, np.integer)) or N < 1:
        raise InvalidCutoffError(f"cutoff N must be a positive integer, got {N!r}")
    ms = _MODESET_CACHE.get(int(N))
    if ms is None:
        ms = _MODESET_CACHE[int(N)] = ModeSet(int(N))
    return ms


@dataclass
class SpectralField:
    mode_set: ModeSet
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != (self.mode_set.size,):
            raise SpectralError(f"expected {self.mode_set.size} coefficients, got {self.coeffs.shape}")

    @classmethod
    def zeros(cls, mode_set):
        return cls(mode_set, np.zeros(mode_set.size, dtype=np.complex128))

    @classmethod
    def from_real(cls, mode_set, x):
        return cls(mode_set, mode_set.from_real(x))

    @classmethod
    def random(cls, mode_set, rng, scale=1.0):
        """Field with iid N(0, scale^2) real coordinates."""
        return cls.from_real(mode_set, scale * rng.standard_normal(mode_set.real_dim))

    def real(self):
        return self.mode_set.to_real(self.coeffs)

    def __add__(self, other):
        _same(self, other)
        return SpectralField(self.mode_set, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same(self, other)
        return SpectralField(self.mode_set, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return SpectralField(self.mode_set, a * self.coeffs)

    __rmul__ = __mul__

    def vector_amplitudes(self):
        """Complex 3-vector Fourier amplitude at every wavevector, shape (nw, 3)."""
        c = self.coeffs.reshape(-1, 2)
        return c[:, 0, None] * self.mode_set.frames[:, 0] + c[:, 1, None] * self.mode_set.frames[:, 1]

    def reality_defect(self):
        return float(np.max(np.abs(self.coeffs - np.conj(self.coeffs[self.mode_set.conj])), initial=0.0))

    def divergence_defect(self):
        amp = self.vector_amplitudes()
        return float(np.max(np.abs(np.einsum("wj,wj->w", amp, self.mode_set.wavevectors)), initial=0.0))

    def to_json(self):
        ms = self.mode_set
        return {"N": ms.N,
                "modes": [{"k": [int(v) for v in ms.wavevectors[j // 2]], "pol": j % 2 + 1,
                           "re": float(self.coeffs[j].real), "im": float(self.coeffs[j].imag)}
                          for j in range(ms.size)]}

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        ms = build_mode_set(int(obj["N"]))
        coeffs = np.zeros(ms.size, dtype=np.complex128)
        for entry in obj["modes"]:
            coeffs[ms.mode_index(entry["k"], entry["pol"])] = complex(entry["re"], entry["im"])
        return cls(ms, coeffs)


def _same(u, v):
    if u.mode_set != v.mode_set:
        raise SubspaceMismatchError(f"mode sets differ: {u.mode_set!r} vs {v.mode_set!r}")


def inner(u: SpectralField, v: SpectralField) -> float:
    """Real inner product on H."""
    _same(u, v)
    return float(np.real(np.vdot(u.coeffs, v.coeffs)))


def norms(u: SpectralField):
    """``(||u||_H, ||u||_V)`` with ``||u||_V^2 = sum |k|^2 |c|^2``."""
    a2 = np.abs(u.coeffs) ** 2
    return float(np.sqrt(a2.sum())), float(np.sqrt((u.mode_set.ksq * a2).sum()))


def stokes_apply(u: SpectralField) -> SpectralField:
    return SpectralField(u.mode_set, u.mode_set.ksq * u.coeffs)


def project_subspace(u: SpectralField, F) -> np.ndarray:
    """Real coordinates of ``pi_F u`` in the coordinate system of ``F``."""
    idx = F.coord_indices(u.mode_set)
    return u.real()[..., idx]


def embed_subspace(x, F, mode_set: ModeSet) -> SpectralField:
    """Field in ``H_N`` whose projection on ``F`` is ``x`` and which is orthogonal to ``F``'s complement."""
    idx = F.coord_indices(mode_set)
    full = np.zeros(mode_set.real_dim)
    full[idx] = x
    return SpectralField.from_real(mode_set, full)
