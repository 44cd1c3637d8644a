"""Noise covariance, observed subspaces and the non-degeneracy checks.

The noise is diagonal in the Galerkin basis: mode ``(k, i)`` receives
amplitude ``sigma(k, i)``, identical for ``k`` and ``-k``. In real coordinates
both the cosine and the sine part of a pair get variance ``sigma^2 dt`` per
step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralError, canonical

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class NoiseSpec:
    """``sigma(k, i) = |k|^{-r}`` unless overridden.

    Precedence: explicit per-mode entry, then per-shell entry (keyed by
    ``|k|^2``), then the power law. ``support`` (canonical wavevectors) and
    ``pols`` zero out everything else.
    """

    r: float = 2.0
    shells: dict = field(default_factory=dict)
    modes: dict = field(default_factory=dict)
    support: tuple | None = None
    pols: tuple = (1, 2)

    def __post_init__(self):
        modes = {(canonical(k), int(p)): float(s) for (k, p), s in dict(self.modes).items()}
        shells = {int(q): float(s) for q, s in dict(self.shells).items()}
        if any(s < 0 for s in modes.values()) or any(s < 0 for s in shells.values()):
            raise SpectralError("noise amplitudes must be nonnegative")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "shells", shells)
        if self.support is not None:
            object.__setattr__(self, "support", tuple(sorted({canonical(k) for k in self.support})))
        object.__setattr__(self, "pols", tuple(sorted(int(p) for p in self.pols)))

    def sigma(self, k, pol) -> float:
        kc = canonical(k)
        if (kc, int(pol)) in self.modes:
            return self.modes[(kc, int(pol))]
        if int(pol) not in self.pols:
            return 0.0
        if self.support is not None and kc not in self.support:
            return 0.0
        q = sum(v * v for v in kc)
        if q in self.shells:
            return self.shells[q]
        return float(q) ** (-0.5 * self.r)

    def sigma_modes(self, mode_set) -> np.ndarray:
        """Amplitude per flat mode of ``mode_set``."""
        return np.array([self.sigma(mode_set.wavevectors[j // 2], j % 2 + 1)
                         for j in range(mode_set.size)])

    def sigma_real(self, mode_set) -> np.ndarray:
        """Amplitude per real coordinate of ``mode_set``."""
        out = np.empty(mode_set.real_dim)
        for p, w in enumerate(mode_set.canonical_wv):
            for i in (1, 2):
                out[4 * p + 2 * (i - 1): 4 * p + 2 * i] = self.sigma(mode_set.wavevectors[w], i)
        return out

    def hilbert_schmidt(self, mode_set) -> float:
        return float(np.sum(self.sigma_modes(mode_set) ** 2))


def parse_mode_entry(entry):
    """``(k1, k2, k3, pol[, part])`` -> ``(canonical k, pol, parts)``."""
    entry = tuple(entry)
    if len(entry) not in (4, 5):
        raise SpectralError(f"subspace entry needs k1,k2,k3,pol[,re|im]: {entry}")
    k = canonical(entry[:3])
    pol = int(entry[3])
    if pol not in (1, 2):
        raise SpectralError(f"polarization must be 1 or 2 in {entry}")
    if len(entry) == 5:
        if entry[4] not in ("re", "im"):
            raise SpectralError(f"part must be 're' or 'im' in {entry}")
        parts = (entry[4],)
    else:
        parts = ("re", "im")
    return k, pol, parts


@dataclass(frozen=True)
class SubspaceF:
    """Span of finitely many real basis directions of ``H``.

    ``coords`` lists ``(k, pol, part)`` with ``k`` canonical; a full mode
    contributes its cosine and sine parts, so ``d = 2 * #pairs * #pols`` unless
    single parts are requested. ``cov_F`` is ``pi_F S S* pi_F`` in these
    coordinates, diagonal with entries ``sigma(k, pol)^2``.
    """

    coords: tuple
    cov_F: np.ndarray = field(repr=False, compare=False)

    @classmethod
    def build(cls, entries, noise: NoiseSpec):
        coords = []
        for e in entries:
            k, pol, parts = parse_mode_entry(e)
            for part in parts:
                c = (k, pol, part)
                if c not in coords:
                    coords.append(c)
        if not coords:
            raise SpectralError("subspace F must contain at least one direction")
        cov = np.diag([noise.sigma(k, pol) ** 2 for k, pol, _ in coords])
        return cls(tuple(coords), cov)

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def wavevectors(self):
        return sorted({k for k, _, _ in self.coords})

    def ksq(self) -> np.ndarray:
        """Stokes eigenvalue of each coordinate of ``F``."""
        return np.array([float(sum(v * v for v in k)) for k, _, _ in self.coords])

    def coord_indices(self, mode_set) -> np.ndarray:
        return np.array([mode_set.real_index(k, pol, part) for k, pol, part in self.coords], dtype=np.int64)

    def labels(self):
        return [f"{k[0]}:{k[1]}:{k[2]}:{pol}:{part}" for k, pol, part in self.coords]


# ------------------------------------------------------------- Smith form


def smith_normal_form(A):
    """Smith normal form over the integers.

    Returns ``(D, P, Q)`` with ``D = P @ A @ Q``, ``P`` and ``Q`` unimodular and
    ``D`` diagonal with ``D[i,i] | D[i+1,i+1]`` and nonnegative entries.
    Arithmetic uses Python integers, so nothing can overflow.
    """
    A = [[int(v) for v in row] for row in np.asarray(A, dtype=object).tolist()]
    m = len(A)
    n = len(A[0]) if m else 0
    D = [row[:] for row in A]
    P = [[int(i == j) for j in range(m)] for i in range(m)]
    Q = [[int(i == j) for j in range(n)] for i in range(n)]

    def swap_rows(i, j):
        D[i], D[j] = D[j], D[i]
        P[i], P[j] = P[j], P[i]

    def swap_cols(i, j):
        for row in D:
            row[i], row[j] = row[j], row[i]
        for row in Q:
            row[i], row[j] = row[j], row[i]

    def add_row(src, dst, f):  # row_dst += f * row_src
        D[dst] = [a + f * b for a, b in zip(D[dst], D[src])]
        P[dst] = [a + f * b for a, b in zip(P[dst], P[src])]

    def add_col(src, dst, f):  # col_dst += f * col_src
        for row in D:
            row[dst] += f * row[src]
        for row in Q:
            row[dst] += f * row[src]

    for t in range(min(m, n)):
        while True:
            nz = [(abs(D[i][j]), i, j) for i in range(t, m) for j in range(t, n) if D[i][j] != 0]
            if not nz:
                break
            _, pi, pj = min(nz)
            swap_rows(t, pi)
            swap_cols(t, pj)
            clean = True
            for i in range(t + 1, m):
                if D[i][t]:
                    add_row(t, i, -(D[i][t] // D[t][t]))
                    clean = clean and D[i][t] == 0
            for j in range(t + 1, n):
                if D[t][j]:
                    add_col(t, j, -(D[t][j] // D[t][t]))
                    clean = clean and D[t][j] == 0
            if not clean:
                continue
            # divisibility: pivot must divide every remaining entry
            bad = next(((i, j) for i in range(t + 1, m) for j in range(t + 1, n)
                        if D[i][j] % D[t][t]), None)
            if bad is None:
                break
            add_row(bad[0], t, 1)
        if t < m and t < n and D[t][t] < 0:
            D[t] = [-v for v in D[t]]
            P[t] = [-v for v in P[t]]
    return (np.array(D, dtype=object), np.array(P, dtype=object), np.array(Q, dtype=object))


def invariant_factors(A):
    D, _, _ = smith_normal_form(A)
    r = min(D.shape)
    return tuple(int(D[i, i]) for i in range(r))


@dataclass
class GeneratorReport:
    generates: bool
    factors: tuple
    witness: np.ndarray | None = None
    message: str = ""


def _z3_report(K) -> GeneratorReport:
    K = [tuple(int(v) for v in k) for k in K]
    if not K:
        return GeneratorReport(False, (0, 0, 0), None, "empty generator set")
    if any(k == (0, 0, 0) for k in K):
        raise SpectralError("generator set may not contain the zero vector")
    A = np.array(K, dtype=object).T  # 3 x |K|, columns are generators
    D, P, Q = smith_normal_form(A)
    factors = tuple(int(D[i, i]) if i < D.shape[1] else 0 for i in range(3))
    if factors != (1, 1, 1):
        obstruction = [f for f in factors if f != 1]
        return GeneratorReport(False, factors, None,
                               f"subgroup has index {'infinite' if 0 in factors else int(np.prod(factors))}"
                               f" in Z^3; invariant factors {factors}, obstruction {obstruction}")
    C = Q[:, :3].dot(P)  # A @ C = I
    return GeneratorReport(True, factors, C, "generates Z^3")


def generates_Z3(K) -> bool:
    """True iff the integer vectors ``K`` generate the group ``(Z^3, +)``."""
    rep = _z3_report(K)
    if not rep.generates and not list(K):
        log.info("generates_Z3: %s", rep.message)
    return rep.generates


def check_F_nondegenerate(noise: NoiseSpec, F: SubspaceF):
    """``(nonsingular, condition number)`` of ``pi_F S S* pi_F``."""
    ev = np.linalg.eigvalsh(F.cov_F)
    ok = bool(np.all(ev > 0))
    cond = float(ev.max() / ev.min()) if ok else float("inf")
    return ok, cond


@dataclass
class HypoellipticityReport:
    passed: bool
    forced: list
    factors: tuple
    witness: np.ndarray | None
    message: str


def hypoellipticity_report(noise: NoiseSpec, mode_set) -> HypoellipticityReport:
    """Lattice-generation test on ``{k : sigma(k,1) > 0 and sigma(k,2) > 0}``."""
    forced = [tuple(int(v) for v in k) for k in mode_set.wavevectors
              if noise.sigma(k, 1) > 0 and noise.sigma(k, 2) > 0]
    rep = _z3_report(forced)
    return HypoellipticityReport(rep.generates, forced, rep.factors, rep.witness, rep.message)
