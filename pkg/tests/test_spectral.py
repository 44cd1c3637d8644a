import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsfp.noise import NoiseSpec, SubspaceF
from nsfp.spectral import (InvalidCutoffError, InvalidWavevectorError, SpectralField, SubspaceMismatchError,
                           build_mode_set, canonical, embed_subspace, inner, norms, polarization_frame,
                           project_subspace, stokes_apply)

nonzero_k = st.tuples(*[st.integers(-4, 4)] * 3).filter(lambda k: any(k))


def _lattice_count(N):
    return sum(1 for k in itertools.product(range(-N, N + 1), repeat=3) if 0 < sum(v * v for v in k) <= N * N)


@pytest.mark.parametrize("N,nw", [(1, 6), (2, 32), (3, _lattice_count(3))])
def test_mode_set_counts(N, nw):
    ms = build_mode_set(N)
    assert ms.n_wavevectors == nw
    assert ms.size == 2 * nw
    assert ms.real_dim == 2 * nw
    assert set(np.sum(ms.wavevectors ** 2, axis=1)) <= set(range(1, N * N + 1))


def test_n2_shells():
    ms = build_mode_set(2)
    assert sorted(set(ms.ksq_wv.astype(int))) == [1, 2, 3, 4]


@pytest.mark.parametrize("N", [0, -1, 1.5])
def test_bad_cutoff(N):
    with pytest.raises(InvalidCutoffError):
        build_mode_set(N)


def test_frame_of_z_axis():
    x1, x2 = polarization_frame((0, 0, 1))
    np.testing.assert_array_equal(x1, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(x2, [0.0, 1.0, 0.0])


def test_frame_conjugate_shared():
    a = polarization_frame((0, 0, 1))
    b = polarization_frame((0, 0, -1))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@given(nonzero_k)
def test_frame_orthonormal(k):
    x1, x2 = polarization_frame(k)
    kv = np.asarray(k, dtype=float)
    assert abs(x1 @ kv) < 1e-12 and abs(x2 @ kv) < 1e-12
    assert abs(x1 @ x2) < 1e-12
    assert abs(np.linalg.norm(x1) - 1) < 1e-12 and abs(np.linalg.norm(x2) - 1) < 1e-12
    neg = polarization_frame(tuple(-v for v in k))
    np.testing.assert_array_equal(x1, neg[0])


def test_zero_wavevector_rejected():
    with pytest.raises(InvalidWavevectorError):
        polarization_frame((0, 0, 0))
    with pytest.raises(InvalidWavevectorError):
        canonical((0, 0, 0))


@given(nonzero_k)
def test_canonical_is_sign_representative(k):
    c = canonical(k)
    assert c == canonical(tuple(-v for v in k))
    assert c[next(i for i in range(3) if c[i])] > 0


def test_norms_zero_and_shells():
    ms = build_mode_set(2)
    assert norms(SpectralField.zeros(ms)) == (0.0, 0.0)
    x = np.zeros(ms.real_dim)
    x[ms.real_index((1, 0, 0), 1, "re")] = 1.0
    h, v = norms(SpectralField.from_real(ms, x))
    assert h == pytest.approx(1.0, abs=1e-14) and v == pytest.approx(1.0, abs=1e-14)
    x[:] = 0
    x[ms.real_index((2, 0, 0), 1, "re")] = 1.0
    h, v = norms(SpectralField.from_real(ms, x))
    assert h == pytest.approx(1.0, abs=1e-14) and v == pytest.approx(2.0, abs=1e-14)


def test_real_coordinates_are_isometric():
    ms = build_mode_set(2)
    u = SpectralField.random(ms, np.random.default_rng(1))
    assert norms(u)[0] ** 2 == pytest.approx(float(np.sum(u.real() ** 2)), rel=1e-13)
    assert u.reality_defect() < 1e-15
    assert u.divergence_defect() < 1e-13
    np.testing.assert_allclose(SpectralField.from_real(ms, u.real()).coeffs, u.coeffs, atol=1e-15)


def test_stokes_eigenvalues():
    ms = build_mode_set(2)
    for k, lam in (((1, 0, 0), 1.0), ((1, 1, 1), 3.0)):
        x = np.zeros(ms.real_dim)
        x[ms.real_index(k, 2, "im")] = 1.0
        u = SpectralField.from_real(ms, x)
        np.testing.assert_allclose(stokes_apply(u).coeffs, lam * u.coeffs, atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(-3, 3), st.floats(-3, 3))
def test_stokes_linear(seed, a, b):
    ms = build_mode_set(2)
    rng = np.random.default_rng(seed)
    u, v = SpectralField.random(ms, rng), SpectralField.random(ms, rng)
    lhs = stokes_apply(a * u + b * v).coeffs
    rhs = (a * stokes_apply(u) + b * stokes_apply(v)).coeffs
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_projection_round_trip_and_contraction():
    ms = build_mode_set(2)
    F = SubspaceF.build([(1, 0, 0, 1), (0, 1, 1, 2, "re")], NoiseSpec())
    x = np.array([0.3, -1.2, 2.5])
    u = embed_subspace(x, F, ms)
    np.testing.assert_allclose(project_subspace(u, F), x, atol=1e-12)
    full = np.random.default_rng(4).standard_normal(ms.real_dim)
    full[F.coord_indices(ms)] = 0.0
    assert np.all(project_subspace(SpectralField.from_real(ms, full), F) == 0.0)
    w = SpectralField.random(ms, np.random.default_rng(5))
    assert np.linalg.norm(project_subspace(w, F)) <= norms(w)[0]


def test_projection_outside_cutoff():
    F = SubspaceF.build([(2, 0, 0, 1)], NoiseSpec())
    with pytest.raises(SubspaceMismatchError):
        project_subspace(SpectralField.zeros(build_mode_set(1)), F)


def test_json_round_trip():
    ms = build_mode_set(1)
    u = SpectralField.random(ms, np.random.default_rng(0))
    v = SpectralField.from_json(u.to_json())
    np.testing.assert_array_equal(u.coeffs, v.coeffs)
    assert inner(u, v) == pytest.approx(norms(u)[0] ** 2)
