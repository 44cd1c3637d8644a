import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsfp.noise import (NoiseSpec, SubspaceF, check_F_nondegenerate, generates_Z3, hypoellipticity_report,
                        invariant_factors, smith_normal_form)
from nsfp.spectral import SpectralError, build_mode_set

from oracles import lattice_index_by_minors, reaches_unit_vectors

vec = st.tuples(*[st.integers(-2, 2)] * 3).filter(any)


def test_standard_generators():
    assert generates_Z3([(1, 0, 0), (0, 1, 0), (0, 0, 1)])


def test_even_first_axis():
    K = [(2, 0, 0), (0, 1, 0), (0, 0, 1)]
    assert not generates_Z3(K)
    assert invariant_factors(np.array(K).T) == (1, 1, 2)
    assert not reaches_unit_vectors(K)


def test_single_line():
    assert not generates_Z3([(n, 0, 0) for n in range(-5, 6) if n])


def test_empty_set():
    assert not generates_Z3([])


@settings(max_examples=300, deadline=None)
@given(st.lists(vec, min_size=1, max_size=3))
def test_matches_minor_gcd(K):
    assert generates_Z3(K) == (lattice_index_by_minors(K) == 1)


def test_matches_brute_force_sample():
    vs = [v for v in itertools.product(range(-2, 3), repeat=3) if any(v)]
    rng = np.random.default_rng(0)
    sets = [[vs[i] for i in rng.choice(len(vs), 3, replace=False)] for _ in range(150)]
    # make sure both outcomes are represented
    sets += [[(1, 0, 0), (0, 1, 0), (1, 1, 1)], [(1, 1, 0), (0, 1, 1), (1, 0, 1)]]
    for K in sets:
        assert generates_Z3(K) == reaches_unit_vectors(K), K


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.integers(-6, 6), min_size=4, max_size=4), min_size=3, max_size=3))
def test_smith_form_invariants(rows):
    A = np.array(rows, dtype=object)
    D, P, Q = smith_normal_form(A)
    assert (P.dot(A).dot(Q) == D).all()
    assert abs(round(float(np.linalg.det(P.astype(float))))) == 1
    assert abs(round(float(np.linalg.det(Q.astype(float))))) == 1
    diag = [int(D[i, i]) for i in range(3)]
    off = D.copy()
    for i in range(3):
        off[i, i] = 0
    assert not off.any()
    assert all(x >= 0 for x in diag)
    for a, b in zip(diag, diag[1:]):
        assert (b == 0) or (a != 0 and b % a == 0)
    # product of invariant factors = gcd of the 3x3 minors
    assert int(np.prod(diag)) == lattice_index_by_minors([tuple(c) for c in np.array(rows).T])


@settings(max_examples=50, deadline=None)
@given(st.lists(vec, min_size=3, max_size=3), st.integers(0, 5))
def test_unimodular_change_keeps_answer(K, seed):
    U = np.eye(3, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for _ in range(4):
        i, j = rng.choice(3, 2, replace=False)
        U[i] += int(rng.integers(-2, 3)) * U[j]
    K2 = [tuple(int(v) for v in U @ np.array(k)) for k in K]
    assert generates_Z3(K) == generates_Z3(K2)


def test_nondegenerate_unit():
    F = SubspaceF.build([(1, 0, 0, 1), (0, 1, 0, 2)], NoiseSpec(shells={1: 1.0}))
    assert check_F_nondegenerate(None, F) == (True, 1.0)


def test_nondegenerate_zero_sigma():
    noise = NoiseSpec(modes={((1, 0, 0), 1): 0.0})
    F = SubspaceF.build([(1, 0, 0, 1), (0, 1, 0, 2)], noise)
    ok, cond = check_F_nondegenerate(noise, F)
    assert not ok and cond == float("inf")


def test_nondegenerate_power_law_condition():
    noise = NoiseSpec(r=2.0)
    F = SubspaceF.build([(1, 0, 0, 1), (2, 0, 0, 1)], noise)
    ok, cond = check_F_nondegenerate(noise, F)
    assert ok and cond == pytest.approx(16.0, rel=1e-12)


def test_sigma_precedence():
    noise = NoiseSpec(r=1.0, shells={2: 0.5}, modes={((-1, 0, 0), 2): 3.0})
    assert noise.sigma((1, 0, 0), 2) == 3.0
    assert noise.sigma((1, 0, 0), 1) == 1.0
    assert noise.sigma((1, 1, 0), 1) == 0.5
    assert noise.sigma((2, 0, 0), 1) == pytest.approx(0.5)
    assert NoiseSpec(pols=(1,)).sigma((1, 0, 0), 2) == 0.0


def test_negative_amplitude_rejected():
    with pytest.raises(SpectralError):
        NoiseSpec(shells={1: -1.0})


def test_hypoellipticity_full_shell():
    assert hypoellipticity_report(NoiseSpec(), build_mode_set(1)).passed


def test_hypoellipticity_one_polarization():
    rep = hypoellipticity_report(NoiseSpec(pols=(1,)), build_mode_set(2))
    assert not rep.passed and rep.forced == []


def test_hypoellipticity_line():
    rep = hypoellipticity_report(NoiseSpec(support=((1, 0, 0), (2, 0, 0))), build_mode_set(2))
    assert not rep.passed
    assert 0 in rep.factors
    assert "infinite" in rep.message


def test_witness_solves_identity():
    K = [(1, 1, 0), (0, 1, 1), (1, 0, 1), (1, 0, 0)]
    rep = hypoellipticity_report(NoiseSpec(support=K, r=0.0), build_mode_set(2))
    assert rep.passed
    A = np.array(rep.forced, dtype=object).T
    assert (A.dot(rep.witness) == np.eye(3, dtype=np.int64)).all()


def test_subspace_dimension():
    F = SubspaceF.build([(1, 0, 0, 1), (0, 1, 1, 2, "re")], NoiseSpec())
    assert F.d == 3
    np.testing.assert_array_equal(F.ksq(), [1, 1, 2])
    np.testing.assert_allclose(np.diag(F.cov_F), [1, 1, 0.25])
