"""Hot kernels: known-answer vectors and agreement between the two backends."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsfp import kernels

M32 = 0xFFFFFFFF

# Random123 known-answer vectors for Philox4x32-10: (counter, key) -> output
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((M32, M32, M32, M32), (M32, M32), (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers(ctr, key, expected):
    out = kernels.philox4x32_numpy(*ctr, *key)
    assert tuple(int(v) for v in out) == expected


@pytest.mark.parametrize("ctr,key,expected", KAT)
def test_philox_known_answers_compiled(ctr, key, expected):
    from nsfp.kernels.philox import _philox_scalar
    out = _philox_scalar(*(np.uint64(v) for v in ctr), *(np.uint64(v) for v in key))
    assert tuple(int(v) for v in out) == expected


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 10 ** 6), st.integers(1, 9))
def test_normals_backends_agree(seed, step, n_coords):
    # uniforms are bit-identical; the two libm's log/cos may differ in the last ulp
    members = np.arange(5, 5 + 17, dtype=np.uint64)
    a = kernels.normals_numpy(seed, step, members, n_coords)
    b = kernels.normals_numba(seed, step, members, n_coords)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-14)


def test_normals_depend_only_on_member_index():
    full = kernels.normals(42, 3, np.arange(100, dtype=np.uint64), 6)
    part = kernels.normals(42, 3, np.array([77, 5], dtype=np.uint64), 6)
    np.testing.assert_array_equal(part, full[[77, 5]])


def test_normals_moments():
    z = kernels.normals(1, 0, np.arange(200_000, dtype=np.uint64), 4).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)
    # fourth moment of a standard normal is 3
    assert abs(np.mean(z ** 4) - 3) < 0.05


def test_streams_differ_across_steps_and_seeds():
    m = np.arange(10, dtype=np.uint64)
    a = kernels.normals(1, 0, m, 4)
    assert not np.array_equal(a, kernels.normals(1, 1, m, 4))
    assert not np.array_equal(a, kernels.normals(2, 0, m, 4))


@pytest.mark.parametrize("shape,axis", [((50,), 0), ((13, 21), 0), ((13, 21), 1), ((6, 7, 9), 2), ((6, 7, 9), 0)])
def test_correlate_backends_agree(shape, axis):
    rng = np.random.default_rng(sum(shape) + axis)
    f = rng.standard_normal(shape)
    w = rng.standard_normal(7)
    a = kernels.correlate_axis_numpy(f, w, axis)
    b = kernels.correlate_axis_numba(f, w, axis)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_correlate_matches_direct_sum():
    f = np.arange(10.0)
    w = np.array([1.0, 2.0, 3.0])
    out = kernels.correlate_axis_numpy(f, w, 0)
    # out[i] = sum_j w[j] f[i + j - 1], zero outside
    ref = np.array([sum(w[j] * f[i + j - 1] for j in range(3) if 0 <= i + j - 1 < 10) for i in range(10)])
    np.testing.assert_allclose(out, ref)
