import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aqclab import linalg

dims_st = st.lists(st.integers(1, 3), min_size=1, max_size=3)


def brute_kron(a, b):
    m, n = a.shape
    p, q = b.shape
    out = np.zeros((m * p, n * q), dtype=complex)
    for i, j, k, l in itertools.product(range(m), range(n), range(p), range(q)):
        out[i * p + k, j * q + l] = a[i, j] * b[k, l]
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_kron_matches_index_formula(m, n, p, q, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    b = rng.standard_normal((p, q)) + 1j * rng.standard_normal((p, q))
    assert np.allclose(linalg.kron(a, b), brute_kron(a, b), atol=1e-14)


@settings(max_examples=30, deadline=None)
@given(dims_st, st.integers(0, 2**32 - 1))
def test_embed_local_is_kron_with_identities(dims, seed):
    rng = np.random.default_rng(seed)
    for p, d in enumerate(dims):
        op = linalg.random_hermitian(d, rng)
        ref = np.eye(1)
        for q, e in enumerate(dims):
            ref = brute_kron(ref, op if q == p else np.eye(e))
        assert np.allclose(linalg.embed_local(op, p, dims), ref, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(dims_st, st.integers(0, 2**32 - 1))
def test_local_operators_on_different_parties_commute(dims, seed):
    if len(dims) < 2:
        return
    rng = np.random.default_rng(seed)
    a = linalg.embed_local(linalg.random_hermitian(dims[0], rng), 0, dims)
    b = linalg.embed_local(linalg.random_hermitian(dims[1], rng), 1, dims)
    assert linalg.op_norm(linalg.commutator(a, b)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**32 - 1))
def test_one_param_unitary_group_law(d, s, t, seed):
    rng = np.random.default_rng(seed)
    g = linalg.random_hermitian(d, rng)
    u = linalg.one_param_unitary(g, s) @ linalg.one_param_unitary(g, t)
    assert np.allclose(u, linalg.one_param_unitary(g, s + t), atol=1e-10)
    assert linalg.unitarity_defect(linalg.one_param_unitary(g, s)) < 1e-12


def test_one_param_unitary_matches_pauli_closed_form():
    z = np.diag([1.0, -1.0])
    t = 0.37
    assert np.allclose(linalg.one_param_unitary(z, t), np.diag([np.exp(-1j * t), np.exp(1j * t)]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_random_projective_measurement_is_complete_and_orthogonal(d, k, seed):
    rng = np.random.default_rng(seed)
    e = np.array(linalg.random_projective_measurement(d, k, rng))
    assert e.shape == (k, d, d)
    assert np.allclose(e.sum(axis=0), np.eye(d), atol=1e-12)
    for a in range(k):
        assert np.allclose(e[a] @ e[a], e[a], atol=1e-12)
        assert np.allclose(e[a], e[a].conj().T, atol=1e-12)
        for b in range(a + 1, k):
            assert np.allclose(e[a] @ e[b], 0, atol=1e-12)


def test_non_hermitian_generator_rejected():
    with pytest.raises(linalg.NotHermitian):
        linalg.one_param_unitary(np.array([[0, 1], [0, 0]]), 1.0)


def test_check_dims_rejects_bad_input():
    with pytest.raises(linalg.DimensionMismatch):
        linalg.check_dims([2, 0])


def test_op_norm_is_largest_singular_value(rng):
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    assert np.isclose(linalg.op_norm(a), np.linalg.svd(a, compute_uv=False)[0])
