import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from covtest.errors import EmptyList, NonTriangularLength, NotPSD
from covtest.matview import (
    centering_matrix, colmajor_to_vech, diag_indicator, dim_from_vech_len, direct_sum,
    kron, mp_inverse, psd_factor, sym_eigen, unvech, vech, vech_len, vech_outer,
    vech_to_colmajor,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def sym_matrices(max_d=6):
    return st.integers(1, max_d).flatmap(
        lambda d: arrays(float, (d, d), elements=finite).map(lambda A: (A + A.T) / 2))


def test_vech_order_is_rowwise_upper():
    S = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    np.testing.assert_array_equal(vech(S), [1, 2, 3, 4, 5, 6])


def test_colmajor_order():
    S = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 5.0], [3.0, 5.0, 6.0]])
    # column-major lower triangle: v11 v21 v31 v22 v32 v33
    lower = np.array([S[i, j] for j in range(3) for i in range(j, 3)])
    np.testing.assert_array_equal(vech_to_colmajor(vech(S)), lower)
    np.testing.assert_array_equal(colmajor_to_vech(lower), vech(S))


@given(sym_matrices())
def test_unvech_vech_roundtrip(S):
    np.testing.assert_array_equal(unvech(vech(S)), S)


@given(st.integers(1, 12).flatmap(lambda d: arrays(float, vech_len(d), elements=finite)))
def test_vech_unvech_roundtrip(v):
    np.testing.assert_array_equal(vech(unvech(v)), v)


@given(sym_matrices())
def test_diag_indicator_gives_trace(S):
    d = S.shape[0]
    assert diag_indicator(d) @ vech(S) == pytest.approx(np.trace(S), abs=1e-9)


@given(st.integers(1, 60))
def test_vech_length(d):
    assert dim_from_vech_len(vech_len(d)) == d


@pytest.mark.parametrize("p", [0, 2, 4, 5, 7, 8, 9, 11])
def test_non_triangular_length(p):
    with pytest.raises(NonTriangularLength):
        dim_from_vech_len(p)
    with pytest.raises(NonTriangularLength):
        unvech(np.zeros(p))


def test_vech_batched(rng):
    A = rng.standard_normal((4, 3, 3))
    A = A + A.swapaxes(1, 2)
    np.testing.assert_array_equal(vech(A), np.stack([vech(a) for a in A]))


def test_vech_outer(rng):
    X = rng.standard_normal((7, 4))
    np.testing.assert_allclose(vech_outer(X), np.stack([vech(np.outer(x, x)) for x in X]))


def test_centering_matrix():
    P = centering_matrix(4)
    np.testing.assert_allclose(P @ P, P, atol=1e-15)
    np.testing.assert_allclose(P @ np.ones(4), 0, atol=1e-15)
    assert np.trace(P) == pytest.approx(3)


def test_kron_and_direct_sum(rng):
    A, B = rng.standard_normal((2, 3)), rng.standard_normal((2, 2))
    np.testing.assert_allclose(kron(A, B), np.kron(A, B))
    D = direct_sum([A, B])
    assert D.shape == (4, 5)
    np.testing.assert_array_equal(D[:2, :3], A)
    np.testing.assert_array_equal(D[2:, 3:], B)
    assert not D[:2, 3:].any() and not D[2:, :3].any()
    with pytest.raises(EmptyList):
        direct_sum([])


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_mp_inverse_penrose_conditions(m, k, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, m, k)
    A = rng.standard_normal((m, r)) @ rng.standard_normal((r, k))
    G = mp_inverse(A)
    tol = 1e-8 * max(1.0, np.abs(A).max()) ** 2
    np.testing.assert_allclose(A @ G @ A, A, atol=tol)
    np.testing.assert_allclose(G @ A @ G, G, atol=1e-8 * max(1.0, np.abs(G).max()) ** 2)
    np.testing.assert_allclose((A @ G).T, A @ G, atol=1e-8)
    np.testing.assert_allclose((G @ A).T, G @ A, atol=1e-8)


def test_mp_inverse_matches_numpy(rng):
    A = rng.standard_normal((5, 3)) @ rng.standard_normal((3, 6))
    np.testing.assert_allclose(mp_inverse(A), np.linalg.pinv(A), atol=1e-10)


def test_mp_inverse_of_zero():
    np.testing.assert_array_equal(mp_inverse(np.zeros((3, 2))), np.zeros((2, 3)))


def test_mp_inverse_batched(rng):
    A = rng.standard_normal((4, 3, 3))
    G = mp_inverse(A)
    for a, g in zip(A, G):
        np.testing.assert_allclose(g, np.linalg.inv(a), rtol=1e-9, atol=1e-9)


def test_sym_eigen_descending(rng):
    A = rng.standard_normal((5, 5))
    S = A @ A.T
    lam, Q = sym_eigen(S)
    assert np.all(np.diff(lam) <= 0)
    np.testing.assert_allclose((Q * lam) @ Q.T, S, atol=1e-10)


@given(st.integers(1, 7), st.integers(0, 7), st.integers(0, 2**32 - 1))
def test_psd_factor_reconstructs(d, r, seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, min(r, d)))
    S = A @ A.T
    L = psd_factor(S)
    np.testing.assert_allclose(L @ L.T, S, atol=1e-9 * max(1.0, np.abs(S).max()))
    np.testing.assert_allclose(L, L.T, atol=1e-12 * max(1.0, np.abs(L).max()))


def test_psd_factor_rejects_indefinite():
    with pytest.raises(NotPSD):
        psd_factor(np.diag([1.0, -0.5]))


def test_psd_factor_clamps_roundoff():
    S = np.diag([1.0, -1e-14])
    L = psd_factor(S)
    np.testing.assert_allclose(L @ L.T, np.diag([1.0, 0.0]), atol=1e-12)
