import numpy as np
import pytest
from hypothesis import given, strategies as st

from covtest.errors import DimensionMismatch, NonFinite, TooFewObservations
from covtest.estimate import (
    GroupSample, centered_outer, empirical_cov, fourth_moment_cov, pooled_estimates,
)
from covtest.matview import vech, vech_indices, vech_len


def normal_fourth_moment(V):
    """Cov(vech(x x^T)) for x ~ N(0, V): entries V_rt V_su + V_ru V_st."""
    r, s = vech_indices(V.shape[0])
    return (V[np.ix_(r, r)] * V[np.ix_(s, s)] + V[np.ix_(r, s)] * V[np.ix_(s, r)])


def brute_fourth_moment(X):
    n, d = X.shape
    Xc = X - X.mean(axis=0)
    W = np.array([[Xc[k, i] * Xc[k, j] for i in range(d) for j in range(i, d)]
                  for k in range(n)])
    Wbar = W.mean(axis=0)
    S = np.zeros((W.shape[1], W.shape[1]))
    for k in range(n):
        S += np.outer(W[k] - Wbar, W[k] - Wbar)
    return S / (n - 1)


def test_group_sample_validation():
    with pytest.raises(TooFewObservations):
        GroupSample("g", np.zeros((1, 3)))
    with pytest.raises(NonFinite):
        GroupSample("g", np.array([[0.0, np.nan], [1.0, 2.0]]))
    g = GroupSample("g", [[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]])
    assert (g.n, g.d) == (3, 2)
    with pytest.raises(ValueError):
        g.observations[0, 0] = 9.0


def test_empirical_cov_matches_numpy(rng):
    X = rng.standard_normal((30, 4))
    V, v = empirical_cov(X)
    np.testing.assert_allclose(V, np.cov(X, rowvar=False), rtol=1e-12)
    np.testing.assert_allclose(v, vech(V))


def test_fourth_moment_matches_loop_oracle(rng):
    X = rng.gamma(2.0, size=(25, 3))
    np.testing.assert_allclose(fourth_moment_cov(X), brute_fourth_moment(X), rtol=1e-10)


def test_centered_outer_has_zero_mean(rng):
    D = centered_outer(rng.standard_normal((40, 3)))
    assert D.shape == (40, 6)
    np.testing.assert_allclose(D.mean(axis=0), 0, atol=1e-14)


@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.floats(0.1, 10))
def test_location_invariance_and_scaling(seed, shift, c):
    X = np.random.default_rng(seed).standard_normal((12, 3))
    V, _ = empirical_cov(X)
    S = fourth_moment_cov(X)
    V2, _ = empirical_cov(c * X + shift)
    S2 = fourth_moment_cov(c * X + shift)
    np.testing.assert_allclose(V2, c ** 2 * V, rtol=1e-7, atol=1e-9 * c ** 2)
    np.testing.assert_allclose(S2, c ** 4 * S, rtol=1e-6, atol=1e-8 * c ** 4)


def test_fourth_moment_is_psd(rng):
    S = fourth_moment_cov(rng.standard_normal((50, 4)))
    assert np.linalg.eigvalsh(S).min() > -1e-12


def test_normal_oracle_large_sample(rng):
    V = np.array([[2.0, 0.6, 0.3], [0.6, 1.0, -0.2], [0.3, -0.2, 1.5]])
    X = rng.multivariate_normal(np.zeros(3), V, size=400_000)
    S = fourth_moment_cov(X)
    target = normal_fourth_moment(V)
    assert np.abs(S - target).max() < 0.05 * np.abs(target).max()


def test_pooled_estimates_structure(rng):
    groups = [rng.standard_normal((20, 2)), rng.standard_normal((30, 2))]
    est = pooled_estimates(groups)
    assert est.N == 50 and est.a == 2
    np.testing.assert_allclose(est.kappa, [0.4, 0.6])
    np.testing.assert_allclose(est.vhat, np.concatenate([vech(np.cov(g, rowvar=False))
                                                          for g in groups]))
    p = vech_len(2)
    S = est.Sigma_pooled
    np.testing.assert_allclose(S[:p, :p], 50 / 20 * fourth_moment_cov(groups[0]))
    np.testing.assert_allclose(S[p:, p:], 50 / 30 * fourth_moment_cov(groups[1]))
    assert not S[:p, p:].any()


def test_pooled_dimension_mismatch(rng):
    with pytest.raises(DimensionMismatch):
        pooled_estimates([rng.standard_normal((10, 2)), rng.standard_normal((10, 3))])


def test_small_group_warns(rng):
    with pytest.warns(UserWarning, match="rank deficient"):
        est = pooled_estimates([rng.standard_normal((5, 3))])
    assert np.linalg.matrix_rank(est.Sigma[0]) <= 4
