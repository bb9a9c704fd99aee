"""Per-group covariance and fourth-moment covariance estimators."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonFinite, TooFewObservations
from .matview import direct_sum, vech, vech_outer

__all__ = [
    "GroupSample",
    "CovEstimate",
    "empirical_cov",
    "centered_outer",
    "fourth_moment_cov",
    "pooled_estimates",
]


@dataclass(frozen=True)
class GroupSample:
    """One group's observations, an ``n x d`` array.

    Raises :class:`TooFewObservations` for fewer than two rows and
    :class:`NonFinite` for NaN/inf cells.
    """

    group_id: object
    observations: np.ndarray

    def __post_init__(self):
        X = np.array(self.observations, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise DimensionMismatch("observations must be an n x d array")
        if X.shape[0] < 2:
            raise TooFewObservations(
                f"group {self.group_id!r} has {X.shape[0]} observation(s); need >= 2")
        if not np.all(np.isfinite(X)):
            raise NonFinite(f"group {self.group_id!r} contains non-finite values")
        X.setflags(write=False)
        object.__setattr__(self, "observations", X)

    @property
    def n(self):
        return self.observations.shape[0]

    @property
    def d(self):
        return self.observations.shape[1]


@dataclass(frozen=True)
class CovEstimate:
    """Per-group and pooled estimates for a list of groups."""

    V: list
    v: list
    Sigma: list
    sizes: tuple
    vhat: np.ndarray = field(repr=False)
    Sigma_pooled: np.ndarray = field(repr=False)

    @property
    def N(self):
        return int(sum(self.sizes))

    @property
    def a(self):
        return len(self.sizes)

    @property
    def kappa(self):
        return np.array(self.sizes, dtype=float) / self.N

    @property
    def weights(self):
        """Block scale factors ``N / n_i``."""
        return self.N / np.array(self.sizes, dtype=float)


def _as_sample(g):
    return g if isinstance(g, GroupSample) else GroupSample(None, g)


def empirical_cov(g):
    """Unbiased sample covariance ``V_i`` and its vech."""
    X = _as_sample(g).observations
    Xc = X - X.mean(axis=0)
    V = Xc.T @ Xc / (X.shape[0] - 1)
    V = (V + V.T) / 2
    return V, vech(V)


def centered_outer(g):
    """Rows ``vech(Xt_k Xt_k^T) - mean_l vech(Xt_l Xt_l^T)``, ``Xt = X - mean``.

    These ``n x p`` vectors drive both the fourth-moment estimator and the
    wild bootstrap.
    """
    X = _as_sample(g).observations
    Xc = X - X.mean(axis=0)
    W = vech_outer(Xc)
    return W - W.mean(axis=0)


def fourth_moment_cov(g):
    """Estimate ``Cov(vech(eps eps^T))`` from one group (denominator n - 1)."""
    D = centered_outer(g)
    S = D.T @ D / (D.shape[0] - 1)
    return (S + S.T) / 2


def pooled_estimates(samples):
    """Estimates for every group plus the stacked ``vhat`` and ``(+)_i N/n_i Sigma_i``."""
    samples = [_as_sample(g) for g in samples]
    if not samples:
        raise DimensionMismatch("need at least one group")
    d = samples[0].d
    for g in samples:
        if g.d != d:
            raise DimensionMismatch(
                f"group {g.group_id!r} has dimension {g.d}, expected {d}")
    p = d * (d + 1) // 2
    for g in samples:
        if g.n <= p:
            warnings.warn(
                f"group {g.group_id!r}: n={g.n} <= p={p}; Sigma_i is rank deficient",
                stacklevel=2)
    Vs, vs, Ss = [], [], []
    for g in samples:
        V, v = empirical_cov(g)
        Vs.append(V)
        vs.append(v)
        Ss.append(fourth_moment_cov(g))
    sizes = tuple(g.n for g in samples)
    N = sum(sizes)
    pooled = direct_sum([N / n * S for n, S in zip(sizes, Ss)])
    return CovEstimate(V=Vs, v=vs, Sigma=Ss, sizes=sizes,
                       vhat=np.concatenate(vs), Sigma_pooled=pooled)
