"""Quadratic-form statistics, their calibrations, p-values and trace intervals.

All three statistics share the form ``N r^T E r`` with ``r = C vhat - zeta``:

* ``ATS``  -- ``E = I / tr(C Sigma C^T)``
* ``WTS``  -- ``E = (C Sigma C^T)^+``
* ``MATS`` -- ``E = (C Sigma_0 C^T)^+`` with ``Sigma_0`` the diagonal of ``Sigma``

Everything is evaluated in the projected ``m``-dimensional space:
``C Sigma C^T = sum_i (N/n_i) C_i Sigma_i C_i^T`` where ``C_i`` is the column
block of ``C`` belonging to group ``i``. Bootstrap replicates are vectorized
over chunks of ``ResamplingPlan.chunk_size`` replicates; chunk ``c`` draws from
its own substream keyed by ``(master_seed, c)``, so results do not depend on
how many worker processes evaluate the chunks.

WTS and MATS are unchanged when ``C`` is replaced by ``K C`` for any ``K``
of full column rank; the ATS only when ``K^T K = c I``.
"""

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import DimensionMismatch, NonConvergent, NonFinite, RankZero, ZeroTrace
from .estimate import GroupSample, centered_outer, pooled_estimates
from .hypothesis import HypothesisSpec, given_trace, validate
from .matview import mp_inverse, psd_factor, sym_eigen

__all__ = [
    "KINDS",
    "PINV_RTOL",
    "ParametricBootstrap",
    "WildBootstrap",
    "MonteCarloWeightedChiSq",
    "ChiSquareAsymptotic",
    "method_from_name",
    "ResamplingPlan",
    "TestResult",
    "statistic_value",
    "parametric_bootstrap_replicate",
    "wild_bootstrap_replicate",
    "mc_weighted_chisq_quantile",
    "null_replicates",
    "run_test",
    "trace_confidence_interval",
]

KINDS = ("ATS", "WTS", "MATS")

# relative singular-value cutoff for (C Sigma C^T)^+ inside WTS/MATS; the
# quadratic forms of rank-deficient C leave rounding-level singular values
# that a cutoff of max(m, k) * eps does not always remove
PINV_RTOL = 1e-10

# relative eigenvalue cutoff when deciding which weighted chi-square terms to draw
EIG_RTOL = 1e-12

_STREAM_BOOT = 0
_STREAM_MC = 1


@dataclass(frozen=True)
class ParametricBootstrap:
    B: int = 1000
    label = "Para"

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")


@dataclass(frozen=True)
class WildBootstrap:
    B: int = 1000
    weights: str = "rademacher"
    label = "Wild"

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be >= 1")
        if isinstance(self.weights, str) and self.weights not in ("rademacher", "gaussian"):
            raise ValueError(f"unknown wild weights {self.weights!r}")


@dataclass(frozen=True)
class MonteCarloWeightedChiSq:
    M: int = 10000
    label = "MC"

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")


@dataclass(frozen=True)
class ChiSquareAsymptotic:
    label = "chisq"


def method_from_name(name, B=1000, M=10000, weights="rademacher"):
    """Map the CLI names ``param|wild|mc|chisq`` to a calibration method."""
    name = name.lower()
    if name in ("param", "para", "parametric"):
        return ParametricBootstrap(B)
    if name == "wild":
        return WildBootstrap(B, weights)
    if name in ("mc", "montecarlo"):
        return MonteCarloWeightedChiSq(M)
    if name in ("chisq", "chi2", "asymptotic"):
        return ChiSquareAsymptotic()
    raise ValueError(f"unknown method {name!r}")


def method_label(kind, method):
    """Short row labels, e.g. ``ATS-Para`` or ``WTS-chi2``."""
    if isinstance(method, MonteCarloWeightedChiSq):
        return kind if kind == "ATS" else f"{kind}-MC"
    if isinstance(method, ChiSquareAsymptotic):
        return f"{kind}-chi2"
    return f"{kind}-{method.label}"


@dataclass(frozen=True)
class ResamplingPlan:
    """Seeding and chunking for resampling.

    Replicate ``r`` belongs to chunk ``r // chunk_size``; each chunk gets its
    own generator derived from ``(master_seed, chunk)``. ``workers`` only
    decides how many processes evaluate the chunks.
    """

    master_seed: int = 0
    workers: int = 1
    chunk_size: int = 100

    def chunk_rng(self, chunk, stream=_STREAM_BOOT):
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(stream, chunk))
        return np.random.default_rng(ss)


@dataclass
class TestResult:
    kind: str
    statistic: float
    p_value: float
    method: str
    replicates: int
    seed: int
    critical_value: float = None
    alpha: float = None
    df: int = None
    warnings: list = field(default_factory=list)

    def reject(self, alpha=None):
        alpha = self.alpha if alpha is None else alpha
        return self.p_value <= alpha

    def to_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# preparation: everything the statistic needs, projected through C


@dataclass
class _Prepared:
    spec: HypothesisSpec
    sizes: tuple
    w: np.ndarray            # N / n_i
    blocks: list             # C_i, m x p
    Sigmas: list             # Sigma_i, p x p
    resid: np.ndarray        # C vhat - zeta
    S: np.ndarray            # C Sigma C^T
    S0: np.ndarray           # C Sigma_0 C^T
    samples: list = None

    @property
    def N(self):
        return int(sum(self.sizes))

    @property
    def m(self):
        return self.spec.m

    @property
    def p(self):
        return self.spec.p


def _prepare(samples, spec, est=None):
    samples = [g if isinstance(g, GroupSample) else GroupSample(i, g)
               for i, g in enumerate(samples)]
    if est is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = pooled_estimates(samples)
    return _prepare_from_estimate(est, spec, samples)


def _prepare_from_estimate(est, spec, samples=None):
    d = est.V[0].shape[0]
    if spec.a != est.a or spec.d != d:
        raise DimensionMismatch(
            f"hypothesis is for a={spec.a}, d={spec.d}; data have a={est.a}, d={d}")
    validate(spec, est.a, d)
    w = est.weights
    blocks = spec.blocks()
    resid = spec.C @ est.vhat - spec.zeta
    m = spec.m
    S = np.zeros((m, m))
    S0 = np.zeros((m, m))
    for wi, Ci, Si in zip(w, blocks, est.Sigma):
        S += wi * (Ci @ Si @ Ci.T)
        S0 += wi * ((Ci * np.diag(Si)) @ Ci.T)
    S = (S + S.T) / 2
    S0 = (S0 + S0.T) / 2
    if not (np.all(np.isfinite(resid)) and np.all(np.isfinite(S))):
        raise NonFinite("non-finite estimates")
    return _Prepared(spec, est.sizes, w, blocks, est.Sigma, resid, S, S0, samples)


def _quadratic(kind, N, T, S, S0, strict=True):
    """``N T^T E T`` for a batch: ``T`` is (b, m), ``S``/``S0`` are (b, m, m).

    For ATS, ``S`` may be given as the (b,) traces instead.
    """
    if kind == "ATS":
        num = np.einsum("bm,bm->b", T, T)
        tr = S if S.ndim == 1 else np.trace(S, axis1=-2, axis2=-1)
        zero_num = num == 0
        bad = (tr <= 0) & ~zero_num
        if strict and np.any(bad):
            raise ZeroTrace("tr(C Sigma C^T) is zero; the data are degenerate")
        out = np.zeros_like(num)
        ok = ~zero_num & (tr > 0)
        out[ok] = N * num[ok] / tr[ok]
        if not strict:
            out[bad] = np.inf
        return out
    E = mp_inverse(S if kind == "WTS" else S0, PINV_RTOL)
    return N * np.einsum("bm,bml,bl->b", T, E, T)


def _observed(prep, kind):
    return float(_quadratic(kind, prep.N, prep.resid[None, :], prep.S[None], prep.S0[None])[0])


def statistic_value(kind, est, spec):
    """Observed ATS, WTS or MATS for a :class:`CovEstimate` and hypothesis."""
    _check_kind(kind)
    prep = _prepare_from_estimate(est, spec)
    return _observed(prep, kind)


def _check_kind(kind):
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")


# --------------------------------------------------------------------------
# bootstrap batches


def _batch_from_projected(kind, prep, Us, Ys=None):
    """Replicate statistics from projected bootstrap samples.

    ``Us[i]`` has shape (b, n_i, m) and holds ``C_i Y_ik``; ``Ys[i]`` (only
    needed for MATS) holds the p-dimensional ``Y_ik``.
    """
    T = 0.0
    S = 0.0
    S0 = 0.0
    for i, U in enumerate(Us):
        n = U.shape[1]
        Ubar = U.sum(axis=1) / n
        T = T + Ubar
        if kind == "ATS":
            ss = np.einsum("bkm,bkm->b", U, U) - n * np.einsum("bm,bm->b", Ubar, Ubar)
            S = S + prep.w[i] * ss / (n - 1)
        elif kind == "WTS":
            R = U - Ubar[:, None, :]
            S = S + prep.w[i] * (np.swapaxes(R, 1, 2) @ R) / (n - 1)
        else:
            var = Ys[i].var(axis=1, ddof=1)
            Ci = prep.blocks[i]
            S0 = S0 + prep.w[i] * np.einsum("mp,bp,lp->bml", Ci, var, Ci)
    return _quadratic(kind, prep.N, T, S, S0, strict=False)


def _parametric_factors(prep, kind):
    """Per-group ``(F_i, r_i, L_i)`` with ``F_i F_i^T = C_i Sigma_i C_i^T``.

    Draws are made in ``min(m, p)`` dimensions: when ``m < p`` the
    projected vectors ``C_i Y*_ik`` are drawn directly from
    ``N_m(0, C_i Sigma_i C_i^T)``, which has the same law. MATS needs the
    p-dimensional draws themselves.
    """
    out = []
    for Ci, Si in zip(prep.blocks, prep.Sigmas):
        if kind != "MATS" and prep.m < prep.p:
            out.append((psd_factor(Ci @ Si @ Ci.T), None))
        else:
            L = psd_factor(Si)
            out.append((Ci @ L, L))
    return out


def _parametric_batch(prep, kind, b, rng, factors=None):
    if factors is None:
        factors = _parametric_factors(prep, kind)
    Us, Ys = [], []
    for n, (F, L) in zip(prep.sizes, factors):
        r = F.shape[1]
        z = rng.standard_normal((b * n, r))
        Us.append((z @ F.T).reshape(b, n, F.shape[0]))
        if kind == "MATS":
            Ys.append((z @ L.T).reshape(b, n, L.shape[0]))
    return _batch_from_projected(kind, prep, Us, Ys)


def _draw_weights(weights, rng, shape):
    if callable(weights):
        return np.asarray(weights(rng, shape), dtype=float)
    if weights == "rademacher":
        return rng.integers(0, 2, size=shape).astype(float) * 2.0 - 1.0
    return rng.standard_normal(shape)


def _wild_inputs(prep):
    Ds = [centered_outer(g) for g in prep.samples]
    Gs = [D @ Ci.T for D, Ci in zip(Ds, prep.blocks)]
    return Ds, Gs


def _wild_batch(prep, kind, b, rng, weights, inputs=None):
    Ds, Gs = inputs if inputs is not None else _wild_inputs(prep)
    T = 0.0
    S = 0.0
    S0 = 0.0
    for i, (D, G) in enumerate(zip(Ds, Gs)):
        n = G.shape[0]
        W = _draw_weights(weights, rng, (b, n))
        W2 = W * W
        Ubar = W @ G / n
        T = T + Ubar
        if kind == "ATS":
            ss = W2 @ np.einsum("km,km->k", G, G) - n * np.einsum("bm,bm->b", Ubar, Ubar)
            S = S + prep.w[i] * ss / (n - 1)
        elif kind == "WTS":
            cross = np.einsum("bk,km,kl->bml", W2, G, G) - n * Ubar[:, :, None] * Ubar[:, None, :]
            S = S + prep.w[i] * cross / (n - 1)
        else:
            Ybar = W @ D / n
            var = (W2 @ (D * D) - n * Ybar * Ybar) / (n - 1)
            Ci = prep.blocks[i]
            S0 = S0 + prep.w[i] * np.einsum("mp,bp,lp->bml", Ci, var, Ci)
    return _quadratic(kind, prep.N, T, S, S0, strict=False)


def parametric_bootstrap_replicate(est, spec, kind, rng):
    """One parametric-bootstrap replicate of the statistic.

    Draws ``n_i`` vectors from ``N_p(0, Sigma_i)`` per group, re-estimates
    their covariance and evaluates the statistic at ``Ybar*`` with
    ``zeta = 0``.
    """
    _check_kind(kind)
    prep = _prepare_from_estimate(est, spec)
    return float(_parametric_batch(prep, kind, 1, rng)[0])


def wild_bootstrap_replicate(samples, spec, kind, weights, rng):
    """One wild-bootstrap replicate.

    ``weights`` is ``"rademacher"``, ``"gaussian"`` or a callable
    ``(rng, shape) -> array`` with mean 0 and variance 1.
    """
    _check_kind(kind)
    prep = _prepare(samples, spec)
    return float(_wild_batch(prep, kind, 1, rng, weights)[0])


# --------------------------------------------------------------------------
# weighted chi-square limit


def _limit_weights(prep, kind):
    """Eigenvalues of the weighted chi-square limit law of the statistic."""
    if kind == "ATS":
        tr = np.trace(prep.S)
        if tr <= 0:
            raise ZeroTrace("tr(C Sigma C^T) is zero; the data are degenerate")
        lam = sym_eigen(prep.S)[0] / tr
    else:
        E = mp_inverse(prep.S if kind == "WTS" else prep.S0, PINV_RTOL)
        R = psd_factor(E, clamp_tol=1e-6)
        lam = sym_eigen(R @ prep.S @ R)[0]
    lam = np.clip(lam, 0.0, None)
    if lam.size == 0 or lam[0] <= 0:
        return lam[:0]
    return lam[lam > EIG_RTOL * lam[0]]


def _mc_draws(lam, M, rng):
    if lam.size == 0:
        return np.zeros(M)
    return rng.chisquare(1.0, size=(M, lam.size)) @ lam


def mc_weighted_chisq_quantile(est, spec, alpha, M, rng, kind="ATS"):
    """Monte-Carlo ``(1 - alpha)``-quantile of ``sum_k lambda_k B_k / tr(C Sigma C^T)``."""
    prep = _prepare_from_estimate(est, spec)
    draws = _mc_draws(_limit_weights(prep, kind), M, rng)
    return float(np.quantile(draws, 1.0 - alpha))


# --------------------------------------------------------------------------
# test driver


def _chunk_worker(args):
    prep, kind, method, plan, chunk, b = args
    rng = plan.chunk_rng(chunk)
    if isinstance(method, ParametricBootstrap):
        return _parametric_batch(prep, kind, b, rng)
    return _wild_batch(prep, kind, b, rng, method.weights)


def _chunks(B, size):
    return [(c, min(size, B - c * size)) for c in range(-(-B // size))]


def null_replicates(prep, kind, method, plan):
    """Replicates of the statistic under the calibration ``method``.

    Returns ``None`` for :class:`ChiSquareAsymptotic`.
    """
    if isinstance(method, ChiSquareAsymptotic):
        return None
    if isinstance(method, MonteCarloWeightedChiSq):
        lam = _limit_weights(prep, kind)
        return _mc_draws(lam, method.M, plan.chunk_rng(0, _STREAM_MC))
    chunks = _chunks(method.B, plan.chunk_size)
    if plan.workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(plan.workers) as pool:
            parts = list(pool.map(_chunk_worker,
                                  [(prep, kind, method, plan, c, b) for c, b in chunks]))
        return np.concatenate(parts)
    if isinstance(method, ParametricBootstrap):
        factors = _parametric_factors(prep, kind)
        parts = [_parametric_batch(prep, kind, b, plan.chunk_rng(c), factors)
                 for c, b in chunks]
    else:
        inputs = _wild_inputs(prep)
        parts = [_wild_batch(prep, kind, b, plan.chunk_rng(c), method.weights, inputs)
                 for c, b in chunks]
    return np.concatenate(parts)


def _p_value(observed, reps, df=None):
    if reps is None:
        return float(stats.chi2.sf(observed, df))
    return (1.0 + np.count_nonzero(reps >= observed)) / (reps.size + 1.0)


def run_test(samples, spec, kind="ATS", method=None, plan=None, alpha=None):
    """Test ``C v = zeta`` on a list of groups.

    Parameters
    ----------
    samples : list of GroupSample or array-like (n_i x d)
    spec : HypothesisSpec
    kind : {"ATS", "WTS", "MATS"}
    method : calibration method, default ``ParametricBootstrap(1000)``
    plan : ResamplingPlan, default seed 0
    alpha : float, optional
        If given, the critical value at this level is reported too.

    Returns
    -------
    TestResult
        Bootstrap and Monte-Carlo p-values are ``(1 + #{rep >= obs}) / (B + 1)``.
    """
    _check_kind(kind)
    method = ParametricBootstrap() if method is None else method
    plan = ResamplingPlan() if plan is None else plan
    prep = _prepare(samples, spec)
    notes = []
    df = None
    if spec.rank == 0:
        raise RankZero("hypothesis matrix has rank zero")
    for g, n in zip(prep.samples, prep.sizes):
        if n <= prep.p:
            notes.append(f"group {g.group_id!r}: n={n} <= p={prep.p}")
    if kind in ("WTS", "MATS"):
        S = prep.S if kind == "WTS" else prep.S0
        r_s = np.linalg.matrix_rank(S, tol=PINV_RTOL * max(np.abs(S).max(), 1e-300)
                                    * S.shape[0])
        if r_s < spec.rank:
            notes.append(f"C Sigma C^T has rank {r_s} < rank(C) = {spec.rank}; "
                         "the WTS/MATS limit law may not hold")
    if isinstance(method, ChiSquareAsymptotic):
        if kind != "WTS":
            raise ValueError("the chi-square approximation applies to the WTS only")
        df = spec.rank
    observed = _observed(prep, kind)
    reps = null_replicates(prep, kind, method, plan)
    p = _p_value(observed, reps, df)
    crit = None
    if alpha is not None:
        crit = (float(stats.chi2.ppf(1 - alpha, df)) if reps is None
                else float(np.quantile(reps, 1 - alpha)))
    n_rep = 0 if reps is None else int(reps.size)
    return TestResult(kind=kind, statistic=observed, p_value=float(p),
                      method=method_label(kind, method), replicates=n_rep,
                      seed=plan.master_seed, critical_value=crit, alpha=alpha, df=df,
                      warnings=notes)


def trace_confidence_interval(sample, kind="ATS", method=None, alpha=0.05, plan=None,
                              max_iter=200):
    """Confidence interval ``{gamma : p(gamma) >= alpha}`` for ``tr(V_1)``.

    The null replicates do not depend on ``gamma``; they are drawn once and
    the boundary is located by bracketing and bisection on each side of the
    point estimate.
    """
    _check_kind(kind)
    method = ParametricBootstrap() if method is None else method
    plan = ResamplingPlan() if plan is None else plan
    if isinstance(method, ChiSquareAsymptotic) and kind != "WTS":
        raise ValueError("the chi-square approximation applies to the WTS only")
    if not isinstance(sample, GroupSample):
        sample = GroupSample(0, sample)
    d = sample.d
    prep = _prepare([sample], given_trace(d, 0.0))
    point = float(np.trace(np.cov(sample.observations, rowvar=False, ddof=1).reshape(d, d)))
    if np.trace(prep.S) <= 0:
        warnings.warn("degenerate data: tr(C Sigma C^T) = 0, interval collapses to the "
                      "point estimate", RuntimeWarning, stacklevel=2)
        return point, point
    reps = null_replicates(prep, kind, method, plan)
    df = 1 if reps is None else None
    # m = 1, so every kind reduces to N (t - gamma)^2 / d^2 / s
    scale = prep.N / d ** 2 * (1.0 / prep.S[0, 0] if kind != "MATS" else 1.0 / prep.S0[0, 0])

    def pval(gamma):
        return _p_value(scale * (point - gamma) ** 2, reps, df)

    spread = math.sqrt(prep.S[0, 0] / prep.N) * d

    def edge(sign):
        inside, step = 0.0, spread
        for _ in range(max_iter):
            if pval(point + sign * step) < alpha:
                break
            inside, step = step, 2 * step
        else:
            raise NonConvergent("could not bracket the interval endpoint")
        lo, hi = inside, step
        for _ in range(max_iter):
            mid = (lo + hi) / 2
            if pval(point + sign * mid) >= alpha:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * max(1.0, abs(point)):
                return point + sign * lo
        raise NonConvergent("bisection did not converge")

    return edge(-1.0), edge(1.0)
