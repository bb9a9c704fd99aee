"""Data generators and the type-I-error, power and timing studies.

Every simulated dataset ``s`` of cell ``c`` (a sample size or a ``delta``
value) draws its data from the substream ``(seed, c, s, 0)`` and its
resampling from a plan seeded by ``(seed, c, s, 1)``. Datasets are
processed in fixed blocks, so rates do not depend on ``workers``.
"""

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import stats

from . import hypothesis as hyp
from .engine import ResamplingPlan, method_from_name, method_label, run_test
from .matview import psd_factor

__all__ = [
    "DISTRIBUTIONS",
    "gen_errors",
    "cov_matrix",
    "default_means",
    "apply_model",
    "alternative_matrix",
    "simulated_dataset",
    "SimConfig",
    "ScenarioResult",
    "type1_study",
    "power_study",
    "timing_study",
    "TimingResult",
]

DISTRIBUTIONS = ("normal", "t9", "gamma", "skewnormal")

_SKEW_ALPHA = 4.0
_SKEW_DELTA = _SKEW_ALPHA / math.sqrt(1.0 + _SKEW_ALPHA ** 2)
_SKEW_MEAN = _SKEW_DELTA * math.sqrt(2.0 / math.pi)
_SKEW_SD = math.sqrt(1.0 - 2.0 * _SKEW_DELTA ** 2 / math.pi)

_BLOCK = 250


def gen_errors(dist, d, n, rng):
    """``n x d`` i.i.d. standardized errors (mean 0, variance 1)."""
    shape = (n, d)
    if dist == "normal":
        return rng.standard_normal(shape)
    if dist == "t9":
        return rng.standard_t(9, shape) / math.sqrt(9.0 / 7.0)
    if dist == "gamma":
        return (rng.gamma(2.0, 1.0, shape) - 2.0) / math.sqrt(2.0)
    if dist == "skewnormal":
        x = stats.skewnorm.rvs(_SKEW_ALPHA, size=shape, random_state=rng)
        return (x - _SKEW_MEAN) / _SKEW_SD
    raise ValueError(f"unknown distribution {dist!r}; choose from {DISTRIBUTIONS}")


def cov_matrix(structure, d, rho=0.6):
    """``"ar"`` -> ``rho^|i-j|``; ``"cs"`` -> ``I + J``; an array is returned as is."""
    if isinstance(structure, str):
        if structure == "ar":
            idx = np.arange(d)
            return rho ** np.abs(np.subtract.outer(idx, idx))
        if structure == "cs":
            return np.eye(d) + np.ones((d, d))
        raise ValueError(f"unknown covariance structure {structure!r}")
    V = np.asarray(structure, dtype=float)
    if V.shape != (d, d):
        raise ValueError(f"explicit covariance has shape {V.shape}, expected {(d, d)}")
    return V


def default_means(a, d):
    """``mu_1 = (1^2, ..., d^2) / 4`` and zero means for the other groups."""
    mus = [np.zeros(d) for _ in range(a)]
    mus[0] = np.arange(1, d + 1, dtype=float) ** 2 / 4.0
    return mus


def apply_model(mu, V, Z):
    """``X_k = mu + V^{1/2} Z_k`` with the symmetric PSD square root of ``V``."""
    L = psd_factor(np.asarray(V, dtype=float))
    return np.asarray(mu, dtype=float) + np.asarray(Z, dtype=float) @ L.T


def alternative_matrix(kind, d, delta):
    """Diagonal of ``Delta`` for the one-point or trend alternative."""
    if kind == "one_point":
        e = np.zeros(d)
        e[0] = 1.0
        return 1.0 + e * delta
    if kind == "trend":
        return 1.0 + np.arange(1, d + 1) / d * delta
    raise ValueError(f"unknown alternative {kind!r}")


# the ATS is only unchanged between forms when C_quadratic = K C_reduced with
# K^T K = c I; that holds for A, C and D but not for B or for E (a = 3)
_DEFAULT_FORMS = {"A": "reduced", "C": "reduced", "D": "reduced",
                  "B": "quadratic", "E": "quadratic"}

_SPLITS = {"A": (0.6, 0.4), "C": (0.6, 0.4), "E": (0.4, 0.25, 0.35), "B": (1.0,), "D": (1.0,)}


@dataclass
class SimConfig:
    """Declarative description of a simulation study.

    ``sizes`` are total sample sizes ``N``; they are split across groups by
    ``split`` (defaults per scenario). ``groups`` overrides both with
    explicit per-group sizes for a single cell. ``tests`` lists
    ``"KIND:method"`` entries, e.g. ``"ATS:param"`` or ``"WTS:chisq"``.
    ``form=None`` picks the reduced hypothesis matrix where all statistics
    are unchanged by the switch (A, C, D) and the projection form otherwise.
    """

    scenario: str = "A"
    d: int = 5
    sizes: tuple = (50, 100, 250, 500)
    split: tuple = None
    groups: tuple = None
    distribution: str = "normal"
    cov: object = "ar"
    rho: float = 0.6
    means: str = "default"
    tests: tuple = ("ATS:param", "ATS:wild", "ATS:mc", "WTS:param", "WTS:wild", "WTS:chisq")
    form: str = None
    n_sim: int = 5000
    B: int = 500
    M: int = 10000
    alpha: float = 0.05
    seed: int = 0
    alternative: str = "none"
    deltas: tuple = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0)
    weights: str = "rademacher"
    workers: int = 1
    full_scale: bool = False
    spec: object = None

    def __post_init__(self):
        if self.n_sim < 1:
            raise ValueError("n_sim must be >= 1")
        if self.full_scale:
            self.n_sim, self.B, self.M = 20000, 1000, 10000
        if any(not 0.0 <= dl <= 3.0 for dl in self.deltas):
            warnings.warn("delta grid leaves [0, 3]", stacklevel=2)

    @classmethod
    def from_dict(cls, payload):
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known - {"study"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kw = {k: v for k, v in payload.items() if k in known}
        for key in ("sizes", "split", "tests", "deltas"):
            if kw.get(key) is not None:
                kw[key] = tuple(kw[key])
        if kw.get("groups") is not None:
            kw["groups"] = tuple(int(n) for n in kw["groups"])
        if isinstance(kw.get("spec"), dict):
            kw["spec"] = hyp.HypothesisSpec.from_dict(kw["spec"])
        return cls(**kw)

    @property
    def a(self):
        if self.spec is not None:
            return self.spec.a
        return len(self.split or _SPLITS[self.scenario])

    def group_sizes(self, N):
        split = self.split or _SPLITS.get(self.scenario, (1.0,))
        return tuple(int(round(f * N)) for f in split)

    def cells(self):
        if self.groups is not None:
            return [tuple(self.groups)]
        return [self.group_sizes(N) for N in self.sizes]

    def covariance(self):
        return cov_matrix(self.cov, self.d, self.rho)

    def hypothesis(self, form=None):
        form = form or self.form or _DEFAULT_FORMS.get(self.scenario, "quadratic")
        if self.spec is not None:
            return self.spec
        V = self.covariance()
        if self.scenario == "D":
            return hyp.given_trace(self.d, float(np.trace(V)), form)
        return hyp.build(self.scenario, self.a, self.d, form)

    def test_list(self):
        out = []
        for entry in self.tests:
            kind, _, name = entry.partition(":")
            method = method_from_name(name or "param", B=self.B, M=self.M, weights=self.weights)
            out.append((kind.upper(), method))
        return out

    def means_for(self, a):
        if self.means == "default":
            return default_means(a, self.d)
        if self.means == "zero":
            return [np.zeros(self.d) for _ in range(a)]
        return [np.asarray(m, dtype=float) for m in self.means]


@dataclass
class ScenarioResult:
    """Rejection rates for every (test, cell) pair.

    ``rows`` are dicts with keys ``test, kind, method, cell, sizes, rate,
    se, n_sim, elapsed``; ``cell`` is ``N`` (type-I) or ``delta`` (power).
    """

    study: str
    rows: list = field(default_factory=list)
    config: SimConfig = None

    def rate(self, test, cell):
        for r in self.rows:
            if r["test"] == test and r["cell"] == cell:
                return r["rate"]
        raise KeyError((test, cell))

    def curve(self, test):
        pts = [(r["cell"], r["rate"], r["se"]) for r in self.rows if r["test"] == test]
        return sorted(pts)

    def tests(self):
        seen = []
        for r in self.rows:
            if r["test"] not in seen:
                seen.append(r["test"])
        return seen

    def cells(self):
        seen = []
        for r in self.rows:
            if r["cell"] not in seen:
                seen.append(r["cell"])
        return seen


def _spawn_seed(*key):
    ss = np.random.SeedSequence(key[0], spawn_key=tuple(key[1:]))
    hi, lo = ss.generate_state(2, dtype=np.uint64)
    return (int(hi) << 64) | int(lo)


def _dataset(cfg, sizes, seed, cell, sim, delta_diag=None):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(cell, sim, 0)))
    V = cfg.covariance()
    mus = cfg.means_for(len(sizes))
    groups = []
    for i, n in enumerate(sizes):
        Z = gen_errors(cfg.distribution, cfg.d, n, rng)
        X = apply_model(mus[i], V, Z)
        if delta_diag is not None and i == 0:
            X = X * delta_diag
        groups.append(X)
    return groups


def simulated_dataset(cfg, sizes, sim, cell=0, delta_diag=None):
    """Dataset ``sim`` of ``cell`` and its resampling plan, as used by the studies."""
    groups = _dataset(cfg, sizes, cfg.seed, cell, sim, delta_diag)
    return groups, ResamplingPlan(master_seed=_spawn_seed(cfg.seed, cell, sim, 1))


def _block_worker(args):
    cfg, sizes, cell, sims, delta_diag = args
    spec = cfg.hypothesis()
    tests = cfg.test_list()
    rejections = np.zeros(len(tests), dtype=np.int64)
    elapsed = np.zeros(len(tests))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for s in sims:
            groups = _dataset(cfg, sizes, cfg.seed, cell, s, delta_diag)
            plan = ResamplingPlan(master_seed=_spawn_seed(cfg.seed, cell, s, 1))
            for j, (kind, method) in enumerate(tests):
                t0 = time.perf_counter()
                res = run_test(groups, spec, kind, method, plan)
                elapsed[j] += time.perf_counter() - t0
                rejections[j] += res.p_value <= cfg.alpha
    return rejections, elapsed


def _run_cell(cfg, sizes, cell, delta_diag=None):
    blocks = [range(start, min(start + _BLOCK, cfg.n_sim))
              for start in range(0, cfg.n_sim, _BLOCK)]
    jobs = [(cfg, sizes, cell, blk, delta_diag) for blk in blocks]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_block_worker, jobs))
    else:
        parts = [_block_worker(j) for j in jobs]
    rej = sum(p[0] for p in parts)
    el = sum(p[1] for p in parts)
    return rej, el


def _rows(cfg, cell_value, sizes, rej, el):
    rows = []
    for j, (kind, method) in enumerate(cfg.test_list()):
        rate = rej[j] / cfg.n_sim
        rows.append({
            "test": method_label(kind, method),
            "kind": kind,
            "method": type(method).__name__,
            "cell": cell_value,
            "sizes": "/".join(str(n) for n in sizes),
            "rate": float(rate),
            "se": math.sqrt(rate * (1 - rate) / cfg.n_sim),
            "n_sim": cfg.n_sim,
            "elapsed": float(el[j]),
        })
    return rows


def type1_study(cfg):
    """Rejection rates under the null hypothesis for every sample size."""
    if cfg.alternative != "none":
        raise ValueError("type1_study needs alternative='none'")
    result = ScenarioResult("type1", config=cfg)
    for c, sizes in enumerate(cfg.cells()):
        rej, el = _run_cell(cfg, sizes, c)
        result.rows.extend(_rows(cfg, int(sum(sizes)), sizes, rej, el))
    return result


def power_study(cfg):
    """Rejection-rate curves over ``cfg.deltas`` for the first cell's sizes.

    The alternative multiplies group 1's observations by ``Delta``.
    """
    if cfg.alternative == "none":
        raise ValueError("power_study needs a one_point or trend alternative")
    sizes = cfg.cells()[0]
    result = ScenarioResult("power", config=cfg)
    for c, delta in enumerate(cfg.deltas):
        diag = alternative_matrix(cfg.alternative, cfg.d, delta)
        rej, el = _run_cell(cfg, sizes, c, diag)
        result.rows.extend(_rows(cfg, float(delta), sizes, rej, el))
    return result


@dataclass
class TimingResult:
    rows: list = field(default_factory=list)

    def ratio(self, test, d):
        for r in self.rows:
            if r["test"] == test and r["d"] == d:
                return r["ratio"]
        raise KeyError((test, d))


def timing_study(cfg, forms=("quadratic", "reduced"), dims=(2, 5, 10, 20), reps=5):
    """Mean wall time per test for two hypothesis forms; ratio is second / first.

    The same datasets and seeds are used for both forms. When both forms
    are equal the form is timed once and the ratio is exactly 1.
    """
    first, second = forms
    out = TimingResult()
    for d in dims:
        dcfg = replace(cfg, d=d, full_scale=False)
        sizes = dcfg.cells()[0]
        specs = {f: dcfg.hypothesis(f) for f in set(forms)}
        times = {f: np.zeros(len(dcfg.test_list())) for f in specs}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for rep in range(reps):
                groups = _dataset(dcfg, sizes, dcfg.seed, d, rep)
                plan = ResamplingPlan(master_seed=_spawn_seed(dcfg.seed, d, rep, 1))
                for f, spec in specs.items():
                    for j, (kind, method) in enumerate(dcfg.test_list()):
                        t0 = time.perf_counter()
                        run_test(groups, spec, kind, method, plan)
                        times[f][j] += time.perf_counter() - t0
        for j, (kind, method) in enumerate(dcfg.test_list()):
            t1 = times[first][j] / reps
            t2 = times[second][j] / reps
            out.rows.append({"test": method_label(kind, method), "d": d,
                             f"time_{first}": t1, f"time_{second}": t2,
                             "ratio": 1.0 if first == second else t2 / t1})
    return out
