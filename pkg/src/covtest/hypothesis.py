"""Catalog of hypothesis matrices ``C`` and targets ``zeta`` for ``C v = zeta``.

``v`` is the stacked vector ``(vech(V_1), ..., vech(V_a))`` in row-wise
upper-triangle order (see :mod:`covtest.matview`). Most hypotheses come in
two forms that share the same null set:

``quadratic``
    the symmetric projection-type matrix (``m == a*p`` rows);
``reduced``
    a full-row-rank matrix with as few rows as possible, which is cheaper.

For ``a > 2`` the reduced equality forms use successive differences
``e_i - e_{i+1}``.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import BadDimension, BadGroupCount, DimensionMismatch, NonFinite
from .matview import centering_matrix, diag_indicator, kron, vech, vech_len

__all__ = [
    "FORMS",
    "HypothesisSpec",
    "equal_covariances",
    "given_covariance",
    "equal_diagonal",
    "equal_traces",
    "given_trace",
    "twoway_trace_effects",
    "validate",
    "build",
    "CATALOG",
]

FORMS = ("quadratic", "reduced")


@dataclass(frozen=True)
class HypothesisSpec:
    C: np.ndarray
    zeta: np.ndarray
    a: int
    d: int
    scenario: str = "custom"
    form: str = "custom"

    def __post_init__(self):
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        zeta = np.atleast_1d(np.asarray(self.zeta, dtype=float))
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "zeta", zeta)
        validate(self, self.a, self.d)

    @property
    def p(self):
        return vech_len(self.d)

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def rank(self):
        return int(np.linalg.matrix_rank(self.C))

    def blocks(self):
        """Column blocks ``C_i`` (``m x p``) so that ``C v = sum_i C_i v_i``."""
        p = self.p
        return [self.C[:, i * p:(i + 1) * p] for i in range(self.a)]

    def holds(self, v, atol=1e-10):
        return bool(np.allclose(self.C @ np.asarray(v, float), self.zeta, rtol=0, atol=atol))

    def to_dict(self):
        return {"C": self.C.tolist(), "zeta": self.zeta.tolist(), "a": self.a,
                "d": self.d, "scenario": self.scenario, "form": self.form}

    @classmethod
    def from_dict(cls, payload):
        C = np.atleast_2d(np.asarray(payload["C"], dtype=float))
        zeta = payload.get("zeta")
        if zeta is None:
            zeta = np.zeros(C.shape[0])
        a = int(payload.get("a", 1))
        d = payload.get("d")
        if d is None:
            from .matview import dim_from_vech_len
            d = dim_from_vech_len(C.shape[1] // a)
        return cls(C=C, zeta=zeta, a=a, d=int(d),
                   scenario=payload.get("scenario", "custom"),
                   form=payload.get("form", "custom"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def validate(spec, a, d):
    """Check that ``spec`` fits a design with ``a`` groups of dimension ``d``."""
    C = np.atleast_2d(np.asarray(spec.C, dtype=float))
    zeta = np.atleast_1d(np.asarray(spec.zeta, dtype=float))
    ap = a * vech_len(d)
    if C.shape[1] != ap:
        raise DimensionMismatch(
            f"C has {C.shape[1]} columns, expected a*p = {a}*{vech_len(d)} = {ap}")
    if C.shape[0] > ap:
        raise DimensionMismatch(f"C has {C.shape[0]} rows, more than a*p = {ap}")
    if zeta.shape != (C.shape[0],):
        raise DimensionMismatch(f"zeta has length {zeta.size}, C has {C.shape[0]} rows")
    if not (np.all(np.isfinite(C)) and np.all(np.isfinite(zeta))):
        raise NonFinite("C and zeta must be finite")
    return True


def _check_form(form, allowed=FORMS):
    if form not in allowed:
        raise ValueError(f"form must be one of {allowed}, got {form!r}")


def _successive_differences(a):
    D = np.zeros((a - 1, a))
    idx = np.arange(a - 1)
    D[idx, idx] = 1.0
    D[idx, idx + 1] = -1.0
    return D


def equal_covariances(a, d, form="quadratic"):
    """``V_1 = ... = V_a``."""
    _check_form(form)
    if a < 2:
        raise BadGroupCount("equal_covariances needs a >= 2")
    p = vech_len(d)
    if form == "quadratic":
        C = kron(centering_matrix(a), np.eye(p))
    else:
        C = kron(_successive_differences(a), np.eye(p))
    return HypothesisSpec(C, np.zeros(C.shape[0]), a, d, "A" if a == 2 else "E", form)


def given_covariance(Sigma0):
    """One group, ``V_1 = Sigma0``."""
    Sigma0 = np.asarray(Sigma0, dtype=float)
    d = Sigma0.shape[0]
    p = vech_len(d)
    return HypothesisSpec(np.eye(p), vech(Sigma0), 1, d, "given_covariance", "quadratic")


def equal_diagonal(d, form="quadratic"):
    """One group, ``v_11 = v_22 = ... = v_dd``."""
    _check_form(form)
    if d < 2:
        raise BadDimension("equal_diagonal needs d >= 2")
    h = diag_indicator(d)
    if form == "quadratic":
        C = np.diag(h) - np.outer(h, h) / d
    else:
        # row j encodes v_11 - v_{j+1,j+1} = 0
        diag_pos = np.flatnonzero(h)
        C = np.zeros((d - 1, vech_len(d)))
        C[:, diag_pos[0]] = 1.0
        C[np.arange(d - 1), diag_pos[1:]] = -1.0
    return HypothesisSpec(C, np.zeros(C.shape[0]), 1, d, "B", form)


def equal_traces(a, d, form="quadratic"):
    """``tr(V_1) = ... = tr(V_a)``."""
    _check_form(form)
    if a < 2:
        raise BadGroupCount("equal_traces needs a >= 2")
    h = diag_indicator(d)
    if form == "quadratic":
        C = kron(centering_matrix(a), np.outer(h, h) / d)
    else:
        C = kron(_successive_differences(a), h[None, :] / d)
    return HypothesisSpec(C, np.zeros(C.shape[0]), a, d, "C", form)


def given_trace(d, gamma, form="reduced"):
    """One group, ``tr(V_1) = gamma``.

    ``form="embedded"`` gives the ``p``-row variant ``C = e_1 h^T``,
    ``zeta = e_1 gamma``.
    """
    _check_form(form, FORMS + ("embedded",))
    h = diag_indicator(d)
    p = vech_len(d)
    if form == "reduced":
        C, zeta = h[None, :] / d, np.array([gamma / d])
    elif form == "quadratic":
        C, zeta = np.outer(h, h) / d, h * gamma / d
    else:
        C = np.zeros((p, p))
        C[0] = h
        zeta = np.zeros(p)
        zeta[0] = gamma
    return HypothesisSpec(C, zeta, 1, d, "D", form)


def twoway_trace_effects(a, b, d, effect="main_A"):
    """Trace effects in an ``a x b`` layout, groups ordered ``(i1, i2)`` with ``i2`` fastest."""
    if a < 2 or b < 2:
        raise BadGroupCount("twoway_trace_effects needs a, b >= 2")
    h = diag_indicator(d)
    T = np.outer(h, h) / d
    if effect == "main_A":
        G = kron(centering_matrix(a), np.full((b, b), 1.0 / b))
    elif effect == "main_B":
        G = kron(np.full((a, a), 1.0 / a), centering_matrix(b))
    elif effect == "interaction":
        G = kron(centering_matrix(a), centering_matrix(b))
    else:
        raise ValueError(f"unknown effect {effect!r}")
    C = kron(G, T)
    return HypothesisSpec(C, np.zeros(C.shape[0]), a * b, d, f"twoway_{effect}", "quadratic")


CATALOG = {
    "equal_covariances": equal_covariances,
    "given_covariance": given_covariance,
    "equal_diagonal": equal_diagonal,
    "equal_traces": equal_traces,
    "given_trace": given_trace,
    "twoway_trace_effects": twoway_trace_effects,
}

# scenario letters used in the simulation studies
SCENARIOS = {"A": "equal_covariances", "B": "equal_diagonal", "C": "equal_traces",
             "D": "given_trace", "E": "equal_covariances"}


def build(name, a, d, form="quadratic", **params):
    """Build a catalog hypothesis by name (or scenario letter) for a design."""
    name = SCENARIOS.get(name, name)
    if name in ("equal_covariances", "equal_traces"):
        return CATALOG[name](a, d, form)
    if name == "equal_diagonal":
        return equal_diagonal(d, form)
    if name == "given_trace":
        return given_trace(d, float(params["gamma"]), form)
    if name == "given_covariance":
        return given_covariance(np.asarray(params["Sigma0"], dtype=float))
    if name == "twoway_trace_effects":
        b = int(params["b"])
        if a % b:
            raise BadGroupCount(f"{a} groups do not split into levels of size b={b}")
        return twoway_trace_effects(a // b, b, d, params.get("effect", "main_A"))
    raise KeyError(f"unknown hypothesis {name!r}")
