"""Half-vectorization and the small dense linear-algebra kernel.

Ordering convention
-------------------
``vech`` stacks the *upper* triangle of a symmetric ``d x d`` matrix row by
row::

    (v11, v12, ..., v1d, v22, ..., v2d, ..., vdd)

This is the order used for every vector and hypothesis matrix in the
package. Many other libraries (and the classical duplication-matrix
literature) use the column-major *lower* triangle instead; for a symmetric
matrix that is a different permutation of the same numbers. Use
:func:`vech_to_colmajor` / :func:`colmajor_to_vech` to convert.
"""

import math

import numpy as np

from .errors import EmptyList, NoConvergence, NonTriangularLength, NotPSD

__all__ = [
    "vech_len",
    "dim_from_vech_len",
    "vech_indices",
    "vech",
    "unvech",
    "vech_outer",
    "diag_indicator",
    "vech_to_colmajor",
    "colmajor_to_vech",
    "centering_matrix",
    "kron",
    "direct_sum",
    "mp_inverse",
    "sym_eigen",
    "psd_factor",
]


def vech_len(d):
    return d * (d + 1) // 2


def dim_from_vech_len(p):
    """Return ``d`` with ``d(d+1)/2 == p`` or raise :class:`NonTriangularLength`."""
    d = (math.isqrt(8 * p + 1) - 1) // 2
    if p < 1 or vech_len(d) != p:
        raise NonTriangularLength(f"length {p} is not a triangular number")
    return d


def vech_indices(d):
    """Row/column index arrays of the upper triangle in row-wise order."""
    return np.triu_indices(d)


def vech(S):
    """Half-vectorize a symmetric matrix (or a stack of them along axis 0).

    >>> vech(np.eye(2))
    array([1., 0., 1.])
    """
    S = np.asarray(S, dtype=float)
    r, c = vech_indices(S.shape[-1])
    return S[..., r, c]


def unvech(v):
    """Inverse of :func:`vech`; rebuilds the full symmetric matrix."""
    v = np.asarray(v, dtype=float)
    d = dim_from_vech_len(v.shape[-1])
    r, c = vech_indices(d)
    S = np.zeros(v.shape[:-1] + (d, d))
    S[..., r, c] = v
    S[..., c, r] = v
    return S


def vech_outer(X):
    """Rows ``vech(x_k x_k^T)`` for the rows ``x_k`` of ``X`` (shape n x d)."""
    X = np.asarray(X, dtype=float)
    r, c = vech_indices(X.shape[-1])
    return X[..., r] * X[..., c]


def diag_indicator(d):
    """The vector ``h_d``: ones at the vech positions of diagonal entries.

    ``diag_indicator(d) @ vech(S) == trace(S)``.
    """
    r, c = vech_indices(d)
    return (r == c).astype(float)


def _colmajor_perm(d):
    # column-major lower triangle visits (i, j), i >= j, j outer; for a
    # symmetric matrix that is the upper-triangle entry (j, i)
    pos = {}
    r, c = vech_indices(d)
    for k, (i, j) in enumerate(zip(r, c)):
        pos[(i, j)] = k
    return np.array([pos[(j, i)] for j in range(d) for i in range(j, d)])


def vech_to_colmajor(v):
    """Reorder a row-wise upper vech into column-major lower-triangle order."""
    v = np.asarray(v, dtype=float)
    return v[..., _colmajor_perm(dim_from_vech_len(v.shape[-1]))]


def colmajor_to_vech(w):
    w = np.asarray(w, dtype=float)
    perm = _colmajor_perm(dim_from_vech_len(w.shape[-1]))
    out = np.empty_like(w)
    out[..., perm] = w
    return out


def centering_matrix(a):
    """``P_a = I_a - J_a / a``."""
    return np.eye(a) - np.full((a, a), 1.0 / a)


def kron(A, B):
    return np.kron(np.atleast_2d(A), np.atleast_2d(B))


def direct_sum(blocks):
    """Block-diagonal assembly of a nonempty list of matrices."""
    blocks = [np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks]
    if not blocks:
        raise EmptyList("direct_sum needs at least one block")
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out


def mp_inverse(A, rel_tol=None):
    """Moore-Penrose inverse via the SVD.

    Singular values at or below ``rel_tol * sigma_max`` are treated as
    zero. The default ``rel_tol`` is ``max(m, k) * eps``. ``A`` may be a
    stack of matrices (leading axes are batch axes); the threshold is then
    applied per matrix.
    """
    A = np.asarray(A, dtype=float)
    m, k = A.shape[-2:]
    if rel_tol is None:
        rel_tol = max(m, k) * np.finfo(float).eps
    if A.size == 0:
        return np.zeros(A.shape[:-2] + (k, m))
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    cutoff = rel_tol * s[..., :1]
    keep = s > cutoff
    s_inv = np.divide(1.0, s, out=np.zeros_like(s), where=keep)
    return np.matmul(np.swapaxes(Vt, -1, -2) * s_inv[..., None, :],
                     np.swapaxes(U, -1, -2))


def sym_eigen(S):
    """Eigenvalues (descending) and matching eigenvectors (columns)."""
    S = np.asarray(S, dtype=float)
    try:
        lam, Q = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return lam[::-1], Q[:, ::-1]


def psd_factor(S, clamp_tol=1e-10):
    """Symmetric square root ``L`` of a numerically PSD matrix, ``L @ L.T == S``.

    Eigenvalues in ``[-clamp_tol * ||S||, 0)`` are clamped to zero; anything
    more negative raises :class:`NotPSD`. Rank-deficient input is fine.
    """
    S = np.asarray(S, dtype=float)
    S = (S + S.T) / 2
    lam, Q = sym_eigen(S)
    scale = np.max(np.abs(lam)) if lam.size else 0.0
    if lam.size and lam[-1] < -clamp_tol * scale:
        raise NotPSD(f"smallest eigenvalue {lam[-1]:.3e} below -{clamp_tol:g}*||S||")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return (Q * root) @ Q.T
