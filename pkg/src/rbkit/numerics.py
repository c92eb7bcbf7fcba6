"""Dense numerical kernels shared by the rest of the package.

Everything here operates on plain float64 numpy arrays.  Inner products are
either the standard Euclidean one or a weighted one defined by an explicit
SPD Gram matrix; the Gram case is handled by mapping vectors through the
Cholesky factor so that all norms reduce to Euclidean norms of transformed
vectors.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

__all__ = [
    "GramSpec",
    "SingularSystemError",
    "orthonormalize",
    "pivoted_qr",
    "complement_project",
    "solve_dense",
    "smallest_symmetric_eigenvalue",
]

#: Default tolerance for dropping a nearly dependent vector during
#: orthonormalization, relative to the vector's original norm.
DEFAULT_DROP_TOL = 1e-10

#: Default relative diagonal threshold for the rank decision in pivoted QR.
DEFAULT_RANK_TOL = 1e-10


class SingularSystemError(np.linalg.LinAlgError):
    """A linear system is singular to working precision."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


@dataclass
class GramSpec:
    """Inner-product specification: identity or an explicit SPD matrix.

    For the explicit case the Cholesky factor ``L`` (``G = L L^T``) is
    computed once;  ``sqrt_apply`` maps a vector v to ``L^T v`` (so that
    ``||L^T v|| = ||v||_G``) and ``invsqrt_apply`` maps a functional vector
    g to ``L^{-1} g`` (so that ``||L^{-1} g||`` is the dual norm of g).
    """

    matrix: np.ndarray | None = None
    _chol: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.matrix is not None:
            G = np.asarray(self.matrix, dtype=float)
            if G.ndim != 2 or G.shape[0] != G.shape[1]:
                raise ValueError("Gram matrix must be square")
            sym_defect = np.linalg.norm(G - G.T) / max(np.linalg.norm(G), 1.0)
            if sym_defect > 1e-12:
                raise ValueError(f"Gram matrix not symmetric (defect {sym_defect:.2e})")
            try:
                self._chol = np.linalg.cholesky(G)
            except np.linalg.LinAlgError as exc:
                raise ValueError("Gram matrix is not positive definite") from exc
            self.matrix = G

    @property
    def is_identity(self):
        return self.matrix is None

    def inner(self, u, v):
        if self.is_identity:
            return float(np.dot(u, v))
        return float(u @ (self.matrix @ v))

    def norm(self, v):
        if self.is_identity:
            return float(np.linalg.norm(v))
        return float(np.sqrt(max(self.inner(v, v), 0.0)))

    def sqrt_apply(self, v):
        """Map v to L^T v; Euclidean norm of the result is ||v||_G."""
        if self.is_identity:
            return np.asarray(v, dtype=float)
        return self._chol.T @ v

    def invsqrt_apply(self, g):
        """Map a functional vector g to L^{-1} g (columns if g is 2-D)."""
        if self.is_identity:
            return np.asarray(g, dtype=float)
        return sla.solve_triangular(self._chol, g, lower=True)

    def riesz(self, g):
        """Riesz representer of the functional with coefficient vector g."""
        if self.is_identity:
            return np.asarray(g, dtype=float)
        return sla.cho_solve((self._chol, True), g)


def _check_finite(a, name):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")


def _mgs_coeffs(basis, v, gram):
    """Project v onto the span of ``basis`` columns via modified Gram-Schmidt
    with one re-orthogonalization pass.  Returns (coefficients, remainder)."""
    w = np.array(v, dtype=float)
    n = basis.shape[1]
    coeffs = np.zeros(n)
    for _ in range(2):
        for j in range(n):
            h = gram.inner(basis[:, j], w)
            coeffs[j] += h
            w -= h * basis[:, j]
    return coeffs, w


def orthonormalize(vectors, gram=None, drop_tol=DEFAULT_DROP_TOL):
    """Gram-orthonormalize a list of vectors, dropping dependent ones.

    Returns ``(basis, coeffs, kept)`` with ``basis`` an (n, k) array of
    orthonormal columns, ``coeffs`` an upper-triangular (k, len(vectors))
    matrix such that each kept input vector j equals ``basis @ coeffs[:, j]``,
    and ``kept`` the indices of the retained inputs.  A vector is dropped when
    its norm after projection falls below ``drop_tol`` times its own norm.
    """
    if gram is None:
        gram = GramSpec()
    if drop_tol <= 0:
        raise ValueError("drop_tol must be positive")
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    if not vectors:
        raise ValueError("need at least one vector")
    n = vectors[0].shape[0]
    for v in vectors:
        _check_finite(v, "input vector")
        if v.shape != (n,):
            raise ValueError("inconsistent vector lengths")

    basis = np.zeros((n, 0))
    cols = []
    kept = []
    for j, v in enumerate(vectors):
        orig = gram.norm(v)
        coeffs, w = _mgs_coeffs(basis, v, gram)
        wnorm = gram.norm(w)
        col = np.zeros(len(vectors))
        col[: basis.shape[1]] = coeffs
        if orig == 0.0 or wnorm < drop_tol * orig:
            cols.append(col)
            continue
        basis = np.column_stack([basis, w / wnorm])
        col[basis.shape[1] - 1] = wnorm
        cols.append(col)
        kept.append(j)
    k = basis.shape[1]
    coeffs = np.array(cols).T[:k, :] if cols else np.zeros((0, 0))
    return basis, coeffs, kept


def pivoted_qr(B, rank_tol_rel=DEFAULT_RANK_TOL):
    """Column-pivoted reduced QR with a rank decision on the R diagonal.

    Returns ``(Q, R, perm, rank)`` with ``B[:, perm] = Q @ R``, ``Q`` holding
    exactly ``rank`` orthonormal columns and ``R`` upper triangular with
    nonincreasing diagonal magnitudes.  The rank counts diagonal entries with
    ``|R_kk| > rank_tol_rel * |R_00|``.
    """
    B = np.asarray(B, dtype=float)
    _check_finite(B, "B")
    if not 0.0 < rank_tol_rel < 1.0:
        raise ValueError("rank_tol_rel must lie in (0, 1)")
    if B.size == 0 or not np.any(B):
        ncols = B.shape[1] if B.ndim == 2 else 0
        return (
            np.zeros((B.shape[0], 0)),
            np.zeros((0, ncols)),
            np.arange(ncols),
            0,
        )
    Q, R, perm = sla.qr(B, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.count_nonzero(diag > rank_tol_rel * diag[0]))
    return Q[:, :rank], R[:rank, :], perm, rank


def complement_project(Q, v):
    """Apply the orthogonal-complement projector (I - Q Q^T) to v.

    Two projection passes are used so that the result is orthogonal to the
    columns of Q at machine-precision level even for large columns counts.
    """
    v = np.asarray(v, dtype=float)
    if Q.size == 0:
        return v.copy()
    if Q.shape[0] != v.shape[0]:
        raise ValueError("dimension mismatch between Q and v")
    w = v - Q @ (Q.T @ v)
    w -= Q @ (Q.T @ w)
    return w


def solve_dense(A, b):
    """Solve a dense square system by LU with partial pivoting.

    Raises :class:`SingularSystemError` carrying the offending pivot
    magnitude when A is singular to working precision.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    _check_finite(A, "A")
    _check_finite(b, "b")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    with warnings.catch_warnings():
        # the pivot check below raises a richer error than scipy's warning
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(A, check_finite=False)
    diag = np.abs(np.diag(lu))
    pivot_min = float(diag.min()) if diag.size else 0.0
    if pivot_min <= np.finfo(float).eps * max(diag.max(initial=0.0), 1.0) * A.shape[0]:
        raise SingularSystemError(
            f"matrix singular to working precision (pivot {pivot_min:.3e})",
            pivot=pivot_min,
        )
    return sla.lu_solve((lu, piv), b, check_finite=False)


def smallest_symmetric_eigenvalue(A, gram=None):
    """Smallest eigenvalue of sym(A) = (A + A^T)/2 in the Gram inner product.

    This is the infimum of the Rayleigh quotient w^T sym(A) w / w^T G w.
    """
    A = np.asarray(A, dtype=float)
    _check_finite(A, "A")
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    S = 0.5 * (A + A.T)
    if gram is None or gram.is_identity:
        vals = sla.eigh(S, eigvals_only=True, subset_by_index=[0, 0])
    else:
        vals = sla.eigh(S, gram.matrix, eigvals_only=True, subset_by_index=[0, 0])
    return float(vals[0])
