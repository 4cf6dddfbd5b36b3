"""Tolerance-aware dense linear algebra primitives.

All rank, null-space and subspace decisions in this package flow through the
functions here, parameterized by a single :class:`ToleranceConfig`, so that
the iterative subspace pruning never mixes inconsistent thresholds.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InternalInvariantViolation, InvalidInput

__all__ = [
    "ToleranceConfig",
    "DEFAULT_TOL",
    "EigenpairSet",
    "numerical_rank",
    "null_space_basis",
    "pseudo_inverse",
    "eig",
    "orthonormal_range",
    "principal_angles",
    "subspace_equal",
]


@dataclass(frozen=True)
class ToleranceConfig:
    """Shared numerical thresholds.

    Attributes
    ----------
    rank_rtol : float
        Relative singular-value threshold.  A singular value counts toward
        the rank when it exceeds ``rank_rtol * sigma_max * max(rows, cols)``.
    eig_match_atol : float
        Absolute tolerance for matching eigenvalues and eigenvector residuals
        in the forward-backward comparison.
    subspace_atol : float
        Largest principal angle (radians) below which two subspaces are
        considered equal.
    """

    rank_rtol: float = 1e-10
    eig_match_atol: float = 1e-8
    subspace_atol: float = 1e-8

    def __post_init__(self):
        for name in ("rank_rtol", "eig_match_atol", "subspace_atol"):
            value = getattr(self, name)
            if not (value > 0.0):
                raise InvalidInput(f"{name} must be strictly positive, got {value}")


DEFAULT_TOL = ToleranceConfig()

# The Gram (normal-equations) route squares the condition number, so its
# singular values for near-null directions sit on a noise floor of about
# sqrt(eps) * sigma_max.  It is only safe when the rank threshold
# rank_rtol * sigma_max * rows lies well above that floor, which for the
# default rank_rtol needs a few thousand rows.
_GRAM_MIN_ROWS = 4096
_GRAM_MIN_ASPECT = 8


def _as_matrix(M, name="matrix", allow_complex=False):
    arr = np.asarray(M)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if np.iscomplexobj(arr):
        if not allow_complex:
            raise InvalidInput(f"{name} must be real-valued")
        arr = arr.astype(np.complex128, copy=False)
    else:
        arr = arr.astype(np.float64, copy=False)
    if arr.size and not np.all(np.isfinite(arr)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


def _use_gram(shape):
    rows, cols = shape
    return rows >= _GRAM_MIN_ROWS and rows >= _GRAM_MIN_ASPECT * cols


def _rank_threshold(s, shape, tol):
    smax = s[0] if s.size else 0.0
    return tol.rank_rtol * smax * max(shape)


def _singular_values(M):
    """All ``cols`` singular values of M, descending (padded with zeros)."""
    rows, cols = M.shape
    if _use_gram(M.shape):
        w = np.linalg.eigvalsh(M.conj().T @ M)
        return np.sqrt(np.clip(w[::-1], 0.0, None))
    s = np.linalg.svd(M, compute_uv=False)
    if s.size < cols:
        s = np.concatenate([s, np.zeros(cols - s.size)])
    return s


def _right_singular_pairs(M):
    """Singular values (descending, length cols) and all right singular vectors."""
    rows, cols = M.shape
    if _use_gram(M.shape):
        w, V = np.linalg.eigh(M.conj().T @ M)
        s = np.sqrt(np.clip(w[::-1], 0.0, None))
        return s, V[:, ::-1]
    _, s, Vt = np.linalg.svd(M, full_matrices=rows < cols)
    if s.size < cols:
        s = np.concatenate([s, np.zeros(cols - s.size)])
    return s, Vt.conj().T


def numerical_rank(M, tol=DEFAULT_TOL):
    """Number of singular values of M above the relative rank threshold."""
    M = _as_matrix(M, "M", allow_complex=True)
    if M.size == 0:
        return 0
    s = _singular_values(M)
    return int(np.sum(s > _rank_threshold(s, M.shape, tol)))


def null_space_basis(M, tol=DEFAULT_TOL):
    """Orthonormal basis of the numerical null space of M.

    Returns an array of shape ``(cols, cols - rank)`` whose columns are the
    trailing right singular vectors of M; the array has zero columns when
    the null space is trivial.  ``M @ Z`` is tolerance-small by construction
    and ``numerical_rank(M) + Z.shape[1] == cols`` always holds.
    """
    M = _as_matrix(M, "M", allow_complex=True)
    s, V = _right_singular_pairs(M)
    rank = int(np.sum(s > _rank_threshold(s, M.shape, tol)))
    return V[:, rank:]


def pseudo_inverse(M, tol=DEFAULT_TOL):
    """Moore-Penrose pseudo-inverse with singular values truncated at the
    same relative threshold used for rank decisions."""
    M = _as_matrix(M, "M", allow_complex=True)
    if M.size == 0:
        return np.zeros((M.shape[1], M.shape[0]))
    return np.linalg.pinv(M, rcond=tol.rank_rtol * max(M.shape))


@dataclass(frozen=True)
class EigenpairSet:
    """Right eigenpairs of a real square matrix.

    Eigenvectors are unit 2-norm columns with the largest-magnitude entry
    rotated onto the positive real axis.  Non-real eigenvalues appear in
    exactly conjugate adjacent pairs (the second member's eigenvector is the
    exact conjugate of the first's); ``conj_partner[i]`` gives the index of
    the pair member, or -1 for real eigenvalues.
    """

    values: np.ndarray
    vectors: np.ndarray
    is_real: np.ndarray
    conj_partner: np.ndarray

    def __len__(self):
        return self.values.size

    def pairs(self):
        """Iterate over (eigenvalue, eigenvector-column) tuples."""
        for j in range(len(self)):
            yield self.values[j], self.vectors[:, j]


def _normalize_eigenvector(v):
    v = v / np.linalg.norm(v)
    j = int(np.argmax(np.abs(v)))
    phase = v[j] / abs(v[j])
    return v * np.conj(phase)


def eig(M):
    """All eigenvalue / right-eigenvector pairs of a real square matrix.

    Raises
    ------
    InvalidInput
        If M is not square, real and finite.
    """
    M = _as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise InvalidInput(f"eig requires a square matrix, got shape {M.shape}")
    lam, V = np.linalg.eig(M)
    k = lam.size
    values = np.asarray(lam, dtype=np.complex128).copy()
    vectors = np.asarray(V, dtype=np.complex128).copy()
    is_real = np.zeros(k, dtype=bool)
    partner = np.full(k, -1, dtype=np.intp)
    j = 0
    while j < k:
        if values[j].imag == 0.0:
            is_real[j] = True
            vectors[:, j] = _normalize_eigenvector(vectors[:, j])
            j += 1
            continue
        # LAPACK dgeev emits complex conjugate pairs adjacently with exactly
        # conjugate eigenvalues and eigenvectors.
        if j + 1 >= k or values[j + 1] != np.conj(values[j]):
            raise InternalInvariantViolation(
                "eigendecomposition did not produce adjacent conjugate pairs"
            )
        v = _normalize_eigenvector(vectors[:, j])
        vectors[:, j] = v
        vectors[:, j + 1] = np.conj(v)
        values[j + 1] = np.conj(values[j])
        partner[j] = j + 1
        partner[j + 1] = j
        j += 2
    return EigenpairSet(values=values, vectors=vectors, is_real=is_real,
                        conj_partner=partner)


def orthonormal_range(M, tol=DEFAULT_TOL):
    """Orthonormal basis (columns) of the numerical column span of M."""
    M = _as_matrix(M, "M", allow_complex=True)
    if M.size == 0:
        return np.zeros((M.shape[0], 0), dtype=M.dtype)
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    rank = int(np.sum(s > _rank_threshold(s, M.shape, tol)))
    return U[:, :rank]


def principal_angles(P, Q, tol=DEFAULT_TOL):
    """Principal angles (radians, ascending) between the column spans of P and Q.

    The spans are orthonormalized at the shared rank threshold first; the
    angles themselves come from the cosine/sine-composite algorithm, which
    stays accurate for angles far below sqrt(machine eps).
    """
    P = _as_matrix(P, "P", allow_complex=True)
    Q = _as_matrix(Q, "Q", allow_complex=True)
    if P.shape[0] != Q.shape[0]:
        raise InvalidInput("P and Q must have the same number of rows")
    QP = orthonormal_range(P, tol)
    QQ = orthonormal_range(Q, tol)
    if QP.shape[1] == 0 or QQ.shape[1] == 0:
        return np.zeros(0)
    return np.sort(scipy.linalg.subspace_angles(QP, QQ))


def subspace_equal(P, Q, tol=DEFAULT_TOL):
    """True iff the column spans of P and Q coincide.

    Spans of different dimension are unequal; otherwise equality means every
    principal angle is at most ``tol.subspace_atol``.
    """
    P = _as_matrix(P, "P", allow_complex=True)
    Q = _as_matrix(Q, "Q", allow_complex=True)
    if P.shape[0] != Q.shape[0]:
        raise InvalidInput("P and Q must have the same number of rows")
    QP = orthonormal_range(P, tol)
    QQ = orthonormal_range(Q, tol)
    if QP.shape[1] != QQ.shape[1]:
        return False
    if QP.shape[1] == 0:
        return True
    angles = scipy.linalg.subspace_angles(QP, QQ)
    return bool(np.max(angles) <= tol.subspace_atol)
