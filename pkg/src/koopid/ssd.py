"""Symmetric subspace decomposition of dictionary snapshot matrices.

The decomposition iteratively prunes a dictionary down to the maximal
subspace on which the snapshots evolve linearly: each round takes the null
space of the stacked pair ``[A_i, B_i]``, whose upper block recombines the
current dictionary into candidates shared by the ranges of both snapshot
matrices, and stops once the candidate count reaches the current dimension.
An epsilon-truncated variant replaces the stacked pair with its nearest
rank-deficient matrix (by trailing singular-value mass) before each
reduction, which identifies subspaces that evolve only approximately
linearly.
"""

import csv
import logging
import pathlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dictionary as dict_mod
from . import numerics
from .edmd import (
    SMALL_EIGENVALUE,
    MatchedEvolution,
    _require_full_rank,
    check_linear_evolution,
    edmd_matrix,
    relative_residual,
)
from .errors import InternalInvariantViolation, InvalidInput
from .numerics import DEFAULT_TOL

__all__ = [
    "SsdIteration",
    "SsdResult",
    "ReducedKoopman",
    "EigenfunctionGrid",
    "ssd",
    "approximate_ssd",
    "reduced_koopman",
    "lift_eigenvectors",
    "eigenfunction_grid",
    "write_grid_csv",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SsdIteration:
    """One round of the pruning loop.

    ``subspace_dim`` is the dimension entering the round (rows of the upper
    null-space block) and ``null_dim`` the number of null directions found
    (its columns); the round completes when null_dim >= subspace_dim.
    """

    subspace_dim: int
    null_dim: int
    action: str  # 'reduce' | 'complete' | 'empty'
    kept_rank: int = None
    truncation_ratio: float = None
    exact_fallback: bool = False


@dataclass(frozen=True)
class SsdResult:
    """Outcome of the decomposition.

    ``C`` is either None (no nonzero function in the span evolves linearly)
    or a full-column-rank matrix whose columns recombine the original
    dictionary into the identified subspace.  ``max_range_angle`` is the
    largest principal angle between ``DX @ C`` and ``DY @ C``, recorded as a
    quality diagnostic (tolerance-zero in exact mode).
    """

    C: np.ndarray
    iterations: int
    log: tuple
    mode: str  # 'exact' | 'approximate'
    epsilon: float = None
    max_range_angle: float = None

    @property
    def is_zero(self):
        return self.C is None

    @property
    def subspace_dim(self):
        return 0 if self.C is None else self.C.shape[1]


@dataclass(frozen=True)
class ReducedKoopman:
    """Koopman matrix restricted to an identified subspace, with its
    relative fitting residual e_r and (optionally) the reduced dictionary."""

    matrix: np.ndarray
    e_r: float
    dictionary: dict_mod.DerivedDictionary = None


def _check_preconditions(DX, DY, tol):
    DX = numerics._as_matrix(DX, "DX")
    DY = numerics._as_matrix(DY, "DY")
    if DX.shape != DY.shape:
        raise InvalidInput("snapshot matrices must have equal shapes")
    _require_full_rank(DX, DY, tol)
    if DX.shape[0] < 2 * DX.shape[1]:
        warnings.warn(
            "fewer than 2 * N_d snapshots; rank decisions may be fragile",
            UserWarning,
            stacklevel=3,
        )
    return DX, DY


def _truncation_split(s, epsilon, shape, tol):
    """Index k of the first singular value to zero out under the trailing
    sum-ratio rule, plus the achieved ratio and whether the rule had no
    admissible k and the exact rank decision was used instead.

    Zeroing is never more conservative than the exact rank decision:
    singular values under the rank threshold are numerically zero and in
    exact arithmetic would always belong to an admissible tail, so they are
    truncated regardless of how measurement noise inflated them.
    """
    total = float(np.sum(s))
    rank = int(np.sum(s > numerics._rank_threshold(s, shape, tol)))
    if total == 0.0:
        return 0, 0.0, False
    tail_ratios = np.cumsum(s[::-1])[::-1] / total
    admissible = np.nonzero(tail_ratios <= epsilon)[0]
    if admissible.size == 0:
        ratio = float(tail_ratios[rank]) if rank < s.size else 0.0
        return rank, ratio, True
    k = min(int(admissible[0]), rank)
    return k, float(tail_ratios[k]), False


def _finish(C, iterations, log, mode, epsilon, DX, DY, tol):
    max_angle = None
    if C is not None:
        angles = numerics.principal_angles(DX @ C, DY @ C, tol)
        max_angle = float(angles.max()) if angles.size else 0.0
    return SsdResult(C=C, iterations=iterations, log=tuple(log), mode=mode,
                     epsilon=epsilon, max_range_angle=max_angle)


def _ssd_loop(DX, DY, tol, epsilon):
    n_d = DX.shape[1]
    A, B = DX, DY
    C = np.eye(n_d)
    mode = "exact" if epsilon is None else "approximate"
    log = []
    iteration = 0
    while True:
        iteration += 1
        if iteration > n_d + 1:
            raise InternalInvariantViolation(
                "subspace dimension failed to decrease; inconsistent rank decisions"
            )
        m = A.shape[1]
        M = np.hstack([A, B])
        kept_rank = truncation_ratio = None
        fallback = False
        if epsilon is None:
            Z = numerics.null_space_basis(M, tol)
            next_A, next_B = A, B
        else:
            s, V = numerics._right_singular_pairs(M)
            kept_rank, truncation_ratio, fallback = _truncation_split(
                s, epsilon, M.shape, tol
            )
            if fallback:
                logger.info(
                    "iteration %d: no truncation index satisfies the ratio "
                    "condition for epsilon=%g; using the exact rank decision",
                    iteration, epsilon,
                )
            Z = V[:, kept_rank:]
            # continue with the rank-deficient replacement of [A, B]: project
            # out the truncated trailing directions
            kept = V[:, :kept_rank]
            M_trunc = M @ (kept @ kept.T)
            next_A, next_B = M_trunc[:, :m], M_trunc[:, m:]
        c = Z.shape[1]
        if c == 0:
            log.append(SsdIteration(m, 0, "empty", kept_rank, truncation_ratio,
                                    fallback))
            return _finish(None, iteration, log, mode, epsilon, DX, DY, tol)
        Z_A = Z[:m, :]
        if epsilon is None and c > m:
            raise InternalInvariantViolation(
                f"null space dimension {c} exceeds subspace dimension {m} in "
                "exact mode; the full-rank precondition has degraded"
            )
        if m <= c:
            log.append(SsdIteration(m, c, "complete", kept_rank,
                                    truncation_ratio, fallback))
            return _finish(C, iteration, log, mode, epsilon, DX, DY, tol)
        log.append(SsdIteration(m, c, "reduce", kept_rank, truncation_ratio,
                                fallback))
        if epsilon is None:
            # Z_A is the top block of an orthonormal stacked basis and is full
            # column rank, but generally not orthonormal itself; in exact mode
            # orthonormalizing it (a span-preserving right rotation) keeps the
            # products below from losing singular-value resolution over many
            # rounds.  The truncated mode must not rescale: its singular-value
            # ratios are taken of the blocks exactly as the reduction built
            # them.
            Z_A, _ = np.linalg.qr(Z_A)
        C = C @ Z_A
        A = next_A @ Z_A
        B = next_B @ Z_A


def ssd(DX, DY, tol=DEFAULT_TOL):
    """Maximal subspace of the dictionary span evolving linearly on the data.

    Requires both dictionary matrices to have full column rank.  Returns an
    :class:`SsdResult` whose ``C`` satisfies range(DX @ C) == range(DY @ C)
    (tolerance-exactly) and is maximal among all such recombinations; ``C``
    is None when no nonzero linear evolution exists in the span.
    """
    DX, DY = _check_preconditions(DX, DY, tol)
    return _ssd_loop(DX, DY, tol, epsilon=None)


def approximate_ssd(DX, DY, epsilon, tol=DEFAULT_TOL):
    """Epsilon-truncated decomposition for approximately invariant subspaces.

    At every round the stacked matrix is replaced by the rank-deficient
    matrix obtained by zeroing the smallest trailing group of singular
    values whose sum is at most ``epsilon`` times the total singular-value
    sum; the replacement (not the original blocks) is carried into the next
    round.  Larger epsilon keeps larger, less exactly invariant subspaces;
    the result records the achieved range angles and per-round truncation
    ratios so the pruning can be audited.
    """
    if not (0.0 < epsilon < 1.0):
        raise InvalidInput("epsilon must lie strictly between 0 and 1")
    DX, DY = _check_preconditions(DX, DY, tol)
    return _ssd_loop(DX, DY, tol, epsilon=float(epsilon))


def reduced_koopman(DX, DY, result, tol=DEFAULT_TOL, dictionary=None):
    """Least-squares Koopman matrix on the identified subspace.

    ``K = pinv(DX @ C) @ (DY @ C)`` together with the relative residual of
    the fit.  In exact mode the residual is tolerance-zero and K invertible;
    in approximate mode the residual measures the quality of the identified
    subspace.  If the original dictionary is supplied, the reduced dictionary
    ``D(x) @ C`` is attached to the result.
    """
    if result.is_zero:
        raise InvalidInput("the decomposition returned the zero subspace")
    DX = numerics._as_matrix(DX, "DX")
    DY = numerics._as_matrix(DY, "DY")
    DXC = DX @ result.C
    DYC = DY @ result.C
    K = numerics.pseudo_inverse(DXC, tol) @ DYC
    e_r = relative_residual(DXC, DYC, K)
    if result.mode == "exact":
        if e_r > 10.0 * tol.subspace_atol:
            warnings.warn(
                f"exact-mode reduced Koopman residual e_r = {e_r:.3e} exceeds "
                "the expected tolerance",
                UserWarning,
                stacklevel=2,
            )
        if numerics.numerical_rank(K, tol) < K.shape[1]:
            warnings.warn("exact-mode reduced Koopman matrix is singular",
                          UserWarning, stacklevel=2)
    reduced_dict = None
    if dictionary is not None:
        reduced_dict = dict_mod.restrict(dictionary, result.C, tol)
    return ReducedKoopman(matrix=K, e_r=e_r, dictionary=reduced_dict)


def lift_eigenvectors(DX, DY, result, reduced, tol=DEFAULT_TOL):
    """Eigenvectors of the reduced Koopman matrix mapped back to the
    original dictionary's coordinates.

    Every eigenpair (lambda, w) of the reduced matrix lifts to v = C @ w;
    in exact mode each lifted vector passes the data-level linear-evolution
    check with the same eigenvalue, and the lifted set spans, per eigenvalue,
    the same subspaces as the forward-backward matching on identical data.
    """
    if result.is_zero:
        raise InvalidInput("the decomposition returned the zero subspace")
    DX = numerics._as_matrix(DX, "DX")
    DY = numerics._as_matrix(DY, "DY")
    k_f = edmd_matrix(DX, DY, tol, direction="forward")
    k_b = edmd_matrix(DY, DX, tol, direction="backward")
    lifted = []
    for lam, w in numerics.eig(reduced.matrix).pairs():
        lam = complex(lam)
        if abs(lam) < SMALL_EIGENVALUE:
            logger.info("skipping lifted eigenpair with |lambda| = %.3e", abs(lam))
            continue
        v = numerics._normalize_eigenvector(result.C @ w)
        forward_defect = float(np.linalg.norm(k_f.matrix @ v - lam * v))
        backward_defect = float(np.linalg.norm(k_b.matrix @ v - v / lam))
        _, data_defect = check_linear_evolution(DX, DY, v, lam, tol)
        lifted.append(MatchedEvolution(
            eigenvalue=lam, coefficients=v,
            forward_defect=forward_defect,
            backward_defect=backward_defect,
            data_defect=data_defect,
        ))
    return lifted


@dataclass(frozen=True)
class EigenfunctionGrid:
    """Sampled magnitude and principal-branch phase of f(x) = D(x) @ v over
    a regular grid; ``points`` has one grid node per row."""

    points: np.ndarray
    abs_values: np.ndarray
    angles: np.ndarray
    shape: tuple = field(default=())


def eigenfunction_grid(dictionary, v, box, resolution):
    """Evaluate an identified function on a regular grid over a box.

    ``resolution`` is the number of nodes per axis (scalar or one value per
    dimension), at least 2 each.
    """
    box = [(float(lo), float(hi)) for lo, hi in box]
    n = len(box)
    if n != dictionary.state_dim:
        raise InvalidInput("box dimension must match the dictionary state dim")
    v = np.asarray(v, dtype=np.complex128).reshape(-1)
    if v.size != dictionary.size:
        raise InvalidInput("v length must equal the dictionary size")
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (n,))
    if np.any(res < 2):
        raise InvalidInput("resolution must be at least 2 per axis")
    axes = [np.linspace(lo, hi, r) for (lo, hi), r in zip(box, res)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.reshape(-1) for m in mesh])
    values = dict_mod.evaluate(dictionary, points) @ v
    return EigenfunctionGrid(points=points, abs_values=np.abs(values),
                             angles=np.angle(values), shape=tuple(int(r) for r in res))


def write_grid_csv(grid, path):
    """Write a grid as CSV with columns x_1..x_n,abs,angle."""
    path = pathlib.Path(path)
    n = grid.points.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x_{i+1}" for i in range(n)] + ["abs", "angle"])
        for point, a, theta in zip(grid.points, grid.abs_values, grid.angles):
            writer.writerow([f"{p:.17g}" for p in point]
                            + [f"{a:.17g}", f"{theta:.17g}"])
    return path
