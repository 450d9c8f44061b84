"""Starting values for the envelope objective.

Four candidates are built by ranking eigenvectors of M or M+U by the energy
each carries of U, standardized or raw:

    K_M        eigenvectors of M,    scored by g' M^{-1/2}UM^{-1/2} g
    K_MU       eigenvectors of M+U,  scored by g' (M+U)^{-1/2}U(M+U)^{-1/2} g
    K_M_unstd  eigenvectors of M,    scored by g' U g
    K_MU_unstd eigenvectors of M+U,  scored by g' U g

The candidate with the smallest span objective wins. Gaussian elimination
with partial pivoting then picks u well-conditioned rows of the winner to
anchor the coordinate chart the solver works in.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, PivotFailure, SingularProjection
from .linalg import Basis, basis_entries
from .objective import EnvelopeProblem, l_basis

log = logging.getLogger(__name__)

# Tie-break order for equal objective values in select_start.
CANDIDATE_ORDER = ("K_MU", "K_M", "K_MU_unstd", "K_M_unstd")

_PIVOT_COND_LIMIT = 1e12


@dataclass(frozen=True)
class StartCandidate:
    """A starting basis, the criterion that produced it, and its objective."""

    criterion: str
    basis: Basis
    score: float


@dataclass(frozen=True)
class PivotResult:
    """Row anchoring chosen by partial pivoting.

    perm lists the u pivot rows first (in pivot order) followed by the rest
    in ascending order; anchored_block is the corresponding u x u submatrix
    of the original basis; a_init is the coordinate matrix G2 G1^{-1} of the
    permuted split.
    """

    perm: np.ndarray
    anchored_block: np.ndarray
    a_init: np.ndarray


def candidate(p: EnvelopeProblem, criterion: str) -> StartCandidate:
    """Top-u eigenvectors of the criterion's source matrix by U-energy score.

    Ties in score break toward the larger source eigenvalue, then the lower
    eigenvector index, so results are reproducible across platforms.
    """
    if criterion not in CANDIDATE_ORDER:
        raise InvalidInput(f"unknown criterion {criterion!r}, expected one of {CANDIDATE_ORDER}")
    if p.u < 1:
        raise InvalidInput("starting values require u >= 1")
    if criterion in ("K_M", "K_M_unstd"):
        vals, vecs = p.m_eigvals, p.m_eigvecs
    else:
        vals, vecs = p.mu_eigvals, p.mu_eigvecs
    weight = {"K_M": p.u_std_m, "K_MU": p.u_std_mu}.get(criterion, p.u_mat)
    scores = np.einsum("ij,ij->j", vecs, weight @ vecs)
    order = np.lexsort((np.arange(p.r), -vals, -scores))
    basis = Basis(vecs[:, order[: p.u]])
    return StartCandidate(criterion, basis, l_basis(p, basis))


def select_start(p: EnvelopeProblem) -> StartCandidate:
    """The candidate with the smallest span objective.

    A candidate whose objective cannot be evaluated is dropped; the error
    propagates only when all four fail.
    """
    best = None
    failure = None
    for name in CANDIDATE_ORDER:
        try:
            cand = candidate(p, name)
        except SingularProjection as exc:
            failure = exc
            log.warning("start candidate %s failed: %s", name, exc)
            continue
        if best is None or cand.score < best.score:
            best = cand
    if best is None:
        raise failure
    return best


def pivot_rows(g_start) -> PivotResult:
    """Anchor rows of a starting basis by Gaussian elimination with partial pivoting.

    Columns are processed in order; each step picks the remaining row whose
    current-column entry has the largest absolute value (ties to the lowest
    row index) and eliminates that column from the other remaining rows.
    """
    g = basis_entries(g_start)
    r, u = g.shape
    if u < 1:
        raise InvalidInput("pivoting requires at least one column")
    work = g.copy()
    remaining = np.ones(r, dtype=bool)
    pivots = []
    for j in range(u):
        col = np.where(remaining, np.abs(work[:, j]), -1.0)
        pick = int(np.argmax(col))
        if col[pick] <= 0.0:
            raise PivotFailure(f"no usable pivot in column {j}")
        pivots.append(pick)
        remaining[pick] = False
        mult = work[remaining, j] / work[pick, j]
        work[remaining, j:] -= np.outer(mult, work[pick, j:])
    rest = np.flatnonzero(remaining)
    perm = np.concatenate([np.asarray(pivots, dtype=int), rest])
    anchored = g[pivots, :]
    cond = float(np.linalg.cond(anchored, 2))
    if not np.isfinite(cond) or cond > _PIVOT_COND_LIMIT:
        raise PivotFailure(f"anchored block condition number {cond:.3e} exceeds limit")
    a_init = np.linalg.solve(anchored.T, g[rest, :].T).T
    return PivotResult(perm=perm, anchored_block=anchored, a_init=a_init)
