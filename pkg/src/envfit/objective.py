"""Objective functions for envelope estimation.

The span objective on a semi-orthogonal basis G is

    L(G) = log|G' M G| + log|G' (M + U)^{-1} G|,

minimized over r x u semi-orthogonal G. Re-anchoring u rows of G to the
identity gives the unconstrained coordinate form on A in R^{(r-u) x u},

    L(A) = -2 log|C'C| + log|C' M C| + log|C' (M + U)^{-1} C|,  C = [I_u; A],

and holding all rows of A but one fixed reduces L(A), up to an additive
constant, to a three-term function of that single row. This module also
carries the eigenvector-subset diagnostics J and J* used to justify the
starting-value selection rules.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack as _lapack

from .errors import (
    DimensionMismatch,
    IllConditionedContext,
    InvalidInput,
    NotPositiveDefinite,
    SingularProjection,
)
from .linalg import Basis, SpdMatrix, SymmetricMatrix, basis_entries, fix_eigvec_signs

# PSD tolerance for U relative to its spectral norm.
_PSD_TOL = 1e-8


def _logdet_pd(a: np.ndarray, err=SingularProjection) -> float:
    """log-determinant of a PD matrix via Cholesky; raises err on failure."""
    if a.shape[0] == 0:
        return 0.0
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise err("matrix is numerically singular or indefinite") from exc
    return 2.0 * float(np.log(np.diag(chol)).sum())


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _outer(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # Broadcasting form of the outer product; hot-loop replacement for np.outer.
    return x[:, None] * y[None, :]


class EnvelopeProblem:
    """The pair (M, U) with a target dimension u and shared precomputations.

    M must be symmetric positive definite; U symmetric positive semi-definite.
    Construction computes, once, everything every candidate evaluation will
    reuse: (M+U)^{-1}, M^{-1/2}, (M+U)^{-1/2}, and the standardized forms
    M^{-1/2} U M^{-1/2} and (M+U)^{-1/2} U (M+U)^{-1/2}, plus the two
    eigendecompositions backing starting-value selection. Instances are
    immutable and safe to share across threads.
    """

    def __init__(self, m_hat, u_hat, u: int):
        spd = m_hat if isinstance(m_hat, SpdMatrix) else SpdMatrix(m_hat)
        usym = u_hat if isinstance(u_hat, SymmetricMatrix) else SymmetricMatrix(u_hat)
        if spd.dim != usym.dim:
            raise DimensionMismatch(f"M is {spd.dim}x{spd.dim} but U is {usym.dim}x{usym.dim}")
        if not 0 <= u <= spd.dim:
            raise InvalidInput(f"target dimension u={u} outside 0..{spd.dim}")
        self.m_hat = spd
        self.u_hat = usym
        self.u = int(u)
        self.m = spd.entries
        self.u_mat = usym.entries

        u_eigs = np.linalg.eigvalsh(self.u_mat)
        scale = max(float(np.abs(u_eigs).max()), 1.0)
        if u_eigs[0] < -_PSD_TOL * scale:
            raise NotPositiveDefinite(f"U has eigenvalue {u_eigs[0]:.3e}, not PSD")

        self.w = _sym(self.m + self.u_mat)

        m_vals, m_vecs = np.linalg.eigh(self.m)
        self.m_eigvals = m_vals[::-1].copy()
        self.m_eigvecs = fix_eigvec_signs(m_vecs[:, ::-1])
        w_vals, w_vecs = np.linalg.eigh(self.w)
        self.mu_eigvals = w_vals[::-1].copy()
        self.mu_eigvecs = fix_eigvec_signs(w_vecs[:, ::-1])
        if self.m_eigvals[-1] <= 0 or self.mu_eigvals[-1] <= 0:
            raise NotPositiveDefinite("M or M+U has a non-positive eigenvalue")

        self.mu_inv = _sym((self.mu_eigvecs / self.mu_eigvals) @ self.mu_eigvecs.T)
        self.m_inv_sqrt = _sym((self.m_eigvecs / np.sqrt(self.m_eigvals)) @ self.m_eigvecs.T)
        self.mu_inv_sqrt = _sym((self.mu_eigvecs / np.sqrt(self.mu_eigvals)) @ self.mu_eigvecs.T)
        self.u_std_m = _sym(self.m_inv_sqrt @ self.u_mat @ self.m_inv_sqrt)
        self.u_std_mu = _sym(self.mu_inv_sqrt @ self.u_mat @ self.mu_inv_sqrt)

    @property
    def r(self) -> int:
        return self.m.shape[0]

    def permuted(self, perm) -> "EnvelopeProblem":
        """The same problem with coordinates reordered by perm.

        All cached matrices transform congruently under a permutation, so the
        copy reuses them instead of refactorizing. Eigenvector sign
        conventions are not re-applied; permuted problems exist to drive the
        coordinate-descent solver, not starting-value selection.
        """
        perm = _check_perm(perm, self.r)
        ix = np.ix_(perm, perm)
        clone = object.__new__(EnvelopeProblem)
        clone.u = self.u
        clone.m = self.m[ix]
        clone.u_mat = self.u_mat[ix]
        clone.w = self.w[ix]
        clone.m_hat = SpdMatrix(SymmetricMatrix(clone.m))
        clone.u_hat = SymmetricMatrix(clone.u_mat)
        clone.m_eigvals = self.m_eigvals
        clone.m_eigvecs = self.m_eigvecs[perm, :]
        clone.mu_eigvals = self.mu_eigvals
        clone.mu_eigvecs = self.mu_eigvecs[perm, :]
        clone.mu_inv = self.mu_inv[ix]
        clone.m_inv_sqrt = self.m_inv_sqrt[ix]
        clone.mu_inv_sqrt = self.mu_inv_sqrt[ix]
        clone.u_std_m = self.u_std_m[ix]
        clone.u_std_mu = self.u_std_mu[ix]
        return clone


def _check_perm(perm, r: int) -> np.ndarray:
    p = np.asarray(perm, dtype=int)
    if p.shape != (r,) or not np.array_equal(np.sort(p), np.arange(r)):
        raise InvalidInput(f"perm must be a permutation of 0..{r - 1}")
    return p


@dataclass(frozen=True)
class CoordParam:
    """Unconstrained (r-u) x u coordinate matrix A with its row permutation.

    perm maps positions in the permuted frame back to original coordinates:
    position k of the implied basis C = [I_u; A] corresponds to original
    coordinate perm[k]. Objective evaluations take place in the permuted
    frame, i.e. against a problem whose rows were reordered by perm.
    """

    a_matrix: np.ndarray
    perm: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_matrix, dtype=float)
        if a.ndim != 2:
            raise InvalidInput("A must be 2-dimensional")
        if a.size and not np.isfinite(a).all():
            raise InvalidInput("A contains non-finite entries")
        r = a.shape[0] + a.shape[1]
        p = _check_perm(self.perm, r)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "perm", p)

    @property
    def u(self) -> int:
        return self.a_matrix.shape[1]

    @property
    def r(self) -> int:
        return self.a_matrix.shape[0] + self.a_matrix.shape[1]

    def stacked(self) -> np.ndarray:
        """C = [I_u; A] in the permuted frame."""
        return np.vstack([np.eye(self.u), self.a_matrix])

    def to_basis(self) -> np.ndarray:
        """Un-orthonormalized basis in original coordinates (rows scattered by perm)."""
        c = self.stacked()
        out = np.empty_like(c)
        out[self.perm, :] = c
        return out


@dataclass(frozen=True)
class RowContext:
    """Everything needed to minimize the objective over one row of A.

    With the target coordinate moved last and the remaining block C1 fixed,
    the row objective is

        -2 log(1 + a' gram_inv a)
        + log(1 + m22 (a + offset1)' W1^{-1} (a + offset1))
        + log(1 + v22 (a + offset2)' W2^{-1} (a + offset2)),

    where W1, W2 are C1-congruences of the single-coordinate Schur
    complements of M and V = (M+U)^{-1}. Inverses are precomputed because a
    Newton inner loop evaluates the quadratic forms many times.
    """

    row_index: int
    w1: np.ndarray
    w2: np.ndarray
    offset1: np.ndarray
    offset2: np.ndarray
    m22: float
    v22: float
    gram_inv: np.ndarray
    w1_inv: np.ndarray
    w2_inv: np.ndarray


def l_basis(p: EnvelopeProblem, g) -> float:
    """Span objective log|G'MG| + log|G'(M+U)^{-1}G| at a semi-orthogonal G."""
    ge = basis_entries(g)
    if p.u < 1:
        raise InvalidInput("l_basis requires target dimension u >= 1")
    if ge.shape != (p.r, p.u):
        raise DimensionMismatch(f"basis shape {ge.shape} does not match (r, u)=({p.r}, {p.u})")
    return _logdet_pd(ge.T @ p.m @ ge) + _logdet_pd(ge.T @ p.mu_inv @ ge)


def l_coords(p: EnvelopeProblem, c: CoordParam) -> float:
    """Coordinate objective at A; equals l_basis at any basis spanning [I; A].

    p must already be in the permuted frame described by c.perm (c.perm is
    carried for reconstruction, not re-applied here).
    """
    if c.r != p.r or c.u != p.u:
        raise DimensionMismatch(
            f"coordinate shape ({c.r}, {c.u}) does not match problem ({p.r}, {p.u})"
        )
    cm = c.stacked()
    gram = cm.T @ cm
    return (
        -2.0 * _logdet_pd(gram)
        + _logdet_pd(_sym(cm.T @ p.m @ cm))
        + _logdet_pd(_sym(cm.T @ p.mu_inv @ cm))
    )


def _inv_pd(a: np.ndarray, err=IllConditionedContext) -> np.ndarray:
    """Inverse of a PD matrix through its Cholesky factor (LAPACK potrf/potri)."""
    if a.shape[0] == 0:
        return a.copy()
    chol, info = _lapack.dpotrf(a, lower=1)
    if info != 0:
        raise err("matrix block is not positive definite")
    inv_tri, info = _lapack.dpotri(chol, lower=1)
    if info != 0:
        raise err("Cholesky inverse failed")
    lower = np.tril(inv_tri)
    return lower + np.triu(lower.T, 1)


def _row_context_from_products(i, a_row, t_m, t_v, t_c, pm_row, pv_row, m22, v22):
    """Assemble a RowContext from full-basis products.

    Uses the rank-one relations between C = [C1; a'] products and C1
    products, which avoids slicing r x r matrices per row:

        C1' M11 C1 = C'MC - a w' - w a' + m22 a a',   w = (C'M[:, k]),
        C1' M12    = w - m22 a.
    """
    if m22 <= 0 or v22 <= 0:
        raise IllConditionedContext("diagonal pivot of M or V is not positive")
    h1 = pm_row - m22 * a_row
    h2 = pv_row - v22 * a_row
    aa = _outer(a_row, a_row)
    s_m = t_m - _outer(a_row, pm_row) - _outer(pm_row, a_row) + m22 * aa
    s_v = t_v - _outer(a_row, pv_row) - _outer(pv_row, a_row) + v22 * aa
    w1 = _sym(s_m - _outer(h1, h1) / m22)
    w2 = _sym(s_v - _outer(h2, h2) / v22)
    gram1 = _sym(t_c - aa)
    gram_inv = _inv_pd(gram1)
    w1_inv = _inv_pd(w1)
    w2_inv = _inv_pd(w2)
    return RowContext(
        row_index=int(i),
        w1=w1,
        w2=w2,
        offset1=h1 / m22,
        offset2=h2 / v22,
        m22=float(m22),
        v22=float(v22),
        gram_inv=gram_inv,
        w1_inv=w1_inv,
        w2_inv=w2_inv,
    )


def row_context(p: EnvelopeProblem, c: CoordParam, i: int) -> RowContext:
    """Conditional-objective context for row i of A (0-based), others fixed.

    p must be in the permuted frame of c. Row i of A occupies coordinate
    u + i of the basis C = [I_u; A]; internally that coordinate is treated
    as the trailing one of the partition.
    """
    if c.r != p.r or c.u != p.u:
        raise DimensionMismatch("coordinate parameter does not match problem")
    n_rows = c.r - c.u
    if not 0 <= i < n_rows:
        raise InvalidInput(f"row index {i} outside 0..{n_rows - 1}")
    cm = c.stacked()
    k = c.u + i
    a_row = cm[k].copy()
    pm = p.m @ cm
    pv = p.mu_inv @ cm
    return _row_context_from_products(
        i,
        a_row,
        _sym(cm.T @ pm),
        _sym(cm.T @ pv),
        _sym(cm.T @ cm),
        pm[k],
        pv[k],
        p.m[k, k],
        p.mu_inv[k, k],
    )


def _row_quads(a: np.ndarray, ctx: RowContext):
    q1 = a + ctx.offset1
    q2 = a + ctx.offset2
    g_a = ctx.gram_inv @ a
    w1_q = ctx.w1_inv @ q1
    w2_q = ctx.w2_inv @ q2
    d0 = 1.0 + float(a @ g_a)
    d1 = 1.0 + ctx.m22 * float(q1 @ w1_q)
    d2 = 1.0 + ctx.v22 * float(q2 @ w2_q)
    return g_a, w1_q, w2_q, d0, d1, d2


def l_row(a, ctx: RowContext) -> float:
    """Value of the conditional row objective (additive constants dropped)."""
    a = np.asarray(a, dtype=float)
    _, _, _, d0, d1, d2 = _row_quads(a, ctx)
    return -2.0 * np.log(d0) + np.log(d1) + np.log(d2)


def l_row_grad(a, ctx: RowContext) -> np.ndarray:
    """Analytic gradient of l_row."""
    a = np.asarray(a, dtype=float)
    g_a, w1_q, w2_q, d0, d1, d2 = _row_quads(a, ctx)
    return -4.0 * g_a / d0 + 2.0 * ctx.m22 * w1_q / d1 + 2.0 * ctx.v22 * w2_q / d2


def l_row_hess(a, ctx: RowContext) -> np.ndarray:
    """Analytic Hessian of l_row.

    Each term is log(c + quadratic), so the Hessian is a weighted matrix
    minus the outer product of the term's own gradient.
    """
    a = np.asarray(a, dtype=float)
    g_a, w1_q, w2_q, d0, d1, d2 = _row_quads(a, ctx)
    h = -4.0 * ctx.gram_inv / d0 + (8.0 / d0**2) * _outer(g_a, g_a)
    h += 2.0 * ctx.m22 * ctx.w1_inv / d1 - 4.0 * (ctx.m22 / d1) ** 2 * _outer(w1_q, w1_q)
    h += 2.0 * ctx.v22 * ctx.w2_inv / d2 - 4.0 * (ctx.v22 / d2) ** 2 * _outer(w2_q, w2_q)
    return h


def _check_index_subset(idx, r: int, u: int) -> np.ndarray:
    ix = np.asarray(idx, dtype=int)
    if ix.ndim != 1 or ix.shape[0] != u:
        raise InvalidInput(f"expected {u} eigenvector indices")
    if len(set(ix.tolist())) != u:
        raise InvalidInput("eigenvector indices must be distinct")
    if ix.size and (ix.min() < 0 or ix.max() >= r):
        raise InvalidInput(f"indices outside 0..{r - 1}")
    return ix


def j_objective(p: EnvelopeProblem, idx) -> float:
    """Subset diagnostic over eigenvectors of M.

    For G the selected eigenvectors of M and G0 the complement:
    log|G'MG| + log|G0'MG0| + log|I + G0' M^{-1/2}UM^{-1/2} G0|. Over such
    subsets this ranks identically to l_basis.
    """
    ix = _check_index_subset(idx, p.r, p.u)
    g = p.m_eigvecs[:, ix]
    rest = np.setdiff1d(np.arange(p.r), ix)
    g0 = p.m_eigvecs[:, rest]
    j1 = _logdet_pd(_sym(g.T @ p.m @ g)) + _logdet_pd(_sym(g0.T @ p.m @ g0))
    j2 = _logdet_pd(_sym(np.eye(rest.size) + g0.T @ p.u_std_m @ g0))
    return j1 + j2


def j_star_objective(p: EnvelopeProblem, idx) -> float:
    """Subset diagnostic over eigenvectors of M+U.

    For G the selected eigenvectors of M+U:
    log|G'(M+U)G| + log|G'(M+U)^{-1}G| + log|I - G' (M+U)^{-1/2}U(M+U)^{-1/2} G|.
    Over such subsets this ranks identically to l_basis.
    """
    ix = _check_index_subset(idx, p.r, p.u)
    g = p.mu_eigvecs[:, ix]
    j1 = _logdet_pd(_sym(g.T @ p.w @ g)) + _logdet_pd(_sym(g.T @ p.mu_inv @ g))
    j2 = _logdet_pd(_sym(np.eye(ix.size) - g.T @ p.u_std_mu @ g))
    return j1 + j2
