"""Dense symmetric linear-algebra primitives.

Everything downstream (objectives, starting values, the coordinate-descent
solver, the regression layer) consumes these kernels: eigendecomposition with
a fixed sign convention, SPD square roots, orthonormalization, and the
largest principal angle between subspaces.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidInput,
    NotPositiveDefinite,
    RankDeficient,
)

# Semi-orthogonality tolerance for Basis (max abs entry of G'G - I).
ORTHONORMAL_TOL = 1e-10

# Relative asymmetry tolerated before SymmetricMatrix rejects its input.
_SYMMETRY_TOL = 1e-8


def _as_float_matrix(a, name="matrix"):
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise InvalidInput(f"{name} must be 2-dimensional, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise InvalidInput(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SymmetricMatrix:
    """Dense real symmetric matrix; storage is exactly symmetric."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_float_matrix(self.entries, "symmetric matrix")
        if arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise InvalidInput(f"expected square matrix with dim >= 1, got shape {arr.shape}")
        scale = max(1.0, float(np.abs(arr).max()))
        if float(np.abs(arr - arr.T).max()) > _SYMMETRY_TOL * scale:
            raise InvalidInput("matrix is not symmetric")
        # (A + A') / 2 is exactly symmetric in IEEE arithmetic.
        object.__setattr__(self, "entries", 0.5 * (arr + arr.T))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SpdMatrix:
    """Symmetric positive-definite matrix, validated by Cholesky success."""

    base: SymmetricMatrix

    def __post_init__(self):
        base = self.base
        if not isinstance(base, SymmetricMatrix):
            base = SymmetricMatrix(base)
            object.__setattr__(self, "base", base)
        try:
            np.linalg.cholesky(base.entries)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("matrix is not positive definite") from exc

    @property
    def entries(self) -> np.ndarray:
        return self.base.entries

    @property
    def dim(self) -> int:
        return self.base.dim


@dataclass(frozen=True)
class Basis:
    """Column-semi-orthogonal r x u matrix (G'G = I within ORTHONORMAL_TOL)."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_float_matrix(self.entries, "basis")
        r, u = arr.shape
        if u > r:
            raise InvalidInput(f"basis has more columns than rows: {arr.shape}")
        if u > 0:
            dev = float(np.abs(arr.T @ arr - np.eye(u)).max())
            if dev > ORTHONORMAL_TOL:
                raise InvalidInput(f"columns are not orthonormal (max deviation {dev:.3e})")
        object.__setattr__(self, "entries", arr)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues in descending order with orthonormal eigenvectors."""

    values: np.ndarray
    vectors: Basis

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or np.any(np.diff(vals) > 0):
            raise InvalidInput("eigenvalues must be a descending 1-d array")
        object.__setattr__(self, "values", vals)


def sym_entries(a) -> np.ndarray:
    """Extract an exactly-symmetric ndarray from array-like / wrapper input."""
    if isinstance(a, SpdMatrix):
        return a.entries
    if isinstance(a, SymmetricMatrix):
        return a.entries
    return SymmetricMatrix(a).entries


def basis_entries(b) -> np.ndarray:
    """Extract a validated semi-orthogonal ndarray from a Basis or array."""
    if isinstance(b, Basis):
        return b.entries
    return Basis(np.asarray(b, dtype=float)).entries


def fix_eigvec_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive.

    Ties in magnitude resolve to the lowest row index (argmax picks the first
    occurrence), which keeps downstream selections reproducible.
    """
    v = vectors.copy()
    if v.size == 0:
        return v
    lead = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[lead, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def eigen_sym(s) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, descending, sign-fixed."""
    a = sym_entries(s)
    vals, vecs = np.linalg.eigh(a)
    vals = vals[::-1].copy()
    vecs = fix_eigvec_signs(vecs[:, ::-1])
    return EigenDecomposition(vals, Basis(vecs))


def spd_roots(s):
    """Symmetric square root and inverse square root of an SPD matrix.

    Returns the pair (S^{1/2}, S^{-1/2}) as SpdMatrix values. Both are built
    from the same eigendecomposition so they commute with S to rounding.
    """
    spd = s if isinstance(s, SpdMatrix) else SpdMatrix(s)
    dec = eigen_sym(spd.base)
    vals = dec.values
    if vals[-1] <= 0:
        raise NotPositiveDefinite("matrix has a non-positive eigenvalue")
    v = dec.vectors.entries
    root = (v * np.sqrt(vals)) @ v.T
    inv_root = (v / np.sqrt(vals)) @ v.T
    return SpdMatrix(SymmetricMatrix(root)), SpdMatrix(SymmetricMatrix(inv_root))


# Above this cosine the arccos route loses the angle to rounding, so the
# equivalent sine route is used instead.
_SMALL_ANGLE_COS = np.cos(0.01)


def subspace_angle_deg(a, b) -> float:
    """Largest principal angle between two subspaces, in degrees.

    The value is arccos of the smallest singular value of A'B (singular value
    clamped into [0, 1]). For nearly identical subspaces that formula bottoms
    out near sqrt(eps), so the angle is then recomputed through the sine
    route arcsin(sigma_max((I - AA')B)), which is exact to rounding for small
    angles and agrees with the arccos route where both are accurate.
    """
    ga = basis_entries(a)
    gb = basis_entries(b)
    if ga.shape != gb.shape:
        raise DimensionMismatch(f"basis shapes differ: {ga.shape} vs {gb.shape}")
    if ga.shape[1] == 0:
        raise InvalidInput("subspace angle is undefined for 0-dimensional subspaces")
    prod = ga.T @ gb
    smin = float(np.clip(np.linalg.svd(prod, compute_uv=False).min(), 0.0, 1.0))
    if smin > _SMALL_ANGLE_COS:
        resid = gb - ga @ prod
        sine = float(np.clip(np.linalg.svd(resid, compute_uv=False).max(), 0.0, 1.0))
        return float(np.degrees(np.arcsin(sine)))
    return float(np.degrees(np.arccos(smin)))


def orthonormalize(m) -> Basis:
    """Orthonormal basis for the column span of m via thin QR.

    Deterministic given m: the triangular factor's diagonal is made positive.
    Raises RankDeficient when the columns of m are (numerically) dependent.
    """
    arr = _as_float_matrix(m, "input")
    r, k = arr.shape
    if k > r:
        raise InvalidInput(f"cannot orthonormalize {r}x{k} matrix with k > r")
    if k == 0:
        return Basis(np.zeros((r, 0)))
    q, rr = np.linalg.qr(arr)
    diag = np.diag(rr)
    tol = max(r, k) * np.finfo(float).eps * max(float(np.abs(diag).max()), 1e-300)
    if float(np.abs(diag).min()) <= tol:
        raise RankDeficient(f"input has numerical rank below {k}")
    signs = np.sign(diag)
    signs[signs == 0] = 1.0
    return Basis(q * signs)


def complement_basis(b) -> Basis:
    """Orthonormal basis of the orthogonal complement of span(b)."""
    g = basis_entries(b)
    r, u = g.shape
    if u == 0:
        return Basis(np.eye(r))
    if u == r:
        return Basis(np.zeros((r, 0)))
    # Full SVD of G: the trailing left singular vectors span the complement.
    full, _, _ = np.linalg.svd(g, full_matrices=True)
    return Basis(full[:, u:])
