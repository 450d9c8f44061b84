import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from envfit.errors import DimensionMismatch, InvalidInput, NotPositiveDefinite
from envfit.linalg import orthonormalize
from envfit.objective import (
    CoordParam,
    EnvelopeProblem,
    RowContext,
    j_objective,
    j_star_objective,
    l_basis,
    l_coords,
    l_row,
    l_row_grad,
    l_row_hess,
    row_context,
)

LOG_1_5625 = float(np.log(1.5625))


def random_problem(rng, r, u, rank=None, noise_shift=None):
    a = rng.standard_normal((r, r))
    m = a @ a.T + (noise_shift if noise_shift is not None else r) * np.eye(r)
    w = rng.standard_normal((r, rank if rank is not None else r))
    return EnvelopeProblem(m, w @ w.T, u)


def identity_coord(a_matrix):
    r = a_matrix.shape[0] + a_matrix.shape[1]
    return CoordParam(a_matrix, np.arange(r))


class TestEnvelopeProblem:
    def test_cached_identities(self):
        rng = np.random.default_rng(2)
        p = random_problem(rng, 7, 3)
        w = p.m + p.u_mat
        assert np.abs(p.mu_inv @ w - np.eye(7)).max() <= 1e-8
        assert np.abs(p.m_inv_sqrt @ p.m @ p.m_inv_sqrt - np.eye(7)).max() <= 1e-8
        assert np.abs(p.mu_inv_sqrt @ w @ p.mu_inv_sqrt - np.eye(7)).max() <= 1e-8
        assert np.abs(p.u_std_m - p.m_inv_sqrt @ p.u_mat @ p.m_inv_sqrt).max() <= 1e-10
        assert np.abs(p.u_std_mu - p.mu_inv_sqrt @ p.u_mat @ p.mu_inv_sqrt).max() <= 1e-10

    def test_rejects_indefinite_u(self):
        with pytest.raises(NotPositiveDefinite):
            EnvelopeProblem(np.eye(3), np.diag([1.0, 0.0, -0.5]), 1)

    def test_accepts_rank_one_u(self):
        phi = np.array([[1.0], [2.0], [0.0]])
        p = EnvelopeProblem(np.eye(3), phi @ phi.T, 1)
        assert p.u == 1

    def test_dimension_checks(self):
        with pytest.raises(DimensionMismatch):
            EnvelopeProblem(np.eye(3), np.zeros((2, 2)), 1)
        with pytest.raises(InvalidInput):
            EnvelopeProblem(np.eye(3), np.zeros((3, 3)), 4)

    def test_permuted_matches_manual(self):
        rng = np.random.default_rng(4)
        p = random_problem(rng, 6, 2)
        perm = np.array([3, 0, 5, 1, 4, 2])
        pp = p.permuted(perm)
        assert np.array_equal(pp.m, p.m[np.ix_(perm, perm)])
        assert np.abs(pp.mu_inv - np.linalg.inv(pp.m + pp.u_mat)).max() <= 1e-8


class TestLBasis:
    def test_eigenvector_attains_zero(self):
        p = EnvelopeProblem(np.diag([1.0, 4.0]), np.zeros((2, 2)), 1)
        assert l_basis(p, np.array([[0.0], [1.0]])) == pytest.approx(0.0, abs=1e-12)

    def test_non_eigenvector_value(self):
        p = EnvelopeProblem(np.diag([1.0, 4.0]), np.zeros((2, 2)), 1)
        g = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
        val = l_basis(p, g)
        assert val == pytest.approx(LOG_1_5625, abs=1e-12)
        assert val > 0  # strictly above the reducing-subspace floor

    def test_full_space(self):
        rng = np.random.default_rng(6)
        p = random_problem(rng, 5, 5)
        expected = np.linalg.slogdet(p.m)[1] - np.linalg.slogdet(p.m + p.u_mat)[1]
        assert l_basis(p, np.eye(5)) == pytest.approx(expected, abs=1e-9)

    @given(st.integers(0, 10_000))
    def test_rotation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        p = random_problem(rng, 6, 3)
        g = orthonormalize(rng.standard_normal((6, 3))).entries
        o = orthonormalize(rng.standard_normal((3, 3))).entries
        assert abs(l_basis(p, g @ o) - l_basis(p, g)) <= 1e-10

    @given(st.integers(0, 10_000))
    def test_reducing_subspace_floor(self, seed):
        # log|G'MG| + log|G0'MG0| >= log|M|, equality on eigenvector spans
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((6, 6))
        m = a @ a.T + 0.5 * np.eye(6)
        logdet_m = np.linalg.slogdet(m)[1]
        full = orthonormalize(rng.standard_normal((6, 6))).entries
        g, g0 = full[:, :2], full[:, 2:]
        lhs = np.linalg.slogdet(g.T @ m @ g)[1] + np.linalg.slogdet(g0.T @ m @ g0)[1]
        assert lhs >= logdet_m - 1e-9
        vecs = np.linalg.eigh(m)[1]
        ge, ge0 = vecs[:, [1, 4]], vecs[:, [0, 2, 3, 5]]
        lhs_eq = np.linalg.slogdet(ge.T @ m @ ge)[1] + np.linalg.slogdet(ge0.T @ m @ ge0)[1]
        assert abs(lhs_eq - logdet_m) <= 1e-8


class TestLCoords:
    def test_zero_a_is_first_axis(self):
        p = EnvelopeProblem(np.diag([2.0, 5.0]), np.eye(2), 1)
        c = identity_coord(np.zeros((1, 1)))
        assert l_coords(p, c) == pytest.approx(l_basis(p, np.array([[1.0], [0.0]])), abs=1e-12)

    def test_matches_normalized_column(self):
        rng = np.random.default_rng(8)
        p = random_problem(rng, 3, 1)
        a = rng.standard_normal((2, 1))
        c = identity_coord(a)
        col = np.vstack([[1.0], a])
        g = col / np.linalg.norm(col)
        assert abs(l_coords(p, c) - l_basis(p, g)) <= 1e-10

    @given(st.integers(0, 10_000))
    def test_matches_orthonormalized_stack(self, seed):
        rng = np.random.default_rng(seed)
        r = int(rng.integers(3, 9))
        u = int(rng.integers(1, r))
        p = random_problem(rng, r, u)
        a = rng.standard_normal((r - u, u))
        c = identity_coord(a)
        g = orthonormalize(c.stacked())
        assert abs(l_coords(p, c) - l_basis(p, g)) <= 1e-9

    def test_span_only_dependence(self):
        rng = np.random.default_rng(9)
        p = random_problem(rng, 5, 2)
        g = orthonormalize(rng.standard_normal((5, 2))).entries
        o = orthonormalize(rng.standard_normal((2, 2))).entries
        assert abs(l_basis(p, g) - l_basis(p, g @ o)) <= 1e-10


class TestRowContext:
    def test_scalar_schur_smallest_case(self):
        rng = np.random.default_rng(10)
        p = random_problem(rng, 2, 1)
        ctx = row_context(p, identity_coord(np.zeros((1, 1))), 0)
        m = p.m
        assert ctx.w1[0, 0] == pytest.approx(m[0, 0] - m[0, 1] * m[1, 0] / m[1, 1], rel=1e-12)
        assert ctx.m22 == pytest.approx(m[1, 1])
        assert ctx.offset1[0] == pytest.approx(m[0, 1] / m[1, 1], rel=1e-12)
        assert ctx.gram_inv[0, 0] == pytest.approx(1.0)

    def test_block_diagonal_zero_offset(self):
        m = np.diag([1.0, 2.0, 3.0])
        p = EnvelopeProblem(m, np.zeros((3, 3)), 1)
        ctx = row_context(p, identity_coord(np.zeros((2, 1))), 0)
        assert np.abs(ctx.offset1).max() <= 1e-14

    def test_difference_oracle(self):
        # value differences of the row objective equal coordinate-objective
        # differences; additive constants cancel
        rng = np.random.default_rng(12)
        p = random_problem(rng, 5, 2)
        a = rng.standard_normal((3, 2))
        for i in range(3):
            ctx = row_context(p, identity_coord(a), i)
            for _ in range(34):
                r1, r2 = rng.standard_normal(2), rng.standard_normal(2)
                m1, m2 = a.copy(), a.copy()
                m1[i], m2[i] = r1, r2
                d_row = l_row(r1, ctx) - l_row(r2, ctx)
                d_coord = l_coords(p, identity_coord(m1)) - l_coords(p, identity_coord(m2))
                assert abs(d_row - d_coord) <= 1e-9

    def test_row_index_bounds(self):
        rng = np.random.default_rng(13)
        p = random_problem(rng, 4, 2)
        with pytest.raises(InvalidInput):
            row_context(p, identity_coord(np.zeros((2, 2))), 2)


def manual_context(rng, u=2):
    """RowContext with coincident offsets, for closed-form value checks."""
    w = rng.standard_normal((u, u))
    w1 = w @ w.T + u * np.eye(u)
    w2 = 2.0 * w1
    off = rng.standard_normal(u)
    gram = np.eye(u)
    return RowContext(
        row_index=0,
        w1=w1,
        w2=w2,
        offset1=off,
        offset2=off,
        m22=1.5,
        v22=0.5,
        gram_inv=gram,
        w1_inv=np.linalg.inv(w1),
        w2_inv=np.linalg.inv(w2),
    )


class TestLRow:
    def test_coincident_offsets_kill_quadratic_terms(self):
        rng = np.random.default_rng(14)
        ctx = manual_context(rng)
        a = -ctx.offset1
        expected = -2.0 * np.log(1.0 + a @ ctx.gram_inv @ a)
        assert l_row(a, ctx) == pytest.approx(expected, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            p = random_problem(rng, 6, 2)
            a = rng.standard_normal((4, 2))
            ctx = row_context(p, identity_coord(a), int(rng.integers(0, 4)))
            a0 = rng.standard_normal(2)
            grad = l_row_grad(a0, ctx)
            h = 1e-6
            fd = np.array(
                [
                    (l_row(a0 + h * e, ctx) - l_row(a0 - h * e, ctx)) / (2 * h)
                    for e in np.eye(2)
                ]
            )
            assert np.linalg.norm(grad - fd) <= 1e-5 * max(1.0, np.linalg.norm(grad))

    def test_hessian_matches_finite_differences(self):
        rng = np.random.default_rng(16)
        for _ in range(10):
            p = random_problem(rng, 5, 2)
            a = rng.standard_normal((3, 2))
            ctx = row_context(p, identity_coord(a), int(rng.integers(0, 3)))
            a0 = rng.standard_normal(2)
            hess = l_row_hess(a0, ctx)
            h = 2e-4
            fd = np.zeros((2, 2))
            for i, ei in enumerate(np.eye(2)):
                for j, ej in enumerate(np.eye(2)):
                    fd[i, j] = (
                        l_row(a0 + h * ei + h * ej, ctx)
                        - l_row(a0 + h * ei - h * ej, ctx)
                        - l_row(a0 - h * ei + h * ej, ctx)
                        + l_row(a0 - h * ei - h * ej, ctx)
                    ) / (4 * h * h)
            assert np.linalg.norm(hess - fd) <= 1e-4 * max(1.0, np.linalg.norm(hess))


class TestSubsetDiagnostics:
    def test_zero_u_constant_over_subsets(self):
        rng = np.random.default_rng(17)
        p = EnvelopeProblem(random_problem(rng, 6, 2).m, np.zeros((6, 6)), 2)
        values = [j_objective(p, idx) for idx in itertools.combinations(range(6), 2)]
        assert max(values) - min(values) <= 1e-9

    def test_duplicate_indices_rejected(self):
        rng = np.random.default_rng(18)
        p = random_problem(rng, 5, 2)
        with pytest.raises(InvalidInput):
            j_objective(p, [1, 1])
        with pytest.raises(InvalidInput):
            j_star_objective(p, [0, 0])

    def test_argmin_agreement_m_subsets(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            p = random_problem(rng, 6, 2, rank=2)
            subsets = list(itertools.combinations(range(6), 2))
            l_vals = [l_basis(p, p.m_eigvecs[:, list(s)]) for s in subsets]
            j_vals = [j_objective(p, list(s)) for s in subsets]
            assert int(np.argmin(l_vals)) == int(np.argmin(j_vals))
            # the gap between the two objectives is constant over subsets
            diffs = np.array(l_vals) - np.array(j_vals)
            assert diffs.max() - diffs.min() <= 1e-9
            assert diffs[0] == pytest.approx(-np.linalg.slogdet(p.m + p.u_mat)[1], abs=1e-8)

    def test_argmin_agreement_mu_subsets(self):
        rng = np.random.default_rng(20)
        for _ in range(10):
            p = random_problem(rng, 6, 2, rank=2)
            subsets = list(itertools.combinations(range(6), 2))
            l_vals = [l_basis(p, p.mu_eigvecs[:, list(s)]) for s in subsets]
            j_vals = [j_star_objective(p, list(s)) for s in subsets]
            assert int(np.argmin(l_vals)) == int(np.argmin(j_vals))
