"""Row-wise coordinate descent for the envelope objective.

The solver works in the unconstrained chart A of the subspace: each sweep
cycles the rows of A in ascending order, minimizing the closed-form
conditional row objective with a damped Newton inner loop. A direct mode
minimizes over all of A jointly with a quasi-Newton method instead. The
final basis is the orthonormalized chart, mapped back through the anchoring
permutation.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
from scipy.linalg import lapack as _lapack

from .errors import IllConditionedContext, InvalidInput, NumericalFailure
from .linalg import Basis, orthonormalize
from .objective import (
    CoordParam,
    EnvelopeProblem,
    _logdet_pd,
    _outer,
    _row_context_from_products,
    _sym,
    l_basis,
    l_row,
    l_row_grad,
    l_row_hess,
)
from .start import StartCandidate, pivot_rows, select_start

log = logging.getLogger(__name__)

_MODES = ("row_cyclic", "direct_full")
_MAX_HALVINGS = 40


@dataclass(frozen=True)
class SolverOptions:
    """Convergence controls for the descent.

    rel_tol is the relative objective decrease over a full sweep below which
    iteration stops; inner_* bound the per-row Newton loop.
    """

    max_sweeps: int = 100
    rel_tol: float = 1e-8
    inner_max_iter: int = 20
    inner_grad_tol: float = 1e-8
    mode: str = "row_cyclic"

    def __post_init__(self):
        if self.max_sweeps < 1 or self.inner_max_iter < 1:
            raise InvalidInput("iteration limits must be >= 1")
        if self.rel_tol <= 0 or self.inner_grad_tol <= 0:
            raise InvalidInput("tolerances must be positive")
        if self.mode not in _MODES:
            raise InvalidInput(f"mode must be one of {_MODES}")


@dataclass(frozen=True)
class EnvelopeFit:
    """Result of one envelope fit.

    trajectory holds the coordinate objective before iteration and after
    each sweep; start is None only for the u = 0 and u = r short circuits,
    which need no starting value.
    """

    gamma_hat: Basis
    objective: float
    start: StartCandidate | None
    sweeps: int
    converged: bool
    trajectory: np.ndarray = field(repr=False)


def newton_row_update(ctx, a0, opts: SolverOptions | None = None) -> np.ndarray:
    """Minimize the row objective from a0 with damped Newton steps.

    The Newton direction is used when the Hessian factors; otherwise the
    step falls back to the negative gradient. Step lengths halve until the
    objective decreases. The result never exceeds the objective at a0.
    """
    opts = opts or SolverOptions()
    a = np.asarray(a0, dtype=float).copy()
    if not np.isfinite(a).all():
        raise NumericalFailure("starting row is non-finite")
    f = l_row(a, ctx)
    if not np.isfinite(f):
        raise NumericalFailure("row objective non-finite at starting point")
    for _ in range(opts.inner_max_iter):
        grad = l_row_grad(a, ctx)
        if float(np.linalg.norm(grad)) < opts.inner_grad_tol:
            break
        hess = l_row_hess(a, ctx)
        # posv factors and solves in one call; info > 0 flags an indefinite
        # Hessian, where the step falls back to a unit-length gradient step
        # (the raw gradient can be arbitrarily short in flat concave regions).
        _, step, info = _lapack.dposv(hess, -grad, lower=1)
        if info != 0:
            step = -grad / float(np.linalg.norm(grad))
        t = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            trial = a + t * step
            f_trial = l_row(trial, ctx)
            if np.isfinite(f_trial) and f_trial < f:
                a, f = trial, f_trial
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
    return a


class _SweepState:
    """Running products for one descent: C, MC, VC and their Gram forms.

    Each row update is a rank-one change of C, so the products update in
    O(r u) + O(u^2); a full refresh at every sweep boundary bounds drift.
    """

    def __init__(self, m, v, a0):
        self.m = m
        self.v = v
        self.u = a0.shape[1]
        self.c = np.vstack([np.eye(self.u), a0])
        self.refresh()

    def refresh(self):
        self.pm = self.m @ self.c
        self.pv = self.v @ self.c
        self.tm = _sym(self.c.T @ self.pm)
        self.tv = _sym(self.c.T @ self.pv)
        self.tc = _sym(self.c.T @ self.c)

    def objective(self) -> float:
        return -2.0 * _logdet_pd(self.tc) + _logdet_pd(self.tm) + _logdet_pd(self.tv)

    def context(self, i):
        k = self.u + i
        return _row_context_from_products(
            i,
            self.c[k].copy(),
            self.tm,
            self.tv,
            self.tc,
            self.pm[k].copy(),
            self.pv[k].copy(),
            self.m[k, k],
            self.v[k, k],
        )

    def apply(self, i, a_new):
        k = self.u + i
        a_old = self.c[k].copy()
        d = a_new - a_old
        pm_old = self.pm[k].copy()
        pv_old = self.pv[k].copy()
        dd = _outer(d, d)
        self.tm += _outer(d, pm_old) + _outer(pm_old, d) + self.m[k, k] * dd
        self.tv += _outer(d, pv_old) + _outer(pv_old, d) + self.v[k, k] * dd
        self.tc += _outer(d, a_old) + _outer(a_old, d) + dd
        self.pm += _outer(self.m[:, k], d)
        self.pv += _outer(self.v[:, k], d)
        self.c[k] = a_new


def _descend_rows(p: EnvelopeProblem, a0: np.ndarray, opts: SolverOptions):
    """Cyclic row descent; returns (A, trajectory, sweeps, converged)."""
    state = _SweepState(p.m, p.mu_inv, a0)
    n_rows = a0.shape[0]
    f_prev = state.objective()
    trajectory = [f_prev]
    converged = False
    sweeps = 0
    for _ in range(opts.max_sweeps):
        sweeps += 1
        for i in range(n_rows):
            try:
                ctx = state.context(i)
            except IllConditionedContext:
                # Rebuild the products in case incremental drift is to blame.
                state.refresh()
                try:
                    ctx = state.context(i)
                except IllConditionedContext as exc:
                    log.warning("skipping row %d this sweep: %s", i, exc)
                    continue
            a_new = newton_row_update(ctx, state.c[state.u + i], opts)
            state.apply(i, a_new)
        state.refresh()
        f_cur = state.objective()
        trajectory.append(f_cur)
        if f_prev - f_cur < opts.rel_tol * max(1.0, abs(f_prev)):
            converged = True
            break
        f_prev = f_cur
    a_final = state.c[state.u :].copy()
    if not np.isfinite(a_final).all():
        raise NumericalFailure("descent produced non-finite coordinates")
    return a_final, np.asarray(trajectory), sweeps, converged


def _descend_direct(p: EnvelopeProblem, a0: np.ndarray, opts: SolverOptions):
    """Joint quasi-Newton minimization over vec(A) with analytic gradient."""
    shape = a0.shape
    u = shape[1]
    eye = np.eye(u)

    def fun_and_grad(x):
        a = x.reshape(shape)
        c = np.vstack([eye, a])
        tc = c.T @ c
        pm = p.m @ c
        pv = p.mu_inv @ c
        tm = _sym(c.T @ pm)
        tv = _sym(c.T @ pv)
        f = -2.0 * _logdet_pd(tc) + _logdet_pd(tm) + _logdet_pd(tv)
        grad_c = (
            -4.0 * np.linalg.solve(tc, c.T).T
            + 2.0 * np.linalg.solve(tm, pm.T).T
            + 2.0 * np.linalg.solve(tv, pv.T).T
        )
        return f, grad_c[u:].ravel()

    trajectory = [fun_and_grad(a0.ravel())[0]]

    def track(xk):
        trajectory.append(fun_and_grad(xk)[0])

    res = scipy.optimize.minimize(
        fun_and_grad,
        a0.ravel(),
        jac=True,
        method="L-BFGS-B",
        callback=track,
        options={
            "maxiter": opts.max_sweeps * max(1, shape[0]),
            "ftol": opts.rel_tol,
            "gtol": opts.inner_grad_tol,
        },
    )
    a_final = res.x.reshape(shape)
    if not np.isfinite(a_final).all():
        raise NumericalFailure("direct minimization produced non-finite coordinates")
    return a_final, np.asarray(trajectory), int(res.nit), bool(res.success)


def coordinate_descent(p: EnvelopeProblem, a0: CoordParam, opts: SolverOptions | None = None) -> CoordParam:
    """Cycle Newton row updates over the rows of A until a sweep stalls.

    p must be in the permuted frame of a0. Rows whose context cannot be
    formed are skipped for that sweep with a logged warning.
    """
    opts = opts or SolverOptions()
    if a0.r != p.r or a0.u != p.u:
        raise InvalidInput("coordinate parameter does not match problem")
    a_final, _, _, _ = _descend_rows(p, a0.a_matrix, opts)
    return CoordParam(a_final, a0.perm)


def fit_envelope(
    p: EnvelopeProblem,
    opts: SolverOptions | None = None,
    start: StartCandidate | None = None,
) -> EnvelopeFit:
    """Full pipeline: starting value, row anchoring, descent, orthonormal basis.

    Parameters
    ----------
    p : EnvelopeProblem
        The (M, U, u) problem to minimize over.
    opts : SolverOptions, optional
        Convergence controls and descent mode.
    start : StartCandidate, optional
        Descend from this candidate instead of the objective-selected one
        (used by the simulation tables to isolate each criterion).

    u = 0 returns an empty basis with objective 0; u = r returns the
    identity basis. On numerical failure mid-descent the starting basis is
    returned with converged=False.
    """
    opts = opts or SolverOptions()
    r, u = p.r, p.u
    if u == 0:
        return EnvelopeFit(Basis(np.zeros((r, 0))), 0.0, None, 0, True, np.array([0.0]))
    if u == r:
        basis = Basis(np.eye(r))
        obj = l_basis(p, basis)
        return EnvelopeFit(basis, obj, None, 0, True, np.array([obj]))
    cand = start if start is not None else select_start(p)
    piv = pivot_rows(cand.basis)
    p_perm = p.permuted(piv.perm)
    try:
        if opts.mode == "direct_full":
            a_final, trajectory, sweeps, converged = _descend_direct(p_perm, piv.a_init, opts)
        else:
            a_final, trajectory, sweeps, converged = _descend_rows(p_perm, piv.a_init, opts)
    except NumericalFailure as exc:
        log.warning("descent failed, returning the starting value: %s", exc)
        return EnvelopeFit(cand.basis, cand.score, cand, 0, False, np.array([cand.score]))
    coord = CoordParam(a_final, piv.perm)
    gamma = orthonormalize(coord.to_basis())
    objective = l_basis(p, gamma)
    if objective > cand.score:
        # Descent never worsens the start; keep the start if rounding says otherwise.
        log.debug("final objective %.3e above start %.3e, keeping start", objective, cand.score)
        return EnvelopeFit(cand.basis, cand.score, cand, sweeps, converged, trajectory)
    return EnvelopeFit(gamma, objective, cand, sweeps, converged, trajectory)
