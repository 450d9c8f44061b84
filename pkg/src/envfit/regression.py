"""Response-envelope regression and cross-validated dimension selection.

For the multivariate linear model Y = alpha + beta X + eps the envelope
problem uses M = S_{Y|X} (residual covariance of the OLS fit) and
U = B S_X B' (so M + U is the marginal covariance S_Y). The envelope
estimator of beta is the projection of the OLS coefficient matrix onto the
estimated subspace. All sample covariances use divisor n so that
S_Y = S_{Y|X} + B S_X B' holds exactly.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    FoldTooSmall,
    InvalidInput,
    NotPositiveDefinite,
    SingularDesign,
)
from .linalg import Basis, SpdMatrix, SymmetricMatrix, complement_basis
from .objective import EnvelopeProblem, _sym
from .solver import EnvelopeFit, SolverOptions, fit_envelope

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressionData:
    """Raw predictor and response matrices for one regression.

    Rows are observations. Centering happens when moments are computed; the
    stored matrices are untouched. Requires n > max(p, r) so the residual
    covariance has a chance of being positive definite.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 2 or y.ndim != 2:
            raise InvalidInput("X and Y must be 2-dimensional")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {x.shape[0]} rows but Y has {y.shape[0]}")
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise InvalidInput("X or Y contains non-finite entries")
        if x.shape[0] <= max(x.shape[1], y.shape[1]):
            raise InvalidInput(
                f"need n > max(p, r): n={x.shape[0]}, p={x.shape[1]}, r={y.shape[1]}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def r(self) -> int:
        return self.y.shape[1]


class Moments(NamedTuple):
    """OLS coefficients and the sample covariances they came from."""

    b: np.ndarray
    s_x: np.ndarray
    s_y: np.ndarray
    s_y_given_x: np.ndarray


def response_moments(d: RegressionData) -> Moments:
    """OLS coefficient matrix and covariances from centered data, divisor n.

    B = S_{YX} S_X^{-1} and S_{Y|X} = S_Y - B S_X B'. Raises SingularDesign
    when S_X cannot be factored.
    """
    xc = d.x - d.x.mean(axis=0)
    yc = d.y - d.y.mean(axis=0)
    s_x = _sym(xc.T @ xc / d.n)
    s_y = _sym(yc.T @ yc / d.n)
    s_yx = yc.T @ xc / d.n
    try:
        chol = np.linalg.cholesky(s_x)
    except np.linalg.LinAlgError as exc:
        raise SingularDesign("predictor covariance is singular") from exc
    diag = np.diag(chol)
    if diag.min() <= np.sqrt(np.finfo(float).eps) * diag.max():
        raise SingularDesign("predictor covariance is numerically singular")
    half = np.linalg.solve(chol, s_yx.T)
    b = np.linalg.solve(chol.T, half).T
    s_y_given_x = _sym(s_y - b @ s_x @ b.T)
    return Moments(b=b, s_x=s_x, s_y=s_y, s_y_given_x=s_y_given_x)


@dataclass(frozen=True)
class ResponseEnvelopeFit:
    """Envelope regression estimates assembled around one subspace fit."""

    gamma_hat: Basis
    beta_hat: np.ndarray
    alpha_hat: np.ndarray
    omega_hat: np.ndarray
    omega0_hat: np.ndarray
    sigma_hat: SpdMatrix
    ols_beta: np.ndarray
    fit: EnvelopeFit = field(repr=False)


def fit_response_envelope(
    d: RegressionData, u: int, opts: SolverOptions | None = None
) -> ResponseEnvelopeFit:
    """Fit the response envelope of dimension u to raw data.

    Builds the (S_{Y|X}, B S_X B') problem, estimates the subspace, then
    projects the OLS coefficients: beta = Gamma Gamma' B. The covariance
    estimate recombines Omega = Gamma' S_{Y|X} Gamma on the envelope with
    Omega0 = Gamma0' S_Y Gamma0 off it. u = r reproduces OLS exactly; u = 0
    gives beta = 0 and Sigma = S_Y.
    """
    if not 0 <= u <= d.r:
        raise InvalidInput(f"u={u} outside 0..{d.r}")
    mom = response_moments(d)
    u_hat = _sym(mom.b @ mom.s_x @ mom.b.T)
    problem = EnvelopeProblem(mom.s_y_given_x, u_hat, u)
    fit = fit_envelope(problem, opts)
    gamma = fit.gamma_hat.entries
    gamma0 = complement_basis(fit.gamma_hat).entries
    beta_hat = gamma @ (gamma.T @ mom.b)
    alpha_hat = d.y.mean(axis=0) - beta_hat @ d.x.mean(axis=0)
    omega_hat = _sym(gamma.T @ mom.s_y_given_x @ gamma)
    omega0_hat = _sym(gamma0.T @ mom.s_y @ gamma0)
    sigma_hat = _sym(gamma @ omega_hat @ gamma.T + gamma0 @ omega0_hat @ gamma0.T)
    return ResponseEnvelopeFit(
        gamma_hat=fit.gamma_hat,
        beta_hat=beta_hat,
        alpha_hat=alpha_hat,
        omega_hat=omega_hat,
        omega0_hat=omega0_hat,
        sigma_hat=SpdMatrix(SymmetricMatrix(sigma_hat)),
        ols_beta=mom.b,
        fit=fit,
    )


def generic_envelope(m_hat, u_hat, u: int, opts: SolverOptions | None = None) -> EnvelopeFit:
    """Envelope fit for caller-supplied (M, U) matrices.

    Thin wrapper over the core solver so estimators other than response
    envelopes (predictor envelopes, weighted least squares, ...) can be
    driven with their own matrices.
    """
    return fit_envelope(EnvelopeProblem(m_hat, u_hat, u), opts)


@dataclass(frozen=True)
class CvReport:
    """Cross-validation prediction errors per candidate dimension.

    per_u lists (u, mean prediction error, standard error of the mean across
    replications); selected_u attains the minimum mean error with ties going
    to the smaller dimension.
    """

    per_u: tuple
    selected_u: int
    folds: int
    reps: int


def _fold_error(train: RegressionData, x_test, y_test, u, opts) -> float:
    env = fit_response_envelope(train, u, opts)
    pred = x_test @ env.beta_hat.T + env.alpha_hat
    resid = y_test - pred
    return float(np.mean(np.sum(resid**2, axis=1)) / train.r)


def cv_select_u(
    d: RegressionData,
    u_range,
    folds: int = 5,
    reps: int = 50,
    seed: int = 0,
    opts: SolverOptions | None = None,
    threads: int = 1,
) -> CvReport:
    """Pick the envelope dimension by k-fold cross-validated prediction error.

    Parameters
    ----------
    d : RegressionData
        Full data set; each replication re-partitions its rows.
    u_range : iterable of int
        Candidate dimensions, each in 0..r.
    folds, reps, seed
        Partition count per replication, number of replications, and the
        base seed (replication i partitions with seed + i).
    threads : int
        Replications run on up to this many worker threads; the merge is by
        replication index, so the report is identical at any thread count.

    The error for one held-out row is its squared prediction residual
    divided by r; fold errors average rows, replication errors average
    folds, and the report averages replications.
    """
    u_values = sorted(set(int(v) for v in u_range))
    if not u_values:
        raise InvalidInput("u_range is empty")
    if any(v < 0 or v > d.r for v in u_values):
        raise InvalidInput(f"u_range entries must lie in 0..{d.r}")
    if folds < 2:
        raise InvalidInput("folds must be >= 2")
    if reps < 1:
        raise InvalidInput("reps must be >= 1")

    def one_rep(rep: int) -> np.ndarray:
        rng = np.random.default_rng(seed + rep)
        order = rng.permutation(d.n)
        groups = np.array_split(order, folds)
        errors = np.zeros((folds, len(u_values)))
        for f_ix, test_rows in enumerate(groups):
            mask = np.ones(d.n, dtype=bool)
            mask[test_rows] = False
            n_train = int(mask.sum())
            if n_train <= max(d.p, d.r):
                raise FoldTooSmall(
                    f"training fold of {n_train} rows cannot support p={d.p}, r={d.r}"
                )
            train = RegressionData(d.x[mask], d.y[mask])
            x_test, y_test = d.x[test_rows], d.y[test_rows]
            for u_ix, u in enumerate(u_values):
                errors[f_ix, u_ix] = _fold_error(train, x_test, y_test, u, opts)
        return errors.mean(axis=0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rep_means = list(pool.map(one_rep, range(reps)))
    else:
        rep_means = [one_rep(i) for i in range(reps)]
    rep_means = np.vstack(rep_means)
    means = rep_means.mean(axis=0)
    if reps > 1:
        stderr = rep_means.std(axis=0, ddof=1) / np.sqrt(reps)
    else:
        stderr = np.zeros(len(u_values))
    best_ix = int(np.lexsort((u_values, means))[0])
    per_u = tuple((u_values[i], float(means[i]), float(stderr[i])) for i in range(len(u_values)))
    return CvReport(per_u=per_u, selected_u=u_values[best_ix], folds=folds, reps=reps)
