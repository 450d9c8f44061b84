"""Simulation scenarios with known ground truth, and benchmark tables.

Seven canonical scenarios cover the regimes that separate the four starting
values: near-equal noise eigenvalues with strong signal, well-separated
noise scales, geometric eigenvalue ladders needing standardization, reduced
heteroscedasticity, and large/small immaterial variation at growing
dimension. Each replication draws truth and data from a seeded generator,
fits from every starting criterion, and records angles to the true
subspace, objective values, coefficient errors, and optimization time.
"""

import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import EnvfitError, InvalidInput
from .linalg import Basis, SpdMatrix, SymmetricMatrix, orthonormalize, subspace_angle_deg
from .objective import EnvelopeProblem, _sym
from .regression import RegressionData, response_moments
from .solver import SolverOptions, fit_envelope
from .start import CANDIDATE_ORDER, candidate

log = logging.getLogger(__name__)

SCENARIO_IDS = ("I", "II", "III", "IV", "V", "VI", "VII")

TABLE_COLUMNS = (
    "label",
    "angle_start",
    "angle_final",
    "l_start",
    "l_final",
    "beta_err_start",
    "beta_err_final",
    "time_seconds",
)


@dataclass(frozen=True)
class DiagUniform:
    """Diagonal block with independent uniform(low, high) diagonal entries."""

    low: float
    high: float


@dataclass(frozen=True)
class IdentityScaled:
    """scale times the identity."""

    scale: float


@dataclass(frozen=True)
class PowerSequence:
    """Diagonal block base**start, base**(start+1), ... along the diagonal.

    The starting exponent is resolved at generation time: 1 for the envelope
    block, u+1 for the complement block.
    """

    base: float


@dataclass(frozen=True)
class FactorProduct:
    """Full SPD block F F' where F has independent normal(0, sd^2) entries."""

    sd: float


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete recipe for one simulation scenario.

    eta_high scales the coordinate matrix: entries are uniform(0, eta_high).
    Scenario II uses 1 so the signal competes with the complement noise,
    which is the regime its reported results exhibit; all other scenarios
    use 10.
    """

    id: str
    r: int
    p: int
    n: int
    u: int
    omega_rule: object
    omega0_rule: object
    gamma_rule: str  # "random" or "identity"
    x_variance_scale: float
    seed: int = 0
    eta_high: float = 10.0


def make_scenario(scenario_id: str, seed: int = 0, u: int | None = None, r: int | None = None) -> ScenarioSpec:
    """Canonical ScenarioSpec for one of the ids I..VII.

    Scenarios I-IV are fully pinned; V and VI take the envelope dimension u
    as a parameter and VII takes both u and the response dimension r.
    """
    sid = str(scenario_id).strip().upper()
    if sid not in SCENARIO_IDS:
        raise InvalidInput(f"unknown scenario {scenario_id!r}, expected one of {SCENARIO_IDS}")
    if sid in ("I", "II", "III", "IV"):
        if u is not None or r is not None:
            raise InvalidInput(f"scenario {sid} has fixed dimensions; u/r overrides not allowed")
        if sid == "I":
            return ScenarioSpec("I", 100, 100, 500, 20, DiagUniform(49, 51), DiagUniform(49, 51), "random", 400.0, seed)
        if sid == "II":
            return ScenarioSpec(
                "II", 100, 100, 500, 5, IdentityScaled(1.0), IdentityScaled(100.0), "random", 25.0, seed, eta_high=1.0
            )
        if sid == "III":
            return ScenarioSpec("III", 30, 30, 200, 5, PowerSequence(1.5), PowerSequence(1.5), "identity", 100.0, seed)
        return ScenarioSpec("IV", 30, 30, 200, 5, PowerSequence(1.05), PowerSequence(1.05), "random", 100.0, seed)
    if u is None:
        raise InvalidInput(f"scenario {sid} needs an explicit u")
    if sid == "V":
        if r is not None:
            raise InvalidInput("scenario V has r fixed at 100")
        return ScenarioSpec("V", 100, 100, 250, u, FactorProduct(1.0), FactorProduct(5.0), "random", 400.0, seed)
    if sid == "VI":
        if r is not None:
            raise InvalidInput("scenario VI has r fixed at 100")
        return ScenarioSpec("VI", 100, 100, 250, u, FactorProduct(5.0), FactorProduct(1.0), "random", 400.0, seed)
    if r is None:
        raise InvalidInput("scenario VII needs an explicit r")
    return ScenarioSpec("VII", r, 100, 500, u, IdentityScaled(1.0), IdentityScaled(25.0), "random", 400.0, seed)


@dataclass(frozen=True)
class TruthParams:
    """Population quantities a replicate is generated from."""

    gamma: np.ndarray
    gamma0: np.ndarray
    eta: np.ndarray
    omega: np.ndarray
    omega0: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    sigma_factor: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SimReplicate:
    """One generated data set together with the truth it came from."""

    data: RegressionData
    true_gamma: Basis
    true_beta: np.ndarray
    true_sigma: SpdMatrix


def _block_factor(rule, k: int, start_exp: int, rng) -> np.ndarray:
    """k x k factor F with F F' equal to the block the rule describes."""
    if isinstance(rule, DiagUniform):
        return np.diag(np.sqrt(rng.uniform(rule.low, rule.high, size=k)))
    if isinstance(rule, IdentityScaled):
        return np.sqrt(rule.scale) * np.eye(k)
    if isinstance(rule, PowerSequence):
        exps = np.arange(start_exp, start_exp + k, dtype=float)
        return np.diag(np.power(rule.base, exps / 2.0))
    if isinstance(rule, FactorProduct):
        return rule.sd * rng.standard_normal((k, k))
    raise InvalidInput(f"unknown covariance rule {rule!r}")


def draw_truth(spec: ScenarioSpec, rng) -> TruthParams:
    """Draw the population parameters of a scenario.

    Order is fixed so a seed pins everything: basis, envelope covariance
    factor, complement covariance factor, then coordinates.
    """
    r, u, p = spec.r, spec.u, spec.p
    if spec.gamma_rule == "identity":
        full = np.eye(r)
    elif spec.gamma_rule == "random":
        full = orthonormalize(rng.uniform(0.0, 1.0, size=(r, r))).entries
    else:
        raise InvalidInput(f"unknown gamma rule {spec.gamma_rule!r}")
    gamma, gamma0 = full[:, :u], full[:, u:]
    f_omega = _block_factor(spec.omega_rule, u, 1, rng)
    f_omega0 = _block_factor(spec.omega0_rule, r - u, u + 1, rng)
    eta = rng.uniform(0.0, spec.eta_high, size=(u, p))
    beta = gamma @ eta
    omega = f_omega @ f_omega.T
    omega0 = f_omega0 @ f_omega0.T
    sigma = _sym(gamma @ omega @ gamma.T + gamma0 @ omega0 @ gamma0.T)
    sigma_factor = np.hstack([gamma @ f_omega, gamma0 @ f_omega0])
    return TruthParams(gamma, gamma0, eta, omega, omega0, beta, sigma, sigma_factor)


def draw_data(spec: ScenarioSpec, truth: TruthParams, rng) -> RegressionData:
    """Draw X ~ N(0, scale I_p) and Y = X beta' + E with E ~ N(0, Sigma)."""
    x = np.sqrt(spec.x_variance_scale) * rng.standard_normal((spec.n, spec.p))
    noise = rng.standard_normal((spec.n, spec.r)) @ truth.sigma_factor.T
    y = x @ truth.beta.T + noise
    return RegressionData(x, y)


def gen_scenario(spec: ScenarioSpec, truth: TruthParams | None = None) -> SimReplicate:
    """Generate one replicate; pass truth to hold the population fixed."""
    rng = np.random.default_rng(spec.seed)
    if truth is None:
        truth = draw_truth(spec, rng)
    data = draw_data(spec, truth, rng)
    return SimReplicate(
        data=data,
        true_gamma=Basis(truth.gamma),
        true_beta=truth.beta,
        true_sigma=SpdMatrix(SymmetricMatrix(truth.sigma)),
    )


@dataclass(frozen=True)
class SummaryRow:
    """Replication averages for one starting-value configuration.

    beta errors are spectral norms; the Frobenius versions are kept on the
    row (beta_err_fro_*) but are not table columns. failures counts
    replicates that raised and were excluded from the averages.
    """

    label: str
    angle_start: float
    angle_final: float
    l_start: float
    l_final: float
    beta_err_start: float
    beta_err_final: float
    time_seconds: float
    beta_err_fro_start: float = 0.0
    beta_err_fro_final: float = 0.0
    failures: int = 0


def _replicate_stats(spec: ScenarioSpec, rep_index: int, opts: SolverOptions | None):
    rep = gen_scenario(replace(spec, seed=spec.seed + rep_index))
    mom = response_moments(rep.data)
    problem = EnvelopeProblem(mom.s_y_given_x, _sym(mom.b @ mom.s_x @ mom.b.T), spec.u)
    true_g = rep.true_gamma
    out = {}
    for crit in CANDIDATE_ORDER:
        t0 = time.perf_counter()
        cand = candidate(problem, crit)
        fit = fit_envelope(problem, opts, start=cand)
        elapsed = time.perf_counter() - t0
        beta_start = cand.basis.entries @ (cand.basis.entries.T @ mom.b)
        beta_final = fit.gamma_hat.entries @ (fit.gamma_hat.entries.T @ mom.b)
        d_start = beta_start - rep.true_beta
        d_final = beta_final - rep.true_beta
        out[crit] = np.array(
            [
                subspace_angle_deg(cand.basis, true_g),
                subspace_angle_deg(fit.gamma_hat, true_g),
                cand.score,
                fit.objective,
                np.linalg.norm(d_start, 2),
                np.linalg.norm(d_final, 2),
                elapsed,
                np.linalg.norm(d_start, "fro"),
                np.linalg.norm(d_final, "fro"),
            ]
        )
    return out


def run_replications(
    spec: ScenarioSpec,
    reps: int = 50,
    opts: SolverOptions | None = None,
    threads: int = 1,
):
    """Average fit quality over seeded replications, one row per criterion.

    Replicate i uses seed spec.seed + i. A replicate that raises is logged,
    counted in every row's failures field, and excluded from the averages;
    the run only fails when no replicate succeeds.
    """
    if reps < 1:
        raise InvalidInput("reps must be >= 1")

    def worker(i: int):
        try:
            return _replicate_stats(spec, i, opts)
        except EnvfitError as exc:
            log.warning("replicate %d failed and is excluded: %s", i, exc)
            return None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(worker, range(reps)))
    else:
        results = [worker(i) for i in range(reps)]
    good = [res for res in results if res is not None]
    failures = reps - len(good)
    if not good:
        raise InvalidInput(f"all {reps} replicates failed")
    rows = []
    for crit in CANDIDATE_ORDER:
        stats = np.mean([res[crit] for res in good], axis=0)
        rows.append(
            SummaryRow(
                label=crit,
                angle_start=float(stats[0]),
                angle_final=float(stats[1]),
                l_start=float(stats[2]),
                l_final=float(stats[3]),
                beta_err_start=float(stats[4]),
                beta_err_final=float(stats[5]),
                time_seconds=float(stats[6]),
                beta_err_fro_start=float(stats[7]),
                beta_err_fro_final=float(stats[8]),
                failures=failures,
            )
        )
    return rows


def emit_table(rows, format: str = "csv") -> str:
    """Render summary rows as CSV (full precision) or markdown (2 decimals)."""
    if format not in ("csv", "markdown"):
        raise InvalidInput(f"format must be 'csv' or 'markdown', got {format!r}")
    if format == "csv":
        buf = io.StringIO()
        buf.write(",".join(TABLE_COLUMNS) + "\n")
        for row in rows:
            values = [row.label] + [repr(getattr(row, col)) for col in TABLE_COLUMNS[1:]]
            buf.write(",".join(values) + "\n")
        return buf.getvalue()
    header = "| " + " | ".join(TABLE_COLUMNS) + " |"
    sep = "|" + "|".join(["---"] * len(TABLE_COLUMNS)) + "|"
    lines = [header, sep]
    for row in rows:
        cells = [row.label] + [f"{getattr(row, col):.2f}" for col in TABLE_COLUMNS[1:]]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
