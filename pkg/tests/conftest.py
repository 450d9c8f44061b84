from dataclasses import replace

import numpy as np
import pytest
from hypothesis import settings

from envfit.objective import EnvelopeProblem, _sym
from envfit.regression import response_moments
from envfit.simlab import gen_scenario, make_scenario
from envfit.solver import fit_envelope
from envfit.start import candidate
from envfit.linalg import subspace_angle_deg

settings.register_profile("envfit", database=None, max_examples=25, deadline=None, derandomize=True)
settings.load_profile("envfit")


def _criterion_records(scenario_id, reps, fit_criteria, start_only_criteria=()):
    """Per-replicate start/final angles and coefficient errors per criterion."""
    records = []
    for i in range(reps):
        spec = make_scenario(scenario_id, seed=i)
        rep = gen_scenario(spec)
        mom = response_moments(rep.data)
        problem = EnvelopeProblem(mom.s_y_given_x, _sym(mom.b @ mom.s_x @ mom.b.T), spec.u)
        rec = {"ols_beta_err": float(np.linalg.norm(mom.b - rep.true_beta, 2))}
        for crit in fit_criteria:
            cand = candidate(problem, crit)
            fit = fit_envelope(problem, start=cand)
            beta_start = cand.basis.entries @ (cand.basis.entries.T @ mom.b)
            beta_final = fit.gamma_hat.entries @ (fit.gamma_hat.entries.T @ mom.b)
            rec[crit] = {
                "angle_start": subspace_angle_deg(cand.basis, rep.true_gamma),
                "angle_final": subspace_angle_deg(fit.gamma_hat, rep.true_gamma),
                "beta_err_start": float(np.linalg.norm(beta_start - rep.true_beta, 2)),
                "beta_err_final": float(np.linalg.norm(beta_final - rep.true_beta, 2)),
                "l_start": cand.score,
                "l_final": fit.objective,
            }
        for crit in start_only_criteria:
            cand = candidate(problem, crit)
            rec[crit] = {"angle_start": subspace_angle_deg(cand.basis, rep.true_gamma)}
        records.append(rec)
    return records


@pytest.fixture(scope="session")
def scenario2_records():
    """Scenario II, 50 replicates, descents from the M and M+U sourced starts."""
    return _criterion_records("II", 50, fit_criteria=("K_M", "K_MU"))


@pytest.fixture(scope="session")
def scenario3_records():
    """Scenario III, 50 replicates, descents from three starts plus the K_MU start."""
    return _criterion_records(
        "III", 50, fit_criteria=("K_M", "K_M_unstd", "K_MU_unstd"), start_only_criteria=("K_MU",)
    )
