"""Envelope subspace estimation.

Estimates the smallest reducing subspace of a positive-definite matrix that
contains a target subspace, by minimizing a two-term log-determinant
objective over subspace bases. Starting values come from ranked eigenvectors
of the two natural matrices; optimization runs in an unconstrained row
coordinate chart instead of on the Grassmannian. A regression layer, a
cross-validation dimension selector, a simulation lab, and a CLI sit on top.
"""

from .errors import (
    CsvParseError,
    DimensionMismatch,
    EnvfitError,
    FoldTooSmall,
    IllConditionedContext,
    InvalidInput,
    NotPositiveDefinite,
    NumericalFailure,
    PivotFailure,
    RankDeficient,
    SingularDesign,
    SingularProjection,
)
from .linalg import (
    Basis,
    EigenDecomposition,
    SpdMatrix,
    SymmetricMatrix,
    complement_basis,
    eigen_sym,
    orthonormalize,
    spd_roots,
    subspace_angle_deg,
)
from .objective import (
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
from .start import (
    CANDIDATE_ORDER,
    PivotResult,
    StartCandidate,
    candidate,
    pivot_rows,
    select_start,
)
from .solver import (
    EnvelopeFit,
    SolverOptions,
    coordinate_descent,
    fit_envelope,
    newton_row_update,
)
from .regression import (
    CvReport,
    Moments,
    RegressionData,
    ResponseEnvelopeFit,
    cv_select_u,
    fit_response_envelope,
    generic_envelope,
    response_moments,
)
from .simlab import (
    ScenarioSpec,
    SimReplicate,
    SummaryRow,
    TruthParams,
    draw_data,
    draw_truth,
    emit_table,
    gen_scenario,
    make_scenario,
    run_replications,
)

__version__ = "0.1.0"

__all__ = [
    "Basis",
    "CANDIDATE_ORDER",
    "CoordParam",
    "CsvParseError",
    "CvReport",
    "DimensionMismatch",
    "EigenDecomposition",
    "EnvelopeFit",
    "EnvelopeProblem",
    "EnvfitError",
    "FoldTooSmall",
    "IllConditionedContext",
    "InvalidInput",
    "Moments",
    "NotPositiveDefinite",
    "NumericalFailure",
    "PivotFailure",
    "PivotResult",
    "RankDeficient",
    "RegressionData",
    "ResponseEnvelopeFit",
    "RowContext",
    "ScenarioSpec",
    "SimReplicate",
    "SingularDesign",
    "SingularProjection",
    "SolverOptions",
    "SpdMatrix",
    "StartCandidate",
    "SummaryRow",
    "SymmetricMatrix",
    "TruthParams",
    "candidate",
    "complement_basis",
    "coordinate_descent",
    "cv_select_u",
    "draw_data",
    "draw_truth",
    "eigen_sym",
    "emit_table",
    "fit_envelope",
    "fit_response_envelope",
    "gen_scenario",
    "generic_envelope",
    "j_objective",
    "j_star_objective",
    "l_basis",
    "l_coords",
    "l_row",
    "l_row_grad",
    "l_row_hess",
    "make_scenario",
    "newton_row_update",
    "orthonormalize",
    "pivot_rows",
    "response_moments",
    "row_context",
    "run_replications",
    "select_start",
    "spd_roots",
    "subspace_angle_deg",
]
