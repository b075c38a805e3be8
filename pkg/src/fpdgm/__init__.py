"""
Primal-dual first-order toolkit for strongly convex minimization under
linear equality/inequality constraints, with closed-form dual oracles
for entropic transport and entropy-linear programming.
"""

from .core import (
    BoundParams,
    DualPoint,
    SolveReport,
    Tolerances,
    TraceRow,
    accel_coefficients,
    dual_norm_sq,
    positive_part,
    project_onto_lambda,
    solution_quality,
    write_trace_csv,
)
from .oracles import (
    ElpProblem,
    ProblemOracle,
    RotProblem,
    RoptProblem,
    ingest_marginal,
    lipschitz_constant,
    operator_norms,
)
from .solver import (
    AccelState,
    eta_step,
    iterate_states,
    iteration_bounds,
    solve,
    zeta_step,
)
from .baselines import (
    cgm_fletcher_reeves,
    line_search_1d,
    reg_dual_fgm,
    sinkhorn_balance,
)

__all__ = [
    "AccelState",
    "BoundParams",
    "DualPoint",
    "ElpProblem",
    "ProblemOracle",
    "RotProblem",
    "RoptProblem",
    "SolveReport",
    "Tolerances",
    "TraceRow",
    "accel_coefficients",
    "cgm_fletcher_reeves",
    "dual_norm_sq",
    "eta_step",
    "ingest_marginal",
    "iterate_states",
    "iteration_bounds",
    "line_search_1d",
    "lipschitz_constant",
    "operator_norms",
    "positive_part",
    "project_onto_lambda",
    "reg_dual_fgm",
    "sinkhorn_balance",
    "solution_quality",
    "solve",
    "write_trace_csv",
    "zeta_step",
]

__version__ = "0.1.0"
