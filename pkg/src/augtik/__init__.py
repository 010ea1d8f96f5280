"""Augmented Lagrange method with a decreasing Tikhonov weight for elliptic
optimal control with pointwise state constraints, control bounds and an L1
sparsity term.

Typical use::

    from augtik import get_problem, run
    spec = get_problem("example1")
    result = run(spec, spec.grid(1024))
"""

from .auglag import (
    OuterLog,
    OuterRecord,
    RunResult,
    SolverParams,
    feasibility_measure,
    multiplier_update,
    run,
    run_batch,
    run_named,
    stopping_residual,
)
from .diagnostics import KktReport, error_vs_exact, kkt_report, sparsity_profile
from .grid_pde import EllipticOperator, Grid, LinearSolveError, assemble, solve_adjoint, solve_state
from .kernels import BACKEND
from .problems import ProblemSpec, eval_exact, from_expressions, get_problem
from .subproblem import (
    ActiveSets,
    SubproblemResult,
    classify_sets,
    inner_solve,
    newton_solve,
    prox_gradient_globalize,
    solve_kkt_on_sets,
)

__version__ = "0.1.0"

__all__ = [
    "ActiveSets", "BACKEND", "EllipticOperator", "Grid", "KktReport", "LinearSolveError", "OuterLog",
    "OuterRecord", "ProblemSpec", "RunResult", "SolverParams", "SubproblemResult", "assemble", "classify_sets",
    "error_vs_exact", "eval_exact", "feasibility_measure", "from_expressions", "get_problem", "inner_solve",
    "kkt_report", "multiplier_update", "newton_solve", "prox_gradient_globalize", "run", "run_batch", "run_named",
    "solve_adjoint", "solve_kkt_on_sets", "solve_state", "sparsity_profile", "stopping_residual",
]
