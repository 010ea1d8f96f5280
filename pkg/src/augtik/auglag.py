"""Outer augmented-Lagrange loop with a decreasing Tikhonov weight.

Every outer iteration solves one regularized penalty subproblem, updates the
multiplier estimate and classifies the step:

* successful: ``R_k <= tau * R_plus``; shrink alpha, take the multiplier, and
  make ``R_k`` the new reference,
* intermediate: otherwise, if ``feas + compl < eps_i``; shrink alpha and take
  the multiplier, keeping the reference,
* not successful: otherwise; grow rho.
"""

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import List, Optional

import numpy as np

from .diagnostics import error_vs_exact
from .grid_pde import TOL_LIN, LinearSolveError, assemble
from .problems import eval_exact, from_expressions, get_problem
from .subproblem import SubproblemResult, inner_solve, newton_solve, prox_gradient_globalize

SUCCESSFUL = "successful"
INTERMEDIATE = "intermediate"
NOT_SUCCESSFUL = "not_successful"
STEP_CLASSES = (SUCCESSFUL, INTERMEDIATE, NOT_SUCCESSFUL)

CSV_COLUMNS = (
    "k", "n", "alpha", "rho", "R", "step_class", "inner_iters", "feas", "compl", "stop_residual", "err_u_L2",
)

BURN_IN_ITERS = 200
GLOBALIZE_ITERS = 20000


@dataclass(frozen=True)
class SolverParams:
    """Outer-loop parameters. Defaults reproduce the reference experiment settings."""

    alpha1: float = 1.0
    rho1: float = 100.0
    theta: float = 5.0
    omega: float = 0.75
    tau: float = 0.8
    eps: float = 1e-6
    eps_i: float = 5e-7
    r0_plus: float = 1e12
    max_outer: int = 200
    max_inner: int = 50
    rho_max: float = 1e10
    tol_lin: float = TOL_LIN

    def __post_init__(self):
        checks = [
            ("alpha1", self.alpha1 > 0, "α₁ must be positive"),
            ("rho1", self.rho1 > 0, "ρ₁ must be positive"),
            ("theta", self.theta > 1, "θ must exceed 1"),
            ("omega", 0 < self.omega < 1, "ω must lie in (0,1)"),
            ("tau", 0 < self.tau < 1, "τ must lie in (0,1)"),
            ("eps", self.eps > 0, "ε must be positive"),
            ("eps_i", 0 < self.eps_i < self.eps, "ε_I must lie in (0, ε)"),
            ("r0_plus", self.r0_plus > 0, "R₀⁺ must be positive"),
            ("max_outer", self.max_outer >= 1, "max_outer must be at least 1"),
            ("max_inner", self.max_inner >= 1, "max_inner must be at least 1"),
            ("rho_max", self.rho_max >= self.rho1, "rho_max must be at least ρ₁"),
            ("tol_lin", 0 < self.tol_lin < 1, "tol_lin must lie in (0,1)"),
        ]
        for key, ok, msg in checks:
            if not ok:
                raise ValueError(f"{key}: {msg}")


@dataclass
class OuterRecord:
    k: int
    n: int
    alpha: float
    rho: float
    R: float
    step_class: str
    inner_iters: int
    feas: float
    compl: float
    stop_residual: float
    err_u_L2: Optional[float] = None
    err_y_L2: Optional[float] = None
    err_y_over_alpha: Optional[float] = None
    globalized: bool = False


@dataclass
class OuterLog:
    records: List[OuterRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def append(self, rec):
        self.records.append(rec)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def counts(self):
        out = dict.fromkeys(STEP_CLASSES, 0)
        for r in self.records:
            out[r.step_class] += 1
        return out

    def accepted(self):
        return [r for r in self.records if r.step_class != NOT_SUCCESSFUL]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            row = []
            for c in CSV_COLUMNS:
                v = getattr(r, c)
                row.append("" if v is None else (repr(float(v)) if isinstance(v, float) else v))
            writer.writerow(row)
        return buf.getvalue()


@dataclass
class RunResult:
    problem: str
    resolution: tuple
    params: SolverParams
    iterate: SubproblemResult
    mu: np.ndarray
    log: OuterLog
    converged: bool
    alpha: float
    rho: float
    stop_residual: float
    err_u_L2: Optional[float]
    status: str = "converged"

    def summary(self):
        return {
            "problem": self.problem,
            "resolution": list(self.resolution),
            "params": asdict(self.params),
            "counts": self.log.counts(),
            "final": {
                "alpha": self.alpha,
                "rho": self.rho,
                "stop_residual": self.stop_residual,
                "err_u_L2": self.err_u_L2,
            },
        }

    def summary_json(self):
        return json.dumps(self.summary(), indent=2, sort_keys=False) + "\n"


def multiplier_update(mu, y, psi, rho):
    """``(mu + rho (y - psi))_+``."""
    return np.maximum(np.asarray(mu) + rho * (np.asarray(y) - psi), 0.0)


def feasibility_measure(y, mu, psi, alpha, w=1.0):
    """Return ``(R, feas, compl)``.

    ``feas`` is the largest violation of ``y <= psi``, ``compl`` the weighted
    mismatch ``|(mu, psi - y)|`` and ``R = (feas + compl) / alpha``.
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    gap = np.asarray(psi) - np.asarray(y)
    feas = float(np.maximum(-gap, 0.0).max(initial=0.0))
    compl = abs(w * float(np.dot(np.broadcast_to(mu, gap.shape), gap)))
    return (feas + compl) / alpha, feas, compl


def stopping_residual(u, y, p, mu, lam, data, w):
    """Breaking-condition value of an outer iterate.

    ``||u - P(u - (p + beta lam))||_h + max (y - psi)_+ + |(mu, y - psi)_h|``.
    """
    proj = np.clip(u - (p + data.beta * lam), data.ua, data.ub)
    r1 = math.sqrt(w * float(np.dot(u - proj, u - proj)))
    _, feas, compl = feasibility_measure(y, mu, data.psi, 1.0, w)
    return r1 + feas + compl


def _errors(exact, grid, res, alpha):
    if exact is None:
        return None, None, None
    return error_vs_exact(res, None, grid, alpha, exact=exact)


def _solve_subproblem(data, op, alpha, rho, mu, u, p, max_inner):
    """Inner solve with fallbacks.

    Tries the warm start (u, p), then a fresh adjoint, then proximal Newton
    steps, and finally the proximal-gradient warm start.

    Returns ``(result, iterations, globalized)``; ``result`` is None when a
    linear solve lost accuracy.
    """
    try:
        return _solve_subproblem_chain(data, op, alpha, rho, mu, u, p, max_inner)
    except LinearSolveError:
        return None, 0, False


def _solve_subproblem_chain(data, op, alpha, rho, mu, u, p, max_inner):
    res = inner_solve(data, op, alpha, rho, mu, u, p, max_iter=max_inner)
    iters = res.inner_iterations
    if res.converged:
        return res, iters, False
    if p is not None:
        res = inner_solve(data, op, alpha, rho, mu, u, None, max_iter=max_inner)
        iters += res.inner_iterations
        if res.converged:
            return res, iters, False
    res = newton_solve(data, op, alpha, rho, mu, u, max_inner=max_inner)
    iters += res.inner_iterations
    if res.converged:
        return res, iters, True
    g = prox_gradient_globalize(data, op, alpha, rho, mu, u, max_iters=GLOBALIZE_ITERS, tol=1e-10 * alpha)
    res = inner_solve(data, op, alpha, rho, mu, g.u, None, max_iter=max_inner)
    return res, iters + res.inner_iterations, True


def run(spec, grid=None, params=None, op=None, callback=None):
    """Run the outer loop on ``spec`` discretized on ``grid``.

    Returns a :class:`RunResult`. The reported iterate is the last accepted
    (successful or intermediate) one; ``converged`` is set when its stopping
    residual falls to ``params.eps``. The run also ends when rho would exceed
    ``params.rho_max`` (``status == "rho_max"``) or after ``params.max_outer``
    iterations. ``callback``, when given, receives
    each :class:`OuterRecord` as soon as it is logged.
    """
    params = params or SolverParams()
    grid = grid or spec.grid()
    if not spec.beta > 0:
        raise ValueError("beta must be positive for the solver")
    data = spec.discretize(grid)
    op = op or assemble(grid, tol_lin=params.tol_lin)
    w = grid.weight
    exact = eval_exact(spec, grid) if spec.exact is not None else None

    alpha, rho, r_plus = params.alpha1, params.rho1, params.r0_plus
    mu = np.zeros(grid.size)
    u = prox_gradient_globalize(data, op, alpha, rho, mu, np.zeros(grid.size), max_iters=BURN_IN_ITERS, tol=0.0).u
    p = None
    log = OuterLog()
    n = 0
    best = None
    converged = False
    status = "max_outer"
    for k in range(1, params.max_outer + 1):
        res, iters, globalized = _solve_subproblem(data, op, alpha, rho, mu, u, p, params.max_inner)
        if res is None:
            # lost linear-solve accuracy: nothing to measure, treat as a failed step
            log.append(OuterRecord(k, n, alpha, rho, math.nan, NOT_SUCCESSFUL, iters, math.nan, math.nan, math.nan,
                                   globalized=globalized))
            step = NOT_SUCCESSFUL
        else:
            mu_bar = multiplier_update(mu, res.y, data.psi, rho)
            R, feas, compl = feasibility_measure(res.y, mu_bar, data.psi, alpha, w)
            stop = stopping_residual(res.u, res.y, res.p, mu_bar, res.lam, data, w)
            eu, ey, eya = _errors(exact, grid, res, alpha)
            if not res.converged:
                step = NOT_SUCCESSFUL
            elif R <= params.tau * r_plus:
                step = SUCCESSFUL
                n += 1
            elif feas + compl < params.eps_i:
                step = INTERMEDIATE
            else:
                step = NOT_SUCCESSFUL
            log.append(OuterRecord(k, n, alpha, rho, R, step, iters, feas, compl, stop, eu, ey, eya, globalized))
            if res.converged:
                u, p = res.u, res.p
        if callback is not None:
            callback(log.records[-1])

        if step == NOT_SUCCESSFUL:
            rho *= params.theta
            if rho > params.rho_max:
                status = "rho_max"
                break
            continue
        best = (res, mu_bar, alpha, rho, stop, eu)
        if step == SUCCESSFUL:
            r_plus = R
        if stop <= params.eps:
            converged = True
            status = "converged"
            break
        alpha *= params.omega
        mu = mu_bar

    if best is None:
        if res is None:
            raise RuntimeError("no subproblem was solved accurately; the run has no iterate to report")
        best = (res, mu_bar, alpha, rho, stop, eu)
    res, mu_bar, a_fin, r_fin, stop, eu = best
    return RunResult(
        problem=spec.name,
        resolution=tuple(grid.cells),
        params=params,
        iterate=res,
        mu=mu_bar,
        log=log,
        converged=converged,
        alpha=a_fin,
        rho=r_fin,
        stop_residual=stop,
        err_u_L2=eu,
        status=status,
    )


def run_named(name, cells=None, params=None, beta=None, expressions=None):
    """Build a problem by name (or from expressions) and run it; picklable entry point."""
    if expressions is not None:
        spec = from_expressions(**expressions)
    else:
        spec = get_problem(name, beta=beta)
    return run(spec, spec.grid(cells), params)


def run_batch(jobs, max_workers=None):
    """Run independent ``run_named`` keyword dicts concurrently, preserving order."""
    jobs = list(jobs)
    if max_workers == 1 or len(jobs) <= 1:
        return [run_named(**job) for job in jobs]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(run_named, **job) for job in jobs]
        return [f.result() for f in futures]


def record_fields():
    return [f.name for f in fields(OuterRecord)]
