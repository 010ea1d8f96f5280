"""Acceptance criteria, one test per criterion.

Each test records a ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line that is printed inline and repeated in the terminal summary.
"""

import time

import numpy as np
import pytest

from conftest import oracle_prox_gradient, small_data
from augtik import auglag, problems
from augtik.auglag import INTERMEDIATE, NOT_SUCCESSFUL, STEP_CLASSES, SUCCESSFUL, SolverParams
from augtik.diagnostics import kkt_report, sparsity_profile
from augtik.grid_pde import Grid, assemble, solve_adjoint, solve_state
from augtik.subproblem import inner_solve, prox_gradient_globalize

RUNTIME_BUDGET = 60.0
EPS = 1e-6
PROJ_TOL = 1e-8

RUNS = [("example1", c) for c in (64, 256, 1024, 4096)]
RUNS += [("tikhonov_sanity", c) for c in (64, 4096)]
RUNS += [(name, c) for name in ("example2_rect", "example3") for c in (32, 64, 128)]

# Example 3 is run with its reference settings; all other problems use the defaults
PARAMS = {"example3": SolverParams(theta=10.0, alpha1=0.1)}

_cache = {}


def solved(name, cells):
    """Run once per session; returns (result, seconds, report)."""
    if (name, cells) not in _cache:
        spec = problems.get_problem(name)
        grid = spec.grid(cells)
        start = time.perf_counter()
        res = auglag.run(spec, grid, PARAMS.get(name, SolverParams()))
        seconds = time.perf_counter() - start
        _cache[name, cells] = (res, seconds, kkt_report(res.iterate, spec, grid, assemble(grid), res.alpha))
    return _cache[name, cells]


def label(name, cells):
    return f"{name} {cells}" if problems.get_problem(name).dim == 1 else f"{name} {cells}x{cells}"


@pytest.fixture
def verdict(record_property, capsys):
    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        record_property("acceptance", line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return emit


def test_criterion_1_kkt_fixed_point(verdict):
    bad, slow = [], []
    for name, cells in RUNS:
        res, seconds, rep = solved(name, cells)
        if not (res.converged and res.stop_residual <= EPS and rep.projection <= PROJ_TOL):
            bad.append(f"{label(name, cells)} ({res.status}, stop {res.stop_residual:.1e}, proj {rep.projection:.1e})")
        if seconds > RUNTIME_BUDGET:
            slow.append(f"{label(name, cells)} {seconds:.0f} s")
    worst_stop = max(solved(*r)[0].stop_residual for r in RUNS)
    worst_proj = max(solved(*r)[2].projection for r in RUNS)
    slowest = max(RUNS, key=lambda r: solved(*r)[1])
    detail = (
        f"{len(RUNS) - len(bad)}/{len(RUNS)} runs converged with stop <= {EPS:g} and projection <= {PROJ_TOL:g} "
        f"(worst {worst_stop:.1e}, {worst_proj:.1e}); slowest {label(*slowest)} {solved(*slowest)[1]:.1f} s"
    )
    if bad:
        detail += "; failed: " + ", ".join(bad)
    if slow:
        detail += f"; over the {RUNTIME_BUDGET:.0f} s budget: " + ", ".join(slow)
    verdict(1, not bad and not slow, detail)
    assert not bad, detail
    if slow:
        pytest.xfail("runtime budget exceeded: " + ", ".join(slow))


def test_criterion_2_oracle_equivalence(verdict):
    rng = np.random.default_rng(2)
    worst, failures = 0.0, 0
    for _ in range(20):
        g, op, d = small_data(int(rng.integers(4, 11)), rng, beta=rng.choice([0.1, 1.0]))
        alpha, rho = rng.choice([1.0, 0.1]), rng.choice([10.0, 1e3])
        mu = rng.random(g.size)
        # same start as the outer loop: a short proximal-gradient burn-in
        warm = prox_gradient_globalize(d, op, alpha, rho, mu, np.zeros(g.size), max_iters=200)
        res = inner_solve(d, op, alpha, rho, mu, warm.u)
        failures += not res.converged
        worst = max(worst, g.norm(res.u - oracle_prox_gradient(g, d, alpha, rho, mu, tol=1e-12)))
    ok = failures == 0 and worst <= 1e-8
    verdict(2, ok, f"20 random instances, {20 - failures} converged, max L2 distance to oracle {worst:.1e} (tol 1e-8)")
    assert ok


def test_criterion_3_example1_convergence(verdict):
    res, _, _ = solved("example1", 4096)
    h = 2.0 / 4096
    accepted = [r.err_u_L2 for r in res.log if r.step_class != NOT_SUCCESSFUL]
    first = next(r.err_u_L2 for r in res.log if r.step_class == SUCCESSFUL)
    counts = res.log.counts()
    checks = {
        "final error": res.err_u_L2 <= max(5e-3, 10 * h),
        "10x reduction": res.err_u_L2 <= first / 10,
        "monotone within 20%": all(b <= 1.2 * a for a, b in zip(accepted, accepted[1:])),
        "iteration count": 10 <= len(res.log) <= 120,
        "all step classes": all(counts[c] > 0 for c in STEP_CLASSES),
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    verdict(
        3, ok,
        f"final err {res.err_u_L2:.2e} (bound {max(5e-3, 10 * h):.0e}), first successful {first:.2e}, "
        f"{len(res.log)} iterations {counts[SUCCESSFUL]}/{counts[INTERMEDIATE]}/{counts[NOT_SUCCESSFUL]}"
        + (f"; failed: {', '.join(failed)}" if failed else ""),
    )
    assert ok


def test_criterion_4_r_plus_decay(verdict):
    parts, ok = [], True
    for name, cells in (("example1", 4096), ("example3", 64)):
        res, _, _ = solved(name, cells)
        seq = [r.R for r in res.log if r.step_class == SUCCESSFUL]
        good = all(b <= res.params.tau * a for a, b in zip(seq, seq[1:]))
        ok &= good
        parts.append(f"{label(name, cells)} {len(seq)} successful steps {'decay' if good else 'VIOLATED'}")
    verdict(4, ok, "R+ <= tau R+_prev: " + "; ".join(parts))
    assert ok


def test_criterion_5_corollary_diagnostic(verdict):
    res, _, _ = solved("example1", 4096)
    seq = [r.err_y_over_alpha for r in res.log if r.step_class == SUCCESSFUL]
    ratio = seq[0] / seq[-1]
    verdict(5, ratio >= 10, f"(1/alpha)|y - ybar|^2 from {seq[0]:.2e} to {seq[-1]:.2e} over successful steps, factor {ratio:.1e}")
    assert ratio >= 10


def test_criterion_6_sparsity(verdict):
    res, _, _ = solved("example1", 4096)
    u = res.iterate.u
    zero = sparsity_profile(u, -1.0, 1.0)[0]
    near = float(np.mean(np.min(np.abs(u[:, None] - np.array([-1.0, 0.0, 1.0])), axis=1) <= 1e-3))
    ok = abs(zero - 1 / 3) <= 0.02 and near >= 0.98
    verdict(6, ok, f"fraction_zero {zero:.4f} (target 1/3 +- 0.02), {100 * near:.2f}% of nodes within 1e-3 of {{-1,0,1}}")
    assert ok


def test_criterion_7_feasibility(verdict):
    converged = [r for r in RUNS if solved(*r)[0].converged]
    feas = max(solved(*r)[2].feasibility for r in converged)
    compl = max(solved(*r)[2].complementarity for r in converged)
    ok = feas <= 1e-6 and compl <= 1e-6
    verdict(7, ok, f"{len(converged)} converged runs, max (y - psi)+ {feas:.1e}, max |(mu, y - psi)| {compl:.1e}")
    assert ok


def test_criterion_8_sanity(verdict, monkeypatch):
    spec = problems.get_problem("tikhonov_sanity")
    g = spec.grid(64)
    updates = []

    def spy(mu, y, psi, rho):
        out = auglag_multiplier_update(mu, y, psi, rho)
        updates.append(float(np.abs(out).max()))
        return out

    auglag_multiplier_update = auglag.multiplier_update
    monkeypatch.setattr(auglag, "multiplier_update", spy)
    res = auglag.run(spec, g)
    # y stays far below psi, so the penalty term is identically zero and rho = 0 gives the same objective
    ref = oracle_prox_gradient(g, spec.discretize(g), res.alpha, 0.0, np.zeros(g.size), tol=1e-13, max_iters=2_000_000)
    dist = g.norm(res.iterate.u - ref)
    rho_fixed = set(res.log.column("rho")) == {res.params.rho1}
    ok = res.converged and rho_fixed and max(updates) == 0.0 and dist <= 1e-6
    verdict(8, ok, f"rho constant {rho_fixed}, max |mu| {max(updates):g} over {len(updates)} updates, L2 distance to oracle {dist:.1e}")
    assert ok


def _order(errors, cells):
    return np.polyfit(np.log(1.0 / np.asarray(cells, float)), np.log(errors), 1)[0]


def test_criterion_9_pde_layer(verdict):
    orders = {}
    for solve in ("state", "adjoint"):
        errs, cells = [], [32, 64, 128, 256]
        for c in cells:
            g = Grid.interval(0.0, 1.0, c)
            (x,) = g.coords
            rhs = np.pi**2 * np.sin(np.pi * x)
            out = solve_state(assemble(g), rhs, 0.0) if solve == "state" else solve_adjoint(assemble(g), rhs)
            errs.append(np.abs(out - np.sin(np.pi * x)).max())
        orders[f"{solve} 1D"] = _order(errs, cells)
        errs, cells = [], [16, 32, 64]
        for c in cells:
            g = Grid.rectangle(0.0, 1.0, 0.0, 1.0, c)
            x, y = g.coords
            exact = np.sin(np.pi * x) * np.sin(2 * np.pi * y)
            rhs = 5 * np.pi**2 * exact
            out = solve_state(assemble(g), rhs, 0.0) if solve == "state" else solve_adjoint(assemble(g), rhs)
            errs.append(np.abs(out - exact).max())
        orders[f"{solve} 2D"] = _order(errs, cells)
    rng = np.random.default_rng(9)
    gap = 0.0
    for g in (Grid.interval(0.0, 1.0, 64), Grid.rectangle(0.0, 1.0, 0.0, 1.0, 16)):
        op = assemble(g)
        for _ in range(10):
            a, b = rng.standard_normal((2, g.size))
            lhs = g.inner(solve_state(op, a, 0.0), b)
            gap = max(gap, abs(lhs - g.inner(a, solve_adjoint(op, b))) / (g.norm(a) * g.norm(b)))
    ok = all(abs(o - 2.0) <= 0.1 for o in orders.values()) and gap <= 1e-10
    verdict(9, ok, ", ".join(f"{k} order {v:.3f}" for k, v in orders.items()) + f", self-adjointness gap {gap:.1e}")
    assert ok
