import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from augtik.grid_pde import Grid, assemble
from augtik.problems import ProblemData

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def small_data(n_cells, rng, beta=0.1, psi=None, box=(-1.0, 1.0)):
    """Random 1D instance on (0, 1) with nodal data in [-1, 1]."""
    grid = Grid.interval(0.0, 1.0, n_cells)
    n = grid.size
    if psi is None:
        psi = rng.uniform(-0.05, 0.05, n)
    data = ProblemData(
        ua=np.full(n, box[0]),
        ub=np.full(n, box[1]),
        beta=float(beta),
        psi=np.broadcast_to(np.asarray(psi, dtype=float), (n,)).copy(),
        yd=rng.uniform(-1.0, 1.0, n),
        f=rng.uniform(-1.0, 1.0, n),
    )
    return grid, assemble(grid), data


def oracle_prox_gradient(grid, data, alpha, rho, mu, tol=1e-12, max_iters=200_000):
    """Dense proximal-gradient minimizer of the penalized subproblem.

    Written independently of the package solvers: dense inverse, constant
    step 1/L with L from the exact spectrum.
    """
    A = assemble(grid).matrix.toarray()
    S = np.linalg.inv(A)
    w = grid.weight
    lip = alpha + (1.0 + rho) * np.linalg.eigvalsh(S).max() ** 2
    s = 1.0 / lip
    mu = np.asarray(mu, dtype=float)

    def grad(u):
        y = S @ (u + data.f)
        return S @ (y - data.yd + np.maximum(mu + rho * (y - data.psi), 0.0)) + alpha * u

    def prox(v):
        return np.clip(np.sign(v) * np.maximum(np.abs(v) - s * data.beta, 0.0), data.ua, data.ub)

    u = np.zeros(grid.size)
    for _ in range(max_iters):
        new = prox(u - s * grad(u))
        res = np.sqrt(w) * np.linalg.norm(new - u)
        u = new
        if res <= tol:
            break
    else:
        raise AssertionError(f"oracle did not reach residual {tol}")
    return u


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance verdict lines, one per criterion, after the run."""
    lines = []
    for reports in terminalreporter.stats.values():
        for rep in reports:
            for key, value in getattr(rep, "user_properties", ()):
                if key == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(set(lines), key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
