"""Residual, error and structure metrics for computed iterates."""

from dataclasses import asdict, dataclass

import numpy as np

from .problems import eval_exact

U_TOL = 1e-8


@dataclass(frozen=True)
class KktReport:
    """Optimality-system residuals of one iterate; every field is nonnegative.

    Norms are discrete L2 norms with the grid weight, except ``lambda_range``
    and ``feasibility`` which are maxima over the nodes.
    """

    state: float
    adjoint: float
    projection: float
    lambda_range: float
    complementarity: float
    feasibility: float
    sparsity: float

    def as_dict(self):
        return asdict(self)


def _data(spec, grid):
    # accept either a problem spec or already discretized data
    return spec.discretize(grid) if hasattr(spec, "discretize") else spec


def kkt_report(iterate, spec, grid, op, alpha, u_tol=U_TOL):
    """Residuals of the regularized optimality system at ``iterate``.

    ``iterate`` needs ``u, y, p, lam`` and ``mu_out``. The projection residual
    is ``||u - P(u - (p + alpha u + beta lam))||_h``, the unit-step form of the
    projection identity of the regularized problem; it vanishes exactly at
    its minimizer.
    """
    data = _data(spec, grid)
    u, y, p, lam, mu = iterate.u, iterate.y, iterate.p, iterate.lam, iterate.mu_out
    A = op.matrix
    state = grid.norm(A @ y - u - data.f)
    adjoint = grid.norm(A @ p - (y - data.yd + mu))
    proj = u - np.clip(u - (p + alpha * u + data.beta * lam), data.ua, data.ub)
    lam_excess = float(np.maximum(np.abs(lam) - 1.0, 0.0).max(initial=0.0))
    gap = y - data.psi
    return KktReport(
        state=float(state),
        adjoint=float(adjoint),
        projection=float(grid.norm(proj)),
        lambda_range=lam_excess,
        complementarity=abs(grid.inner(mu, gap)),
        feasibility=float(np.maximum(gap, 0.0).max(initial=0.0)),
        sparsity=sparsity_profile(u, data.ua, data.ub, u_tol)[0],
    )


def error_vs_exact(iterate, spec, grid, alpha=None, exact=None):
    """Discrete L2 errors ``(err_u, err_y, err_y**2 / alpha)`` against the exact bundle.

    The last entry is None when ``alpha`` is not given. ``exact`` may hold
    precomputed nodal values ``(u, y, ...)``; otherwise they are evaluated
    from ``spec`` (which raises when the problem has no exact solution).
    """
    if exact is None:
        exact = eval_exact(spec, grid)
    eu = grid.norm(np.asarray(iterate.u) - exact[0])
    ey = grid.norm(np.asarray(iterate.y) - exact[1])
    return eu, ey, (ey**2 / alpha if alpha is not None else None)


def sparsity_profile(u, ua=-np.inf, ub=np.inf, u_tol=U_TOL):
    """Fractions of nodes with ``|u| <= u_tol``, ``u <= u_a + u_tol`` and ``u >= u_b - u_tol``.

    All nodes carry the same weight, so node fractions equal measure fractions.
    """
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("empty grid function")
    zero = float(np.mean(np.abs(u) <= u_tol))
    lower = float(np.mean(u <= np.asarray(ua) + u_tol))
    upper = float(np.mean(u >= np.asarray(ub) - u_tol))
    return zero, lower, upper
