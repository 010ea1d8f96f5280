"""Benchmark problem instances.

Each problem is posed as::

    minimize  1/2 ||y - y_d||^2 + beta ||u||_1
    s.t.      -Laplace y = u + f  in Omega,  y = 0 on the boundary,
              y <= psi,  u_a <= u <= u_b.

Data fields hold floats or vectorized callables of the coordinates.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numpy as np

from .grid_pde import Grid

Data = Union[float, Callable]


class NoExactSolution(ValueError):
    """Raised when exact values are requested from a problem without them."""


@dataclass(frozen=True)
class ExactSolution:
    u: Callable
    y: Callable
    p: Callable
    mu: Callable


@dataclass(frozen=True)
class ProblemData:
    """A problem evaluated on a grid."""

    ua: np.ndarray
    ub: np.ndarray
    beta: float
    psi: np.ndarray
    yd: np.ndarray
    f: np.ndarray


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    lower: tuple
    upper: tuple
    ua: Data
    ub: Data
    beta: float
    psi: Data
    yd: Data
    f: Data
    exact: Optional[ExactSolution] = None
    default_cells: int = 4096
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if len(self.lower) != len(self.upper) or len(self.lower) not in (1, 2):
            raise ValueError("domain must be an interval or a rectangle")

    @property
    def dim(self):
        return len(self.lower)

    def grid(self, cells=None):
        cells = self.default_cells if cells is None else cells
        return Grid(self.lower, self.upper, (cells,) * self.dim)

    def discretize(self, grid):
        ua, ub = grid.evaluate(self.ua), grid.evaluate(self.ub)
        if np.any(ua > 0) or np.any(ub < 0):
            raise ValueError("control bounds must satisfy u_a <= 0 <= u_b")
        psi = grid.evaluate(self.psi)
        if not np.all(np.isfinite(psi)):
            raise ValueError("obstacle psi must be finite at every node")
        return ProblemData(ua, ub, float(self.beta), psi, grid.evaluate(self.yd), grid.evaluate(self.f))


def eval_exact(spec, grid):
    """Nodal values ``(u, y, p, mu)`` of the exact solution."""
    if spec.exact is None:
        raise NoExactSolution(f"problem {spec.name!r} has no exact solution")
    ex = spec.exact
    return tuple(grid.evaluate(g) for g in (ex.u, ex.y, ex.p, ex.mu))


# -- Example 1: bang-bang-off control on (-1, 1) ---------------------------


def _ex1_y(x):
    x = np.asarray(x, dtype=float)
    left = 28 + 108 * x + 144 * x**2 + 64 * x**3
    right = 28 - 108 * x + 144 * x**2 - 64 * x**3
    return np.where(x < -0.75, left, np.where(x > 0.75, right, 1.0))


def _ex1_y_xx(x):
    x = np.asarray(x, dtype=float)
    return np.where(x < -0.75, 288 + 384 * x, np.where(x > 0.75, 288 - 384 * x, 0.0))


def _ex1_p(x):
    return -2.0 * np.cos(1.5 * np.pi * np.asarray(x, dtype=float))


def _ex1_p_xx(x):
    return 4.5 * np.pi**2 * np.cos(1.5 * np.pi * np.asarray(x, dtype=float))


def _ex1_u(x):
    a = np.abs(np.asarray(x, dtype=float))
    return np.where(a < 2 / 9, 1.0, np.where((a > 4 / 9) & (a < 8 / 9), -1.0, 0.0))


def _bump(s2):
    """exp(-1/(1-s^2)) for s^2 < 1, zero elsewhere."""
    s2 = np.asarray(s2, dtype=float)
    inside = s2 < 1.0
    out = np.zeros_like(s2)
    out[inside] = np.exp(-1.0 / (1.0 - s2[inside]))
    return out


def _ex1_mu(x):
    return _bump((4.0 / 3.0 * np.asarray(x, dtype=float)) ** 2)


def example1():
    return ProblemSpec(
        name="example1",
        lower=(-1.0,),
        upper=(1.0,),
        ua=-1.0,
        ub=1.0,
        beta=1.0,
        psi=1.0,
        yd=lambda x: _ex1_p_xx(x) + _ex1_y(x) + _ex1_mu(x),
        f=lambda x: -_ex1_y_xx(x) - _ex1_u(x),
        exact=ExactSolution(u=_ex1_u, y=_ex1_y, p=_ex1_p, mu=_ex1_mu),
        default_cells=4096,
    )


# -- Example 2 recipe on the square [-2, 2]^2 ------------------------------
# ybar and the radial cutoff of pbar are C^2 and vanish with their first two
# derivatives at r = 2, so both are continued by zero outside the disk.


def _ex2_yr(r):
    q = 32 - 120 * r + 180 * r**2 - 130 * r**3 + 45 * r**4 - 6 * r**5
    return np.where(r < 1, 1.0, np.where(r < 2, q, 0.0))


def _ex2_lap_y(r):
    dq = -120 + 360 * r - 390 * r**2 + 180 * r**3 - 30 * r**4
    d2q = 360 - 780 * r + 540 * r**2 - 120 * r**3
    with np.errstate(divide="ignore", invalid="ignore"):
        lap = d2q + dq / r
    return np.where((r >= 1) & (r < 2), lap, 0.0)


def _ex2_g(r):
    return np.where(r < 2, 1 - 1.25 * r**3 + 15 / 16 * r**4 - 3 / 16 * r**5, 0.0)


def _ex2_g_over_r(r):
    # g'(r) / r
    return np.where(r < 2, -3.75 * r + 3.75 * r**2 - 15 / 16 * r**3, 0.0)


def _ex2_g_rr(r):
    return np.where(r < 2, -7.5 * r + 11.25 * r**2 - 3.75 * r**3, 0.0)


def _radius(x, y):
    return np.hypot(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def _ex2_p(x, y):
    return np.sin(x) * np.sin(y) * _ex2_g(_radius(x, y))


def _ex2_lap_p(x, y):
    r = _radius(x, y)
    s = np.sin(x) * np.sin(y)
    gr = _ex2_g_over_r(r)
    cross = gr * (x * np.cos(x) * np.sin(y) + y * np.sin(x) * np.cos(y))
    return -2.0 * s * _ex2_g(r) + 2.0 * cross + s * (_ex2_g_rr(r) + gr)


def _ex2_u(x, y):
    return -np.sign(_ex2_p(x, y))


def _ex2_y(x, y):
    return _ex2_yr(_radius(x, y))


def _ex2_mu(x, y):
    return _bump(_radius(x, y) ** 2)


def _ex2_f(x, y):
    return -_ex2_lap_y(_radius(x, y)) - _ex2_u(x, y)


def _ex2_yd(x, y):
    return _ex2_lap_p(x, y) + _ex2_y(x, y) + _ex2_mu(x, y)


def example2_rect(beta=0.1):
    """Two-dimensional bang-bang-off construction on the square [-2, 2]^2.

    The exact bundle is attached only for ``beta == 0``; the solver itself
    requires ``beta > 0``.
    """
    exact = ExactSolution(u=_ex2_u, y=_ex2_y, p=_ex2_p, mu=_ex2_mu) if beta == 0 else None
    return ProblemSpec(
        name="example2_rect",
        lower=(-2.0, -2.0),
        upper=(2.0, 2.0),
        ua=-1.0,
        ub=1.0,
        beta=float(beta),
        psi=1.0,
        yd=_ex2_yd,
        f=_ex2_f,
        exact=exact,
        default_cells=128,
        params={"beta": float(beta)},
    )


# -- Example 3 -------------------------------------------------------------


def example3():
    return ProblemSpec(
        name="example3",
        lower=(0.0, 0.0),
        upper=(1.0, 1.0),
        ua=-1.0,
        ub=1.0,
        beta=1e-3,
        psi=0.01,
        yd=lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y) / (2 * np.pi),
        f=0.0,
        default_cells=128,
    )


# -- sanity problem with an inactive state constraint ----------------------


def _sanity_target(x):
    return 0.2 * np.sin(np.pi * x)


def unconstrained_tikhonov(yd=_sanity_target, f=0.0, beta=1e-2, cells=64):
    """Problem on (0, 1) whose obstacle psi = 1e6 never binds."""
    return ProblemSpec(
        name="tikhonov_sanity",
        lower=(0.0,),
        upper=(1.0,),
        ua=-1.0,
        ub=1.0,
        beta=float(beta),
        psi=1e6,
        yd=yd,
        f=f,
        default_cells=cells,
    )


def from_expressions(domain, ua=-1.0, ub=1.0, beta=1.0, psi=1.0, yd=0.0, f=0.0, name="custom", cells=None):
    """Build a problem from expression strings in ``x`` (and ``y`` in 2D).

    ``domain`` is ``[a, b]`` or ``[x0, x1, y0, y1]``.
    """
    import sympy

    domain = [float(v) for v in domain]
    if len(domain) == 2:
        lower, upper, names = (domain[0],), (domain[1],), "x"
    elif len(domain) == 4:
        lower, upper, names = (domain[0], domain[2]), (domain[1], domain[3]), "x y"
    else:
        raise ValueError("domain must list 2 (interval) or 4 (rectangle) numbers")
    symbols = sympy.symbols(names)
    symbols = symbols if isinstance(symbols, tuple) else (symbols,)

    def convert(value, key):
        if isinstance(value, (int, float)):
            return float(value)
        try:
            expr = sympy.sympify(str(value), locals={s.name: s for s in symbols})
        except (sympy.SympifyError, SyntaxError, TypeError) as exc:
            raise ValueError(f"cannot parse expression for {key}: {value!r}") from exc
        unknown = expr.free_symbols - set(symbols)
        if unknown:
            raise ValueError(f"expression for {key} uses unknown symbols {sorted(map(str, unknown))}")
        if not expr.free_symbols:
            return float(expr)
        return sympy.lambdify(symbols, expr, modules="numpy")

    return ProblemSpec(
        name=name,
        lower=lower,
        upper=upper,
        ua=convert(ua, "u_a"),
        ub=convert(ub, "u_b"),
        beta=float(beta),
        psi=convert(psi, "psi"),
        yd=convert(yd, "y_d"),
        f=convert(f, "f"),
        default_cells=cells or (4096 if len(lower) == 1 else 128),
    )


PROBLEMS = {
    "example1": example1,
    "example2_rect": example2_rect,
    "example3": example3,
    "tikhonov_sanity": unconstrained_tikhonov,
}


def get_problem(name, beta=None):
    """Look up a named problem; ``beta`` overrides the sparsity weight."""
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    if name == "example2_rect":
        return factory(0.1 if beta is None else beta)
    spec = factory()
    if beta is not None:
        spec = replace(spec, beta=float(beta))
    return spec
