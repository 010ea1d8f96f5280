"""Uniform grids and the finite-difference Dirichlet Laplacian.

Grid functions are plain 1D float arrays over the interior nodes. In 2D the
nodes are stored in C order of an ``(nx, ny)`` array, ``x`` varying slowest.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels

TOL_LIN = 1e-12


class LinearSolveError(RuntimeError):
    """A linear solve did not reach the requested tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on an interval or a rectangle.

    Parameters
    ----------
    lower, upper : tuple of float
        Domain corners, one entry per axis.
    cells : tuple of int
        Number of cells per axis; the interior node count is ``cells - 1``.
    """

    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        cells = tuple(int(v) for v in np.atleast_1d(self.cells))
        if not (len(lower) == len(upper) == len(cells)) or len(cells) not in (1, 2):
            raise ValueError("grid must be 1D or 2D with matching corner/cell tuples")
        if any(c < 4 for c in cells):
            raise ValueError("need at least 3 interior nodes per axis (cells >= 4)")
        if any(b <= a for a, b in zip(lower, upper)):
            raise ValueError("upper corner must exceed lower corner on every axis")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "cells", cells)

    @classmethod
    def interval(cls, a, b, cells):
        return cls((a,), (b,), (cells,))

    @classmethod
    def rectangle(cls, x0, x1, y0, y1, cells):
        if np.ndim(cells) == 0:
            cells = (cells, cells)
        return cls((x0, y0), (x1, y1), tuple(cells))

    @property
    def dim(self):
        return len(self.cells)

    @property
    def shape(self):
        """Interior nodes per axis."""
        return tuple(c - 1 for c in self.cells)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def spacing(self):
        return tuple((b - a) / c for a, b, c in zip(self.lower, self.upper, self.cells))

    @property
    def measure(self):
        return float(np.prod([b - a for a, b in zip(self.lower, self.upper)]))

    @property
    def weight(self):
        """Quadrature weight shared by every interior node.

        Chosen as measure / node count so the weights sum to the domain
        measure; it equals h (or h^2) up to a factor cells/(cells-1) per axis.
        """
        return self.measure / self.size

    @cached_property
    def axes(self):
        return tuple(
            a + h * np.arange(1, c) for a, h, c in zip(self.lower, self.spacing, self.cells)
        )

    @cached_property
    def coords(self):
        """Tuple of flattened coordinate arrays, one per axis."""
        if self.dim == 1:
            return (self.axes[0],)
        X, Y = np.meshgrid(*self.axes, indexing="ij")
        return (X.ravel(), Y.ravel())

    def evaluate(self, func):
        """Evaluate a scalar or callable on the interior nodes."""
        if callable(func):
            return np.asarray(np.broadcast_to(func(*self.coords), (self.size,)), dtype=float).copy()
        return np.full(self.size, float(func))

    def inner(self, a, b):
        return self.weight * float(np.dot(a, b))

    def norm(self, a):
        return np.sqrt(self.weight * float(np.dot(a, a)))


def _laplacian_1d(n, h):
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def laplacian(shape, spacing):
    """Finite-difference ``-Laplace`` with Dirichlet elimination as a sparse matrix."""
    if len(shape) == 1:
        return _laplacian_1d(shape[0], spacing[0])
    nx, ny = shape
    Tx = _laplacian_1d(nx, spacing[0])
    Ty = _laplacian_1d(ny, spacing[1])
    return (sp.kron(Tx, sp.identity(ny)) + sp.kron(sp.identity(nx), Ty)).tocsc()


class EllipticOperator:
    """Five-point (2D) or three-point (1D) Dirichlet Laplacian with cached factors.

    The 1D operator is factored once as LDL^T; the 2D operator with SuperLU.
    """

    def __init__(self, grid, tol_lin=TOL_LIN, method="direct"):
        if method not in ("direct", "cg"):
            raise ValueError("method must be 'direct' or 'cg'")
        self.grid = grid
        self.tol_lin = tol_lin
        self.method = method
        hs = grid.spacing
        self.matrix = laplacian(grid.shape, hs)
        if grid.dim == 1:
            (n,) = grid.shape
            (h,) = hs
            self.diag = 2.0 / h**2
            self.off = -1.0 / h**2
            self._factor = kernels.ptfactor(np.full(n, self.diag), np.full(n - 1, self.off))
        else:
            self._factor = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A") if method == "direct" else None
        self.norm_inf = float(abs(self.matrix).sum(axis=1).max())

    @property
    def lambda_min(self):
        """Smallest eigenvalue, in closed form for the uniform stencil."""
        return sum(
            4.0 / h**2 * np.sin(np.pi * h / (2.0 * (b - a))) ** 2
            for a, b, h in zip(self.grid.lower, self.grid.upper, self.grid.spacing)
        )

    def __matmul__(self, x):
        return self.matrix @ x

    def solve(self, rhs):
        """Solve ``A x = rhs``, checking the normwise backward error against tol_lin."""
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.grid.size,):
            raise ValueError(f"right-hand side has shape {rhs.shape}, expected ({self.grid.size},)")
        if self.grid.dim == 1:
            x = kernels.ptsolve(*self._factor, rhs)
        elif self.method == "direct":
            x = self._factor.solve(rhs)
        else:
            x, info = spla.cg(self.matrix, rhs, rtol=self.tol_lin, atol=0.0, maxiter=20 * self.grid.size)
            if info != 0:
                res = np.linalg.norm(rhs - self.matrix @ x) / max(np.linalg.norm(rhs), 1e-300)
                raise LinearSolveError("conjugate gradient did not converge", res)
            return x
        self.check(x, rhs)
        return x

    def check(self, x, rhs):
        scale = self.norm_inf * np.abs(x).max(initial=0.0) + np.abs(rhs).max(initial=0.0)
        if scale == 0.0:
            return
        err = np.abs(rhs - self.matrix @ x).max()
        if err <= np.finfo(float).tiny:
            return  # subnormal data: the solution may underflow, nothing is resolvable below this level
        res = err / scale
        if not res <= self.tol_lin:
            raise LinearSolveError("elliptic solve inaccurate", res)


def assemble(grid, tol_lin=TOL_LIN, method="direct"):
    return EllipticOperator(grid, tol_lin=tol_lin, method=method)


def solve_state(op, u, f):
    """State equation ``A y = u + f``."""
    return op.solve(np.asarray(u, dtype=float) + np.asarray(f, dtype=float))


def solve_adjoint(op, rhs):
    """Adjoint equation ``A^* p = rhs``; the discrete Laplacian is symmetric."""
    return op.solve(rhs)
