"""Augmented-Lagrange subproblem for fixed Tikhonov weight, penalty and shift.

For ``alpha, rho > 0`` and a shift ``mu >= 0`` this module minimizes::

    1/2 ||y - y_d||^2 + beta ||u||_1 + alpha/2 ||u||^2
        + 1/(2 rho) * sum w ((mu + rho (y - psi))_+^2 - mu^2)

over ``u_a <= u <= u_b`` with ``A y = u + f``, using a primal-dual active-set
iteration. A proximal-gradient loop supplies warm starts when the active-set
iteration does not settle.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels

try:  # CHOLMOD through cvxopt speeds up the 2D systems; SuperLU is the fallback
    import cvxopt
    from cvxopt import cholmod
except ImportError:  # pragma: no cover
    cvxopt = None
from .grid_pde import LinearSolveError, solve_adjoint, solve_state
from .kernels import A_0, A_A, A_B, I_MINUS, I_PLUS

MAX_INNER = 50
MAX_REFINE = 8
NEWTON_STEPS = 10
# from a Newton point the active-set method either settles at once or cycles
POLISH_ITERS = 3
MAX_IPM_STALL = 3
# merit below which a non-improving interior-point iterate counts as stalled
STALL_LEVEL = 1e-8


def penalty_value(y, rho, mu, psi, w):
    """Shifted penalty ``1/(2 rho) sum w ((mu + rho (y - psi))_+^2 - mu^2)``."""
    t = np.maximum(mu + rho * (np.asarray(y) - psi), 0.0)
    return w / (2.0 * rho) * float(np.sum(t * t - np.asarray(mu) ** 2 * np.ones_like(t)))


def objective(u, y, data, w, alpha, rho, mu):
    """Discrete value of the subproblem objective."""
    u = np.asarray(u, dtype=float)
    r = np.asarray(y) - data.yd
    val = 0.5 * w * float(np.dot(r, r))
    val += data.beta * w * float(np.abs(u).sum())
    val += 0.5 * alpha * w * float(np.dot(u, u))
    return val + penalty_value(y, rho, mu, data.psi, w)


@dataclass(frozen=True, eq=False)
class ActiveSets:
    """Control partition (one label per node) plus the penalty-active mask.

    ``labels`` takes the values of ``A_A, A_B, A_0, I_MINUS, I_PLUS``;
    ``ymask`` marks nodes with ``mu + rho (y - psi) > 0``.
    """

    labels: np.ndarray
    ymask: np.ndarray

    @property
    def A_a(self):
        return self.labels == A_A

    @property
    def A_b(self):
        return self.labels == A_B

    @property
    def A_0(self):
        return self.labels == A_0

    @property
    def I_minus(self):
        return self.labels == I_MINUS

    @property
    def I_plus(self):
        return self.labels == I_PLUS

    @property
    def Y_minus(self):
        # named as in the literature; this is the penalty-active set
        return self.ymask

    @property
    def Y_plus(self):
        return ~self.ymask

    def __eq__(self, other):
        if not isinstance(other, ActiveSets):
            return NotImplemented
        return np.array_equal(self.labels, other.labels) and np.array_equal(self.ymask, other.ymask)

    def key(self):
        return hash((self.labels.tobytes(), self.ymask.tobytes()))

    def counts(self):
        return {
            "A_a": int(self.A_a.sum()),
            "A_b": int(self.A_b.sum()),
            "A_0": int(self.A_0.sum()),
            "I_minus": int(self.I_minus.sum()),
            "I_plus": int(self.I_plus.sum()),
            "Y": int(self.ymask.sum()),
        }


@dataclass
class SubproblemResult:
    u: np.ndarray
    y: np.ndarray
    p: np.ndarray
    xi: np.ndarray
    mu_out: np.ndarray
    lam: np.ndarray
    inner_iterations: int
    converged: bool
    sets: ActiveSets
    # False when the minimizer came from stalled Newton steps rather than repeated sets
    exact: bool = True


class ProxResult(NamedTuple):
    u: np.ndarray
    iterations: int
    residual: float
    history: np.ndarray


def _check_params(alpha, rho, beta):
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not rho > 0:
        raise ValueError("rho must be positive")
    if not beta > 0:
        raise ValueError("beta must be positive")


def classify_sets(p, y, mu, alpha, rho, data):
    _check_params(alpha, rho, data.beta)
    labels, ymask = kernels.classify(p, y, mu, data.psi, data.ua, data.ub, alpha, rho, data.beta)
    return ActiveSets(labels, ymask)


def _reduced_rhs(sets, data, alpha, rho, mu):
    """Coefficients of the (y, p) system left after eliminating u and mu_out."""
    is_I = (sets.labels == I_MINUS) | (sets.labels == I_PLUS)
    ufix = np.where(sets.A_a, data.ua, np.where(sets.A_b, data.ub, 0.0))
    xi_I = np.where(sets.I_minus, -data.beta, np.where(sets.I_plus, data.beta, 0.0))
    c = is_I / alpha
    d = 1.0 + rho * sets.ymask
    r_state = data.f + ufix - xi_I / alpha
    r_adj = data.yd - sets.ymask * (mu - rho * data.psi)
    return is_I, ufix, xi_I, c, d, r_state, r_adj


def _kkt_residual(A, c, d, y, p, r_state, r_adj):
    return r_state - (A @ y + c * p), r_adj - (d * y - A @ p)


class _SchurPattern:
    """Lower-triangle structure of ``A diag(s) A + diag(c)`` for a fixed operator.

    The entries are linear in ``(s, c)``, so they are produced by one sparse
    product and the sparse Cholesky factorization reuses a single symbolic
    analysis for every active-set or interior-point system on this grid.
    """

    def __init__(self, A):
        A = A.tocsc()
        n = A.shape[0]
        pat = sp.tril(A @ A + sp.identity(n)).tocsc()
        pat.sort_indices()
        nnz = pat.nnz
        rows = pat.indices
        cols = np.repeat(np.arange(n), np.diff(pat.indptr))
        index = sp.csc_matrix((np.arange(nnz) + 1.0, rows, pat.indptr), shape=(n, n))
        pi, pj, pk, pv = [], [], [], []
        for k in range(n):
            nz = A.indices[A.indptr[k]:A.indptr[k + 1]]
            vals = A.data[A.indptr[k]:A.indptr[k + 1]]
            ii, jj = np.meshgrid(np.arange(nz.size), np.arange(nz.size), indexing="ij")
            keep = nz[ii] >= nz[jj]
            pi.append(nz[ii][keep])
            pj.append(nz[jj][keep])
            pk.append(np.full(int(keep.sum()), k))
            pv.append((vals[ii] * vals[jj])[keep])
        pi, pj = np.concatenate(pi), np.concatenate(pj)
        slot = np.asarray(index[pi, pj]).ravel().astype(np.int64) - 1
        self.n = n
        self.smap = sp.csr_matrix((np.concatenate(pv), (slot, np.concatenate(pk))), shape=(nnz, n))
        self.diag = np.asarray(index[np.arange(n), np.arange(n)]).ravel().astype(np.int64) - 1
        self.I = cvxopt.matrix(rows.astype(np.int64).tolist(), tc="i")
        self.J = cvxopt.matrix(cols.tolist(), tc="i")
        self.symbolic = None

    def factor(self, s, c):
        """Numeric factorization; the returned solver is valid until the next call."""
        vals = self.smap @ s
        vals[self.diag] += c
        K = cvxopt.spmatrix(cvxopt.matrix(vals), self.I, self.J, (self.n, self.n))
        if self.symbolic is None:
            self.symbolic = cholmod.symbolic(K)
        F = self.symbolic
        cholmod.numeric(K, F)

        def solve(b):
            x = cvxopt.matrix(np.ascontiguousarray(b, dtype=float))
            cholmod.solve(F, x)
            return np.array(x).ravel()

        return solve


def _schur_solver(op, c, d):
    """Factorization of ``A D^-1 A + C`` as a ``solve(b)`` callable."""
    if cvxopt is not None:
        pattern = op.__dict__.get("_schur_pattern")
        if pattern is None:
            pattern = op.__dict__["_schur_pattern"] = _SchurPattern(op.matrix)
        try:
            return pattern.factor(1.0 / d, c)
        except ArithmeticError:  # not numerically positive definite; use pivoting LU
            pass
    A = op.matrix
    M = (A @ sp.diags(1.0 / d) @ A + sp.diags(c)).tocsc()
    return spla.splu(M, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options={"SymmetricMode": True}).solve


def _reduced_solver(op, c, d):
    """Factor the reduced (y, p) system once; return ``solve(r_state, r_adj) -> (y, p)``.

    In 1D the block tridiagonal solve is cheap and is simply repeated. In 2D
    the Schur complement ``A D^-1 A + C`` is factored, which loses accuracy
    for large rho, so each solve is refined on the full system.
    """
    if op.grid.dim == 1:
        return lambda rs, ra: kernels.kkt_tridiag_solve(op.diag, op.off, d, c, rs, ra)
    A = op.matrix
    schur = _schur_solver(op, c, d)

    def apply(rs, ra):
        p = schur(rs - A @ (ra / d))
        return (ra + A @ p) / d, p

    def solve(r_state, r_adj):
        y, p = apply(r_state, r_adj)
        for _ in range(MAX_REFINE):
            es, ea = _kkt_residual(A, c, d, y, p, r_state, r_adj)
            if _backward_error(op, c, d, y, p, es, ea, r_state, r_adj) <= 0.1 * op.tol_lin:
                break
            dy, dp = apply(es, ea)
            y, p = y + dy, p + dp
        return y, p

    return solve


def _backward_error(op, c, d, y, p, es, ea, r_state, r_adj):
    knorm = op.norm_inf + max(np.abs(c).max(initial=0.0), np.abs(d).max(initial=0.0))
    scale = knorm * max(np.abs(y).max(), np.abs(p).max()) + max(np.abs(r_state).max(), np.abs(r_adj).max())
    if scale == 0.0:
        return 0.0
    return max(np.abs(es).max(), np.abs(ea).max()) / scale


def solve_kkt_on_sets(sets, data, op, alpha, rho, mu):
    """Solve the linear optimality system for a fixed active-set guess.

    Returns ``(u, y, p, xi, mu_out)`` with ``A y = u + f``,
    ``A p = y - y_d + mu_out`` and ``p + alpha u + xi = 0``.
    """
    is_I, ufix, xi_I, c, d, r_state, r_adj = _reduced_rhs(sets, data, alpha, rho, mu)
    y, p = _reduced_solver(op, c, d)(r_state, r_adj)
    es, ea = _kkt_residual(op.matrix, c, d, y, p, r_state, r_adj)
    err = _backward_error(op, c, d, y, p, es, ea, r_state, r_adj)
    if not err <= op.tol_lin:
        raise LinearSolveError("active-set system solve inaccurate", err)
    u = np.where(is_I, -(p + xi_I) / alpha, ufix)
    xi = np.where(is_I, xi_I, -(p + alpha * u))
    mu_out = np.where(sets.ymask, mu + rho * (y - data.psi), 0.0)
    return u, y, p, xi, mu_out


def subgradient(xi, beta):
    """Element of the l1 subdifferential recovered from ``xi = -(p + alpha u)``."""
    return np.clip(xi / beta, -1.0, 1.0)


def inner_solve(data, op, alpha, rho, mu, u0, p0=None, max_iter=MAX_INNER):
    """Active-set iteration until all seven sets repeat exactly.

    Starts from the control ``u0`` and adjoint ``p0`` (computed from ``u0``
    when omitted). Hitting ``max_iter`` or revisiting an earlier partition
    returns the last iterate with ``converged=False``.
    """
    _check_params(alpha, rho, data.beta)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise ValueError("multiplier shift mu must be nonnegative")
    y = solve_state(op, u0, data.f)
    if p0 is None:
        p0 = solve_adjoint(op, y - data.yd + np.maximum(mu + rho * (y - data.psi), 0.0))
    sets = classify_sets(p0, y, mu, alpha, rho, data)
    seen = {sets.key()}
    converged = False
    it = 0
    while it < max_iter:
        u, y, p, xi, mu_out = solve_kkt_on_sets(sets, data, op, alpha, rho, mu)
        it += 1
        new = classify_sets(p, y, mu, alpha, rho, data)
        if new == sets:
            converged = True
            break
        if new.key() in seen:
            # the iteration is deterministic, so a revisited partition means a cycle
            break
        seen.add(new.key())
        sets = new
    return SubproblemResult(
        u=u, y=y, p=p, xi=xi, mu_out=mu_out, lam=subgradient(xi, data.beta),
        inner_iterations=it, converged=converged, sets=sets, exact=converged,
    )


def prox(v, thresh, ua, ub):
    """Soft-threshold by ``thresh``, then clip to ``[ua, ub]``."""
    return np.clip(np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0), ua, ub)


def initial_step(op, data, alpha, rho, mu, u):
    """Reciprocal of a Lipschitz bound for the smooth part's gradient."""
    y = solve_state(op, u, data.f)
    active = bool(np.any(mu + rho * (y - data.psi) > 0))
    return 1.0 / (alpha + (1.0 + rho * active) / op.lambda_min**2)


def prox_gradient_globalize(data, op, alpha, rho, mu, u0, max_iters=20000, tol=1e-10):
    """Monotone proximal-gradient iteration on the reduced subproblem.

    Stops when ``||u - prox(u - grad F(u))||_h <= tol`` or after
    ``max_iters`` accepted steps. Backtracking halves the step until the
    objective decreases sufficiently.
    """
    _check_params(alpha, rho, data.beta)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (op.grid.size,))
    step0 = initial_step(op, data, alpha, rho, mu, u0)
    w = op.grid.weight
    args = (w, u0, data.f, data.yd, data.psi, mu, data.ua, data.ub, alpha, rho, data.beta, step0, max_iters, tol)
    if op.grid.dim == 1:
        out = kernels.prox_gradient_1d(*op._factor, *args)
    else:
        out = kernels.prox_gradient(op.solve, *args)
    return ProxResult(*out)


def _step_to_boundary(pairs, frac=0.995):
    s = 1.0
    for x, dx in pairs:
        neg = dx < 0
        if neg.any():
            s = min(s, frac * float(np.min(-x[neg] / dx[neg])))
    return s


class _BoxIPM:
    """Primal-dual state of the split variables ``u = v - z``.

    ``v`` lives in ``[0, vb]`` and ``z`` in ``[0, zb]``; ``sv, sz`` are the
    upper slacks and ``a1, a2, b1, b2`` the bound multipliers. Nodes where a
    bound interval is empty keep the variable at zero and drop its barrier.
    """

    def __init__(self, ua, ub):
        self.vb, self.zb = np.maximum(ub, 0.0), np.maximum(-ua, 0.0)
        self.fv, self.fz = self.vb > 0, self.zb > 0
        self.v, self.z = 0.5 * self.vb, 0.5 * self.zb
        self.sv, self.sz = self.vb - self.v, self.zb - self.z
        self.a1, self.a2 = self.fv.astype(float), self.fv.astype(float)
        self.b1, self.b2 = self.fz.astype(float), self.fz.astype(float)
        self.npairs = max(2 * int(self.fv.sum() + self.fz.sum()), 1)

    @property
    def u(self):
        return self.v - self.z

    def center_duals(self, g, beta, spread):
        """Multipliers that zero the dual residual at gradient ``g``, shifted by ``spread``."""
        rv, rz = g + beta, beta - g
        self.a1 = np.where(self.fv, np.maximum(rv, 0.0) + spread, 0.0)
        self.a2 = np.where(self.fv, np.maximum(-rv, 0.0) + spread, 0.0)
        self.b1 = np.where(self.fz, np.maximum(rz, 0.0) + spread, 0.0)
        self.b2 = np.where(self.fz, np.maximum(-rz, 0.0) + spread, 0.0)

    def pairs(self):
        return [(self.v, self.a1), (self.sv, self.a2), (self.z, self.b1), (self.sz, self.b2)]

    def gap(self):
        return sum(float(x @ a) for x, a in self.pairs()) / self.npairs


def solve_model_ipm(data, op, alpha, rho, mu, uk, yk, ymask, tol=1e-13, max_iters=60):
    """Minimize the quadratic model with the penalty-active mask frozen.

    The model keeps the tracking, Tikhonov and l1 terms and replaces the
    penalty by ``1/(2 rho) sum_Y (mu + rho (y - psi))^2``. Writing
    ``u = v - z`` with ``0 <= v <= u_b`` and ``0 <= z <= -u_a`` turns it into a
    bound-constrained QP, solved by a Mehrotra predictor-corrector
    interior-point iteration until ``max(gap, dual residual)`` relative to
    ``1 + |grad|`` reaches ``tol`` or stops improving. Each Newton system reduces to the (y, p) system
    of the active-set method with ``c = 1 / (alpha + E)``, ``E`` the
    condensed barrier curvature. Returns ``(u, iterations)``.
    """
    st = _BoxIPM(data.ua, data.ub)
    fv, fz = st.fv, st.fz
    dmask = 1.0 + rho * ymask
    beta = data.beta
    zero = np.zeros_like(uk)
    best, stall = (np.inf, st.u), 0
    it = 0
    for it in range(1, max_iters + 1):
        u = st.u
        y = yk + op.solve(u - uk)
        p = op.solve(y - data.yd + ymask * (mu + rho * (y - data.psi)))
        g = p + alpha * u
        if it == 1:
            st.center_duals(g, beta, 0.1 * (1.0 + float(np.abs(g).max())))
        gap = st.gap()
        rv = np.where(fv, g + beta - st.a1 + st.a2, 0.0)
        rz = np.where(fz, -g + beta - st.b1 + st.b2, 0.0)
        scale = 1.0 + float(np.abs(g).max())
        merit = max(gap, float(np.abs(rv).max()), float(np.abs(rz).max())) / scale
        if merit < best[0]:
            best, stall = (merit, u), 0
        elif best[0] <= STALL_LEVEL:
            stall += 1
        # past the rounding floor the iteration drifts, so keep the best point seen
        if merit <= tol or stall >= MAX_IPM_STALL:
            break
        with np.errstate(divide="ignore", invalid="ignore"):
            iv = np.where(fv, st.v * st.sv / (st.a1 * st.sv + st.a2 * st.v), 0.0)
            iz = np.where(fz, st.z * st.sz / (st.b1 * st.sz + st.b2 * st.z), 0.0)
        einv = iv + iz
        c = einv / (alpha * einv + 1.0)
        solve = _reduced_solver(op, c, dmask)

        def direction(m1, m2, m3, m4):
            # complementarity targets x * a = m for the four bound pairs
            with np.errstate(divide="ignore", invalid="ignore"):
                rvp = np.where(fv, g + beta - m1 / st.v + m2 / st.sv, 0.0)
                rzp = np.where(fz, -g + beta - m3 / st.z + m4 / st.sz, 0.0)
                r = np.where(einv > 0, (iz * rzp - iv * rvp) / einv, 0.0)
                _, dp = solve(c * r, zero)
                du = c * (r - dp)
                dv = np.where(einv > 0, (iv * du - iv * iz * (rvp + rzp)) / einv, 0.0)
                dz = np.where(fz, dv - du, 0.0)
                da1 = np.where(fv, (m1 - st.a1 * st.v - st.a1 * dv) / st.v, 0.0)
                da2 = np.where(fv, (m2 - st.a2 * st.sv + st.a2 * dv) / st.sv, 0.0)
                db1 = np.where(fz, (m3 - st.b1 * st.z - st.b1 * dz) / st.z, 0.0)
                db2 = np.where(fz, (m4 - st.b2 * st.sz + st.b2 * dz) / st.sz, 0.0)
            prim = [dv, -dv, dz, -dz]
            dual = [da1, da2, db1, db2]
            step = _step_to_boundary([(x, dx) for (x, _), dx in zip(st.pairs(), prim)]
                                     + [(a, da) for (_, a), da in zip(st.pairs(), dual)], frac=1.0)
            return prim, dual, step

        prim, dual, s_aff = direction(zero, zero, zero, zero)
        gap_aff = sum(
            float((x + s_aff * dx) @ (a + s_aff * da)) for (x, a), dx, da in zip(st.pairs(), prim, dual)
        ) / st.npairs
        sigma = min((gap_aff / gap) ** 3, 1.0) if gap > 0 else 0.0
        targets = [np.where(f, sigma * gap - dx * da, 0.0) for f, dx, da in zip((fv, fv, fz, fz), prim, dual)]
        prim, dual, s = direction(*targets)
        s = min(1.0, 0.995 * s)
        dv, dz = prim[0], prim[2]
        st.v, st.sv, st.z, st.sz = st.v + s * dv, st.sv - s * dv, st.z + s * dz, st.sz - s * dz
        st.a1, st.a2, st.b1, st.b2 = (a + s * da for a, da in zip((st.a1, st.a2, st.b1, st.b2), dual))
    return best[1], it


def objective_change(u, y, du, dy, data, w, alpha, rho, mu):
    """``J(u + du) - J(u)`` accumulated term by term to avoid cancellation."""
    un = u + du
    t = mu + rho * (y - data.psi)
    tp, tpn = np.maximum(t, 0.0), np.maximum(t + rho * dy, 0.0)
    both = (tp > 0) & (tpn > 0)
    # on nodes active before and after, the penalty change is exactly linear plus quadratic in dy
    pen = np.where(both, tp * dy + 0.5 * rho * dy * dy, (tpn - tp) * (tpn + tp) / (2.0 * rho))
    val = float(np.dot(y - data.yd, dy)) + 0.5 * float(np.dot(dy, dy))
    val += alpha * float(np.dot(u, du)) + 0.5 * alpha * float(np.dot(du, du))
    val += data.beta * float(np.sum(np.abs(un) - np.abs(u)))
    return w * (val + float(pen.sum()))


def fixed_point_residual(u, p, data, w, alpha):
    """``||u - prox(-p / alpha)||_h`` with threshold ``beta / alpha``; zero exactly at the minimizer."""
    r = u - prox(-p / alpha, data.beta / alpha, data.ua, data.ub)
    return float(np.sqrt(w * np.dot(r, r)))


def proximal_newton(data, op, alpha, rho, mu, u0, max_iters=1, tol=1e-14):
    """Proximal Newton steps on the subproblem with an Armijo line search.

    Each step minimizes the model whose penalty curvature is frozen at the
    current penalty-active set, then backtracks on the true objective. The
    direction is a descent direction whenever ``u0`` is not optimal. The
    returned history holds objective values relative to the start.
    """
    _check_params(alpha, rho, data.beta)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (op.grid.size,))
    w = op.grid.weight
    u = np.clip(np.asarray(u0, dtype=float), data.ua, data.ub)
    y = solve_state(op, u, data.f)
    phi = 0.0
    history = [phi]
    delta = -np.inf
    it = 0
    for it in range(1, max_iters + 1):
        t = mu + rho * (y - data.psi)
        p = solve_adjoint(op, y - data.yd + np.maximum(t, 0.0))
        un, _ = solve_model_ipm(data, op, alpha, rho, mu, u, y, t > 0)
        du = un - u
        dy = op.solve(du)
        delta = w * (float(np.dot(p + alpha * u, du)) + data.beta * float(np.sum(np.abs(un) - np.abs(u))))
        if not delta < -tol:
            break
        s = 1.0
        while True:
            change = objective_change(u, y, s * du, s * dy, data, w, alpha, rho, mu)
            if change <= 1e-4 * s * delta or s < 1e-12:
                break
            s *= 0.5
        if change > 0:
            break
        u, y, phi = u + s * du, y + s * dy, phi + change
        history.append(phi)
    return ProxResult(u, it, float(-delta), np.asarray(history))


def _objective_scale(u, y, data, w, alpha, rho, mu):
    t = np.maximum(mu + rho * (y - data.psi), 0.0)
    pen = float(np.sum(t * t + mu * mu)) / (2.0 * rho)
    return abs(objective(u, y, data, w, alpha, rho, mu)) + w * pen


def newton_solve(data, op, alpha, rho, mu, u0, max_steps=NEWTON_STEPS, max_inner=MAX_INNER):
    """Proximal Newton steps, each followed by an active-set attempt.

    Returns the active-set result as soon as it terminates. If the Newton
    steps stall at rounding level first, the stalled point is returned with
    ``exact=False``; for large ``rho`` the penalty-active set is then
    ambiguous in floating point even though the objective is minimal.
    """
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (op.grid.size,))
    w = op.grid.weight
    u = np.asarray(u0, dtype=float)
    iters = 0
    res = None
    for _ in range(max_steps):
        y = solve_state(op, u, data.f)
        tol = 1e-15 * _objective_scale(u, y, data, w, alpha, rho, mu)
        g = proximal_newton(data, op, alpha, rho, mu, u, max_iters=1, tol=tol)
        res = inner_solve(data, op, alpha, rho, mu, g.u, None, max_iter=min(max_inner, POLISH_ITERS))
        iters += res.inner_iterations
        if res.converged:
            res.inner_iterations = iters
            return res
        if g.residual <= tol or np.array_equal(g.u, u):
            res = _frozen_mask_polish(data, op, alpha, rho, mu, g.u)
            if res is None:
                return _result_at(data, op, alpha, rho, mu, g.u, iters)
            res.inner_iterations += iters
            return res
        u = g.u
    res.inner_iterations = iters
    return res


def _result_at(data, op, alpha, rho, mu, u, iters):
    y = solve_state(op, u, data.f)
    t = mu + rho * (y - data.psi)
    mu_out = np.maximum(t, 0.0)
    p = solve_adjoint(op, y - data.yd + mu_out)
    xi = -(p + alpha * u)
    return SubproblemResult(
        u=u, y=y, p=p, xi=xi, mu_out=mu_out, lam=subgradient(xi, data.beta),
        inner_iterations=iters, converged=True, sets=classify_sets(p, y, mu, alpha, rho, data), exact=False,
    )


def _frozen_mask_polish(data, op, alpha, rho, mu, u):
    """Active-set steps on the control labels with the penalty mask held fixed.

    From a point where the objective cannot decrease further this settles
    within a few steps and makes the control optimality relations hold
    exactly; the mask itself may still disagree with ``mu + rho (y - psi) > 0``
    at nodes where that quantity is at rounding level. Returns None when the
    labels do not settle.
    """
    y = solve_state(op, u, data.f)
    t = mu + rho * (y - data.psi)
    p = solve_adjoint(op, y - data.yd + np.maximum(t, 0.0))
    sets = classify_sets(p, y, mu, alpha, rho, data)
    ymask = sets.ymask
    for it in range(1, POLISH_ITERS + 1):
        u, y, p, xi, mu_out = solve_kkt_on_sets(sets, data, op, alpha, rho, mu)
        labels = classify_sets(p, y, mu, alpha, rho, data).labels
        if np.array_equal(labels, sets.labels):
            return SubproblemResult(
                u=u, y=y, p=p, xi=xi, mu_out=mu_out, lam=subgradient(xi, data.beta),
                inner_iterations=it, converged=True, sets=sets, exact=False,
            )
        sets = ActiveSets(labels, ymask)
    return None
