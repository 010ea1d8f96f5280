"""Pure NumPy/SciPy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``AUGTIK_PURE_PYTHON=1`` is set. Every function here has a twin with the
same signature in ``_ckernels.pyx``.
"""

import numpy as np
from scipy.linalg import lapack, solve_banded

# node labels of the control partition, in classification order
A_A, A_B, A_0, I_MINUS, I_PLUS = 0, 1, 2, 3, 4

MAX_HALVINGS = 60


def ptfactor(d, e):
    """LDL^T factorization of a symmetric positive definite tridiagonal matrix.

    ``d`` is the diagonal, ``e`` the off-diagonal. Returns ``(dfac, lfac)``.
    """
    dfac, lfac, info = lapack.dpttrf(np.asarray(d, dtype=float), np.asarray(e, dtype=float))
    if info != 0:
        raise np.linalg.LinAlgError(f"dpttrf failed with info={info}")
    return dfac, lfac


def ptsolve(dfac, lfac, b):
    x, info = lapack.dpttrs(dfac, lfac, np.asarray(b, dtype=float))
    if info != 0:
        raise np.linalg.LinAlgError(f"dpttrs failed with info={info}")
    return x


def classify(p, y, mu, psi, ua, ub, alpha, rho, beta):
    """Label every node with its control set and flag the penalty-active nodes.

    Sets are tested in the order A_a, A_b, A_0, I_-, I_+; the first match wins.
    """
    labels = np.select(
        [p > beta - alpha * ua, p < -alpha * ub - beta, np.abs(p) < beta, p >= beta],
        [A_A, A_B, A_0, I_MINUS],
        default=I_PLUS,
    ).astype(np.int8)
    ymask = (mu + rho * (y - psi)) > 0.0
    return labels, ymask


def kkt_tridiag_solve(a, e, d, c, r_state, r_adj):
    """Solve the 1D reduced active-set system for ``(y, p)``.

    The system, with ``A = tridiag(e, a, e)``, reads::

        A y + c * p = r_state
        d * y - A p = r_adj

    It is assembled in the symmetric quasi-definite form (state row negated)
    with interleaved unknowns ``(y_0, p_0, y_1, p_1, ...)`` and solved as a
    banded system with three sub- and super-diagonals.
    """
    n = len(d)
    m = 2 * n
    ab = np.zeros((7, m))
    iy = 2 * np.arange(n)
    ip = iy + 1
    # ab[3 + i - j, j] = K[i, j]
    ab[3, iy] = d
    ab[3, ip] = -c
    ab[2, ip] = -a  # K[2i, 2i+1]
    ab[4, iy] = -a  # K[2i+1, 2i]
    ab[0, ip[1:]] = -e  # K[2i, 2i+3]
    ab[4, ip[:-1]] = -e  # K[2i+2, 2i+1]  (adjoint row i+1 couples p_i)
    ab[2, iy[1:]] = -e  # K[2i+1, 2i+2]
    ab[6, iy[:-1]] = -e  # K[2i+3, 2i]
    rhs = np.empty(m)
    rhs[iy] = r_adj
    rhs[ip] = -np.asarray(r_state)
    z = solve_banded((3, 3), ab, rhs, overwrite_ab=True, overwrite_b=True, check_finite=False)
    return z[iy].copy(), z[ip].copy()


def _soft_clip(v, thresh, ua, ub):
    return np.clip(np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0), ua, ub)


def prox_gradient(solve, w, u0, f, yd, psi, mu, ua, ub, alpha, rho, beta, step0, max_iters, tol):
    """Proximal gradient on the reduced augmented-Lagrange functional.

    ``solve`` applies the inverse elliptic operator. A step ``s`` is accepted
    when the smooth part stays below its quadratic model,
    ``F(u+) <= F(u) + <grad F(u), du> + |du|^2 / (2 s)``; otherwise ``s`` is
    halved. Returns ``(u, iterations, residual, objective_history)`` where
    ``residual`` is the unit-step fixed-point residual
    ``||u - prox(u - grad F(u))||_w`` at the returned iterate.
    """
    u = np.array(u0, dtype=float)
    y = solve(u + f)
    tp = np.maximum(mu + rho * (y - psi), 0.0)
    phi = w * (0.5 * np.dot(y - yd, y - yd) + 0.5 * alpha * np.dot(u, u) + beta * np.abs(u).sum())
    phi += w / (2.0 * rho) * (np.dot(tp, tp) - np.dot(mu, mu))
    history = [phi]
    s = step0
    it = 0
    while True:
        grad = solve(y - yd + tp) + alpha * u
        res = np.sqrt(w * np.sum((u - _soft_clip(u - grad, beta, ua, ub)) ** 2))
        if res <= tol or it >= max_iters:
            break
        for _ in range(MAX_HALVINGS):
            un = _soft_clip(u - s * grad, beta * s, ua, ub)
            du = un - u
            # the state moves linearly; solving for the increment keeps it accurate
            dy = solve(du)
            tpn = np.maximum(mu + rho * (y + dy - psi), 0.0)
            du2 = np.dot(du, du)
            # second-order remainder of the smooth part, free of cancellation
            rem = 0.5 * np.dot(dy, dy) + 0.5 * alpha * du2
            both = (tpn > 0.0) & (tp > 0.0)
            kink = tpn * tpn - tp * tp - 2.0 * rho * tp * dy
            rem += np.sum(np.where(both, (rho * dy) ** 2, kink)) / (2.0 * rho)
            if rem <= du2 / (2.0 * s):
                break
            s *= 0.5
        else:
            break
        delta = w * (np.dot(grad, du) + beta * np.sum(np.abs(un) - np.abs(u)) + rem)
        if du2 == 0.0 or delta > 0.0:
            # no representable progress left
            break
        u, y, tp, phi = un, y + dy, tpn, phi + delta
        history.append(phi)
        it += 1
    return u, it, res, np.asarray(history)


def prox_gradient_1d(dfac, lfac, w, u0, f, yd, psi, mu, ua, ub, alpha, rho, beta, step0, max_iters, tol):
    def solve(b):
        return ptsolve(dfac, lfac, b)

    return prox_gradient(solve, w, u0, f, yd, psi, mu, ua, ub, alpha, rho, beta, step0, max_iters, tol)
