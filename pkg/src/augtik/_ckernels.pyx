# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: tridiagonal solves, set classification, the 1D
reduced KKT solve and the 1D proximal-gradient loop.

Signatures mirror ``augtik._pykernels``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()

cdef enum:
    A_A = 0
    A_B = 1
    A_0 = 2
    I_MINUS = 3
    I_PLUS = 4

cdef int MAX_HALVINGS = 60


def ptfactor(d, e):
    cdef double[::1] dd = np.array(d, dtype=np.float64)
    cdef double[::1] ee = np.array(e, dtype=np.float64)
    cdef Py_ssize_t n = dd.shape[0], i
    cdef double[::1] dfac = np.empty(n)
    cdef double[::1] lfac = np.empty(max(n - 1, 0))
    dfac[0] = dd[0]
    if dfac[0] <= 0.0:
        raise np.linalg.LinAlgError("matrix is not positive definite")
    for i in range(1, n):
        lfac[i - 1] = ee[i - 1] / dfac[i - 1]
        dfac[i] = dd[i] - lfac[i - 1] * ee[i - 1]
        if dfac[i] <= 0.0:
            raise np.linalg.LinAlgError("matrix is not positive definite")
    return np.asarray(dfac), np.asarray(lfac)


cdef inline void _ptsolve(const double[::1] dfac, const double[::1] lfac,
                          const double[::1] b, double[::1] x) noexcept nogil:
    cdef Py_ssize_t n = dfac.shape[0], i
    x[0] = b[0]
    for i in range(1, n):
        x[i] = b[i] - lfac[i - 1] * x[i - 1]
    x[n - 1] = x[n - 1] / dfac[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = x[i] / dfac[i] - lfac[i] * x[i + 1]


def ptsolve(dfac, lfac, b):
    cdef const double[::1] df = np.ascontiguousarray(dfac, dtype=np.float64)
    cdef const double[::1] lf = np.ascontiguousarray(lfac, dtype=np.float64)
    cdef const double[::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    out = np.empty(df.shape[0])
    cdef double[::1] x = out
    _ptsolve(df, lf, bb, x)
    return out


def classify(p, y, mu, psi, ua, ub, double alpha, double rho, double beta):
    cdef const double[::1] pp = np.ascontiguousarray(p, dtype=np.float64)
    cdef Py_ssize_t n = pp.shape[0], i
    cdef const double[::1] yy = np.ascontiguousarray(np.broadcast_to(y, (n,)), dtype=np.float64)
    cdef const double[::1] mm = np.ascontiguousarray(np.broadcast_to(mu, (n,)), dtype=np.float64)
    cdef const double[::1] ps = np.ascontiguousarray(np.broadcast_to(psi, (n,)), dtype=np.float64)
    cdef const double[::1] la = np.ascontiguousarray(np.broadcast_to(ua, (n,)), dtype=np.float64)
    cdef const double[::1] lb = np.ascontiguousarray(np.broadcast_to(ub, (n,)), dtype=np.float64)
    labels_arr = np.empty(n, dtype=np.int8)
    ymask_arr = np.empty(n, dtype=np.bool_)
    cdef cnp.int8_t[::1] labels = labels_arr
    cdef cnp.npy_bool[::1] ymask = ymask_arr
    cdef double pi
    for i in range(n):
        pi = pp[i]
        if pi > beta - alpha * la[i]:
            labels[i] = A_A
        elif pi < -alpha * lb[i] - beta:
            labels[i] = A_B
        elif fabs(pi) < beta:
            labels[i] = A_0
        elif pi >= beta:
            labels[i] = I_MINUS
        else:
            labels[i] = I_PLUS
        ymask[i] = (mm[i] + rho * (yy[i] - ps[i])) > 0.0
    return labels_arr, ymask_arr


def kkt_tridiag_solve(double a, double e, d, c, r_state, r_adj):
    """Block (2x2) Thomas algorithm for the quasi-definite 1D system

        d*y - A p = r_adj,   -A y - c*p = -r_state,   A = tridiag(e, a, e).
    """
    cdef const double[::1] dd = np.ascontiguousarray(d, dtype=np.float64)
    cdef const double[::1] cc = np.ascontiguousarray(c, dtype=np.float64)
    cdef const double[::1] rs = np.ascontiguousarray(r_state, dtype=np.float64)
    cdef const double[::1] ra = np.ascontiguousarray(r_adj, dtype=np.float64)
    cdef Py_ssize_t n = dd.shape[0], i
    # Schur blocks S_i = [[s11, s12], [s12, s22]] (symmetric), stored as inverses
    cdef double[::1] i11 = np.empty(n)
    cdef double[::1] i12 = np.empty(n)
    cdef double[::1] i22 = np.empty(n)
    cdef double[::1] g1 = np.empty(n)
    cdef double[::1] g2 = np.empty(n)
    y_arr = np.empty(n)
    p_arr = np.empty(n)
    cdef double[::1] y = y_arr
    cdef double[::1] p = p_arr
    cdef double s11, s12, s22, det, t1, t2, h1, h2
    # E = [[0, -e], [-e, 0]];  E S^{-1} E = e^2 [[i22, i12], [i12, i11]]
    with nogil:
        s11 = dd[0]
        s12 = -a
        s22 = -cc[0]
        h1 = ra[0]
        h2 = -rs[0]
        for i in range(n):
            if i > 0:
                s11 = dd[i] - e * e * i22[i - 1]
                s12 = -a - e * e * i12[i - 1]
                s22 = -cc[i] - e * e * i11[i - 1]
                # g_i = b_i - E S^{-1} g_{i-1}
                t1 = i11[i - 1] * g1[i - 1] + i12[i - 1] * g2[i - 1]
                t2 = i12[i - 1] * g1[i - 1] + i22[i - 1] * g2[i - 1]
                h1 = ra[i] + e * t2
                h2 = -rs[i] + e * t1
            det = s11 * s22 - s12 * s12
            i11[i] = s22 / det
            i12[i] = -s12 / det
            i22[i] = s11 / det
            g1[i] = h1
            g2[i] = h2
        y[n - 1] = i11[n - 1] * g1[n - 1] + i12[n - 1] * g2[n - 1]
        p[n - 1] = i12[n - 1] * g1[n - 1] + i22[n - 1] * g2[n - 1]
        for i in range(n - 2, -1, -1):
            # z_i = S_i^{-1} (g_i - E z_{i+1})
            h1 = g1[i] + e * p[i + 1]
            h2 = g2[i] + e * y[i + 1]
            y[i] = i11[i] * h1 + i12[i] * h2
            p[i] = i12[i] * h1 + i22[i] * h2
    return y_arr, p_arr


cdef inline double _soft_clip(double v, double thresh, double lo, double hi) noexcept nogil:
    cdef double r
    if v > thresh:
        r = v - thresh
    elif v < -thresh:
        r = v + thresh
    else:
        r = 0.0
    if r < lo:
        r = lo
    elif r > hi:
        r = hi
    return r


def prox_gradient_1d(dfac, lfac, double w, u0, f, yd, psi, mu, ua, ub,
                     double alpha, double rho, double beta, double step0,
                     long max_iters, double tol):
    cdef const double[::1] df = np.ascontiguousarray(dfac, dtype=np.float64)
    cdef const double[::1] lf = np.ascontiguousarray(lfac, dtype=np.float64)
    cdef Py_ssize_t n = df.shape[0], i
    cdef const double[::1] ff = np.ascontiguousarray(np.broadcast_to(f, (n,)), dtype=np.float64)
    cdef const double[::1] ydd = np.ascontiguousarray(np.broadcast_to(yd, (n,)), dtype=np.float64)
    cdef const double[::1] pss = np.ascontiguousarray(np.broadcast_to(psi, (n,)), dtype=np.float64)
    cdef const double[::1] mmu = np.ascontiguousarray(np.broadcast_to(mu, (n,)), dtype=np.float64)
    cdef const double[::1] la = np.ascontiguousarray(np.broadcast_to(ua, (n,)), dtype=np.float64)
    cdef const double[::1] lb = np.ascontiguousarray(np.broadcast_to(ub, (n,)), dtype=np.float64)
    u_arr = np.array(u0, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] un = np.empty(n)
    cdef double[::1] y = np.empty(n)
    cdef double[::1] dy = np.empty(n)
    cdef double[::1] tp = np.empty(n)
    cdef double[::1] tpn = np.empty(n)
    cdef double[::1] grad = np.empty(n)
    cdef double[::1] work = np.empty(n)
    cdef double phi, delta = 0.0, s = step0, res = 0.0, du2 = 0.0, rem, lin, q, t
    cdef long it = 0
    cdef int k, accepted
    history = []
    for i in range(n):
        work[i] = u[i] + ff[i]
    _ptsolve(df, lf, work, y)
    phi = 0.0
    for i in range(n):
        t = mmu[i] + rho * (y[i] - pss[i])
        tp[i] = t if t > 0.0 else 0.0
        phi += (0.5 * (y[i] - ydd[i]) * (y[i] - ydd[i]) + 0.5 * alpha * u[i] * u[i] + beta * fabs(u[i])
                + (tp[i] * tp[i] - mmu[i] * mmu[i]) / (2.0 * rho))
    phi *= w
    history.append(phi)
    while True:
        with nogil:
            for i in range(n):
                work[i] = y[i] - ydd[i] + tp[i]
            _ptsolve(df, lf, work, grad)
            res = 0.0
            for i in range(n):
                grad[i] = grad[i] + alpha * u[i]
                q = u[i] - _soft_clip(u[i] - grad[i], beta, la[i], lb[i])
                res += q * q
            res = sqrt(w * res)
        if res <= tol or it >= max_iters:
            break
        accepted = 0
        with nogil:
            for k in range(MAX_HALVINGS):
                for i in range(n):
                    un[i] = _soft_clip(u[i] - s * grad[i], beta * s, la[i], lb[i])
                    work[i] = un[i] - u[i]
                # the state moves linearly; solving for the increment keeps it accurate
                _ptsolve(df, lf, work, dy)
                du2 = 0.0
                rem = 0.0
                for i in range(n):
                    t = mmu[i] + rho * (y[i] + dy[i] - pss[i])
                    tpn[i] = t if t > 0.0 else 0.0
                    du2 += work[i] * work[i]
                    # second-order remainder of the smooth part, free of cancellation
                    rem += 0.5 * dy[i] * dy[i]
                    if tpn[i] > 0.0 and tp[i] > 0.0:
                        rem += 0.5 * rho * dy[i] * dy[i]
                    else:
                        rem += (tpn[i] * tpn[i] - tp[i] * tp[i] - 2.0 * rho * tp[i] * dy[i]) / (2.0 * rho)
                rem += 0.5 * alpha * du2
                if rem <= du2 / (2.0 * s):
                    accepted = 1
                    break
                s *= 0.5
            lin = 0.0
            for i in range(n):
                lin += grad[i] * work[i] + beta * (fabs(un[i]) - fabs(u[i]))
            delta = w * (lin + rem)
        if not accepted or du2 == 0.0 or delta > 0.0:
            # no representable progress left
            break
        for i in range(n):
            u[i] = un[i]
            y[i] = y[i] + dy[i]
            tp[i] = tpn[i]
        phi += delta
        history.append(phi)
        it += 1
    return u_arr, it, res, np.asarray(history)
