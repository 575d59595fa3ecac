# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: coupled state/costate shooting integrators, the
backward residual Riccati sweep and linear-ODE-with-quadrature propagation.

Semantics mirror idgames._kernels.reference exactly (same RK4 stage order,
same half-grid coefficient sampling, same divergence guards); see that module
for the documented contracts.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, fabs, sqrt

cnp.import_array()

BACKEND = "compiled"

DEF DIVERGENCE_GUARD = 1e6
DEF SWEEP_GUARD = 1e12


cdef inline bint _finite_below(double[::1] y, int d, double guard) nogil:
    cdef int i
    for i in range(d):
        if not isfinite(y[i]) or fabs(y[i]) > guard:
            return False
    return True


# ---------------------------------------------------------------------------
# LTI quadratic game shooting
# ---------------------------------------------------------------------------

cdef void _lti_controls(double[:, ::1] B, cnp.int64_t[::1] moff, double[::1] wu,
                        double[::1] y, int n, int N, double[::1] u) nogil:
    # u_i = -(B_i^T psi_i) / (2 wu_i); psi_i = y[n + i*n : n + (i+1)*n]
    cdef int i, j, r, lo, hi
    cdef double acc
    for i in range(N):
        lo = <int> moff[i]
        hi = <int> moff[i + 1]
        for j in range(lo, hi):
            acc = 0.0
            for r in range(n):
                acc += B[r, j] * y[n + i * n + r]
            u[j] = -acc / (2.0 * wu[j])


cdef void _lti_rhs(double[:, ::1] A, double[:, ::1] B, cnp.int64_t[::1] moff,
                   double[::1] wu, double[:, ::1] S, double[::1] y,
                   int n, int N, int mtot, double[::1] u, double[::1] dy) nogil:
    cdef int i, j, r
    cdef double acc
    _lti_controls(B, moff, wu, y, n, N, u)
    for r in range(n):
        acc = 0.0
        for j in range(n):
            acc += A[r, j] * y[j]
        for j in range(mtot):
            acc += B[r, j] * u[j]
        dy[r] = acc
    for i in range(N):
        for r in range(n):
            acc = -2.0 * S[i, r] * y[r]
            for j in range(n):
                acc -= A[j, r] * y[n + i * n + j]
            dy[n + i * n + r] = acc


def shoot_lti(double[:, ::1] A, double[:, ::1] B, object moff_obj,
              double[::1] wu, double[:, ::1] S, double[::1] x0,
              double[::1] psi0, double h, int steps):
    cdef cnp.int64_t[::1] moff = np.ascontiguousarray(moff_obj, dtype=np.int64)
    cdef int n = A.shape[0]
    cdef int N = S.shape[0]
    cdef int mtot = B.shape[1]
    cdef int d = n + N * n
    cdef int k, i, status = -1

    X_arr = np.empty((steps + 1, n))
    PSI_arr = np.empty((steps + 1, N * n))
    U_arr = np.empty((steps + 1, mtot))
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] PSI = PSI_arr
    cdef double[:, ::1] U = U_arr

    buf = np.empty((6, d))
    cdef double[:, ::1] w = buf
    cdef double[::1] y = np.empty(d)
    cdef double[::1] u = np.empty(mtot)

    for i in range(n):
        y[i] = x0[i]
    for i in range(N * n):
        y[n + i] = psi0[i]

    with nogil:
        for i in range(n):
            X[0, i] = y[i]
        for i in range(N * n):
            PSI[0, i] = y[n + i]
        _lti_controls(B, moff, wu, y, n, N, u)
        for i in range(mtot):
            U[0, i] = u[i]
        for k in range(steps):
            # w rows: 0..3 stage derivatives k1..k4, 4 stage state, 5 unused
            _lti_rhs(A, B, moff, wu, S, y, n, N, mtot, u, w[0])
            for i in range(d):
                w[4, i] = y[i] + (h / 2.0) * w[0, i]
            _lti_rhs(A, B, moff, wu, S, w[4], n, N, mtot, u, w[1])
            for i in range(d):
                w[4, i] = y[i] + (h / 2.0) * w[1, i]
            _lti_rhs(A, B, moff, wu, S, w[4], n, N, mtot, u, w[2])
            for i in range(d):
                w[4, i] = y[i] + h * w[2, i]
            _lti_rhs(A, B, moff, wu, S, w[4], n, N, mtot, u, w[3])
            for i in range(d):
                y[i] = y[i] + (h / 6.0) * (w[0, i] + 2.0 * w[1, i] + 2.0 * w[2, i] + w[3, i])
            if not _finite_below(y, d, DIVERGENCE_GUARD):
                status = k
                break
            for i in range(n):
                X[k + 1, i] = y[i]
            for i in range(N * n):
                PSI[k + 1, i] = y[n + i]
            _lti_controls(B, moff, wu, y, n, N, u)
            for i in range(mtot):
                U[k + 1, i] = u[i]
    return status, X_arr, PSI_arr, U_arr


# ---------------------------------------------------------------------------
# Two-robot collision-avoidance game shooting
# ---------------------------------------------------------------------------

cdef inline void _coll_controls(double[:, ::1] theta, double[::1] xT,
                                double[::1] y, double[::1] u) nogil:
    cdef int i, c, s
    for i in range(2):
        s = 2 * i
        for c in range(2):
            u[s + c] = -(2.0 * theta[i, 6 + c] * (y[s + c] - xT[s + c])
                         + y[4 + 4 * i + s + c]) / (2.0 * theta[i, c])


cdef int _coll_rhs(double[:, ::1] theta, double[::1] xT, double dist_floor,
                   double[::1] y, double[::1] u, double[::1] dy) nogil:
    # returns 0 ok, 1 when the robots fall inside the distance floor
    cdef double d0 = y[0] - y[2]
    cdef double d1 = y[1] - y[3]
    cdef double d2 = d0 * d0 + d1 * d1
    cdef double d = sqrt(d2)
    cdef double d3, d4, sgn, prox, delc, g
    cdef int i, c, s, so
    if not isfinite(d) or d < dist_floor:
        return 1
    d3 = 1.0 / (d2 * d)
    d4 = 1.0 / (d2 * d2)
    _coll_controls(theta, xT, y, u)
    for c in range(4):
        dy[c] = u[c]
    for i in range(2):
        s = 2 * i
        so = 2 * (1 - i)
        sgn = 1.0 if i == 0 else -1.0
        for c in range(2):
            delc = d0 if c == 0 else d1
            prox = (theta[i, 4] * d3 + 2.0 * theta[i, 5] * d4) * sgn * delc
            g = (2.0 * theta[i, 2 + c] * (y[s + c] - xT[s + c])
                 + 2.0 * theta[i, 6 + c] * u[s + c] - prox)
            dy[4 + 4 * i + s + c] = -g
            dy[4 + 4 * i + so + c] = -prox
    return 0


def shoot_collision(double[:, ::1] theta, double[::1] x0, double[::1] xT,
                    double[::1] psi0, double h, int steps, double dist_floor):
    cdef int d = 12
    cdef int k, i, bad, status = -1

    X_arr = np.empty((steps + 1, 4))
    PSI_arr = np.empty((steps + 1, 8))
    U_arr = np.empty((steps + 1, 4))
    cdef double[:, ::1] X = X_arr
    cdef double[:, ::1] PSI = PSI_arr
    cdef double[:, ::1] U = U_arr

    buf = np.empty((5, d))
    cdef double[:, ::1] w = buf
    cdef double[::1] y = np.empty(d)
    cdef double[::1] u = np.empty(4)

    for i in range(4):
        y[i] = x0[i]
    for i in range(8):
        y[4 + i] = psi0[i]

    with nogil:
        for i in range(4):
            X[0, i] = y[i]
        for i in range(8):
            PSI[0, i] = y[4 + i]
        _coll_controls(theta, xT, y, u)
        for i in range(4):
            U[0, i] = u[i]
        for k in range(steps):
            bad = _coll_rhs(theta, xT, dist_floor, y, u, w[0])
            if bad == 0:
                for i in range(d):
                    w[4, i] = y[i] + (h / 2.0) * w[0, i]
                bad = _coll_rhs(theta, xT, dist_floor, w[4], u, w[1])
            if bad == 0:
                for i in range(d):
                    w[4, i] = y[i] + (h / 2.0) * w[1, i]
                bad = _coll_rhs(theta, xT, dist_floor, w[4], u, w[2])
            if bad == 0:
                for i in range(d):
                    w[4, i] = y[i] + h * w[2, i]
                bad = _coll_rhs(theta, xT, dist_floor, w[4], u, w[3])
            if bad != 0:
                status = k
                break
            for i in range(d):
                y[i] = y[i] + (h / 6.0) * (w[0, i] + 2.0 * w[1, i] + 2.0 * w[2, i] + w[3, i])
            if not _finite_below(y, d, DIVERGENCE_GUARD):
                status = k
                break
            for i in range(4):
                X[k + 1, i] = y[i]
            for i in range(8):
                PSI[k + 1, i] = y[4 + i]
            _coll_controls(theta, xT, y, u)
            for i in range(4):
                U[k + 1, i] = u[i]
    return status, X_arr, PSI_arr, U_arr


# ---------------------------------------------------------------------------
# Residual Riccati backward sweep
# ---------------------------------------------------------------------------

cdef void _ric_rhs(double[:, :, ::1] NT, double[:, :, ::1] DT, int s, int M,
                   double[:, ::1] P, double[:, ::1] W, double[:, ::1] out) nogil:
    # out = (P Bt + N)(P Bt + N)^T - N N^T - D D^T with N[a,r] = NT[s,r,a]
    cdef int MA = P.shape[0]
    cdef int n = NT.shape[1]
    cdef int mi = DT.shape[1]
    cdef int a, b, r, q
    cdef double acc
    for a in range(MA):
        for r in range(n):
            W[a, r] = P[a, M + r] + NT[s, r, a]
    for a in range(MA):
        for b in range(a, MA):
            acc = 0.0
            for r in range(n):
                acc += W[a, r] * W[b, r] - NT[s, r, a] * NT[s, r, b]
            for q in range(mi):
                acc -= DT[s, q, a] * DT[s, q, b]
            out[a, b] = acc
            out[b, a] = acc


def riccati_sweep(double[:, :, ::1] NT, double[:, :, ::1] DT, double h,
                  int steps, int M):
    cdef int MA = NT.shape[2]
    cdef int k, s, a, b, status = -1
    cdef double v

    P_arr = np.zeros((steps + 1, MA, MA))
    cdef double[:, :, ::1] P = P_arr
    scratch = np.zeros((6, MA, MA))
    cdef double[:, :, ::1] ws = scratch
    Wbuf = np.zeros((MA, NT.shape[1]))
    cdef double[:, ::1] W = Wbuf
    cur_arr = np.zeros((MA, MA))
    cdef double[:, ::1] cur = cur_arr

    with nogil:
        for k in range(steps, 0, -1):
            s = 2 * k
            _ric_rhs(NT, DT, s, M, cur, W, ws[0])
            for a in range(MA):
                for b in range(MA):
                    ws[4, a, b] = cur[a, b] - (h / 2.0) * ws[0, a, b]
            _ric_rhs(NT, DT, s - 1, M, ws[4], W, ws[1])
            for a in range(MA):
                for b in range(MA):
                    ws[4, a, b] = cur[a, b] - (h / 2.0) * ws[1, a, b]
            _ric_rhs(NT, DT, s - 1, M, ws[4], W, ws[2])
            for a in range(MA):
                for b in range(MA):
                    ws[4, a, b] = cur[a, b] - h * ws[2, a, b]
            _ric_rhs(NT, DT, s - 2, M, ws[4], W, ws[3])
            status = -1
            for a in range(MA):
                for b in range(MA):
                    v = cur[a, b] - (h / 6.0) * (ws[0, a, b] + 2.0 * ws[1, a, b]
                                                 + 2.0 * ws[2, a, b] + ws[3, a, b])
                    if not isfinite(v) or fabs(v) > SWEEP_GUARD:
                        status = k
                    cur[a, b] = v
            if status != -1:
                break
            for a in range(MA):
                for b in range(MA):
                    P[k - 1, a, b] = cur[a, b]
    return status, P_arr


# ---------------------------------------------------------------------------
# Linear ODE with accumulated quadratic functional
# ---------------------------------------------------------------------------

cdef void _lin_rhs(double[:, :, ::1] Mt, double[:, ::1] rt, double[:, :, ::1] Qt,
                   double[:, ::1] ql, double[::1] qc, int s, double[::1] yq,
                   int d, double[::1] dyq) nogil:
    cdef int i, j
    cdef double acc, q
    q = qc[s]
    for i in range(d):
        acc = rt[s, i]
        for j in range(d):
            acc += Mt[s, i, j] * yq[j]
        dyq[i] = acc
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += Qt[s, i, j] * yq[j]
        q += yq[i] * acc + 2.0 * ql[s, i] * yq[i]
    dyq[d] = q


def linear_ode_quad(double[:, :, ::1] Mt, double[:, ::1] rt,
                    double[:, :, ::1] Qt, double[:, ::1] ql, double[::1] qc,
                    double[::1] y0, double h, int steps):
    cdef int d = Mt.shape[1]
    cdef int k, i, status = -1
    cdef bint ok

    Y_arr = np.empty((steps + 1, d))
    cdef double[:, ::1] Y = Y_arr
    buf = np.empty((5, d + 1))
    cdef double[:, ::1] w = buf
    cdef double[::1] yq = np.empty(d + 1)

    for i in range(d):
        yq[i] = y0[i]
    yq[d] = 0.0

    with nogil:
        for i in range(d):
            Y[0, i] = yq[i]
        for k in range(steps):
            _lin_rhs(Mt, rt, Qt, ql, qc, 2 * k, yq, d, w[0])
            for i in range(d + 1):
                w[4, i] = yq[i] + (h / 2.0) * w[0, i]
            _lin_rhs(Mt, rt, Qt, ql, qc, 2 * k + 1, w[4], d, w[1])
            for i in range(d + 1):
                w[4, i] = yq[i] + (h / 2.0) * w[1, i]
            _lin_rhs(Mt, rt, Qt, ql, qc, 2 * k + 1, w[4], d, w[2])
            for i in range(d + 1):
                w[4, i] = yq[i] + h * w[2, i]
            _lin_rhs(Mt, rt, Qt, ql, qc, 2 * k + 2, w[4], d, w[3])
            for i in range(d + 1):
                yq[i] = yq[i] + (h / 6.0) * (w[0, i] + 2.0 * w[1, i] + 2.0 * w[2, i] + w[3, i])
            ok = True
            for i in range(d):
                if not isfinite(yq[i]) or fabs(yq[i]) > SWEEP_GUARD:
                    ok = False
            if not ok:
                status = k
                break
            for i in range(d):
                Y[k + 1, i] = yq[i]
    return status, Y_arr, float(yq[d])
