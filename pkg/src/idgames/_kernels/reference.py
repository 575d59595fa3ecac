"""Pure-Python (NumPy) implementations of the hot solver kernels.

The compiled extension ``idgames._kernels._core`` exposes the same four
functions with identical semantics; this module is the fallback selected at
import time when the extension is unavailable (or when IDGAMES_BACKEND=python
is set). Operation order mirrors the C loops so both backends agree to
rounding noise.

Conventions shared by both backends:
  * all arrays are float64 and C-contiguous,
  * time-varying coefficient tables are sampled on the half grid
    t0 + s*h/2, s = 0..2*steps (grid points and interval midpoints),
  * status is -1 on success, else the index of the step that diverged.
"""

import numpy as np

BACKEND = "python"

DIVERGENCE_GUARD = 1e6
SWEEP_GUARD = 1e12


def _rk4_step(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + (h / 2.0) * k1)
    k3 = rhs(y + (h / 2.0) * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def shoot_lti(A, B, moff, wu, S, x0, psi0, h, steps):
    """Forward RK4 of the coupled state/costate system of an LTI game with
    per-coordinate quadratic costs, controls eliminated stationarily.

    A: (n,n); B: (n,mtot); moff: (N+1,) int player column offsets into B;
    wu: (mtot,) positive control-square weights; S: (N,n) state-square
    weights; x0: (n,); psi0: (N*n,) stacked costates.
    Returns (status, X (steps+1,n), PSI (steps+1,N*n), U (steps+1,mtot)).
    """
    n = A.shape[0]
    N = S.shape[0]
    mtot = B.shape[1]
    AT = A.T.copy()

    def controls(psis):
        u = np.empty(mtot)
        for i in range(N):
            lo, hi = moff[i], moff[i + 1]
            u[lo:hi] = -(B[:, lo:hi].T @ psis[i]) / (2.0 * wu[lo:hi])
        return u

    def rhs(y):
        x = y[:n]
        psis = y[n:].reshape(N, n)
        u = controls(psis)
        dx = A @ x + B @ u
        dpsi = -2.0 * S * x - psis @ A  # row i: -2 S_i*x - A^T psi_i
        return np.concatenate([dx, dpsi.ravel()])

    X = np.empty((steps + 1, n))
    PSI = np.empty((steps + 1, N * n))
    U = np.empty((steps + 1, mtot))
    y = np.concatenate([np.asarray(x0, float), np.asarray(psi0, float)])
    X[0], PSI[0] = y[:n], y[n:]
    U[0] = controls(y[n:].reshape(N, n))
    for k in range(steps):
        y = _rk4_step(rhs, y, h)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_GUARD:
            return k, X, PSI, U
        X[k + 1], PSI[k + 1] = y[:n], y[n:]
        U[k + 1] = controls(y[n:].reshape(N, n))
    return -1, X, PSI, U


def shoot_collision(theta, x0, xT, psi0, h, steps, dist_floor):
    """Forward RK4 of the two-robot collision-avoidance game.

    theta: (2,8) per-player weights ordered
    [u1^2, u2^2, (x1-xT1)^2, (x2-xT2)^2, 1/d, 1/d^2, terminal-x, terminal-y];
    x0, xT: (4,); psi0: (8,) stacked [psi_1; psi_2].
    Returns (status, X (steps+1,4), PSI (steps+1,8), U (steps+1,4)).
    """
    theta = np.asarray(theta, float)
    xT = np.asarray(xT, float)

    def controls(x, psis):
        u = np.empty(4)
        for i in range(2):
            s = 2 * i
            for c in range(2):
                u[s + c] = -(2.0 * theta[i, 6 + c] * (x[s + c] - xT[s + c])
                             + psis[i, s + c]) / (2.0 * theta[i, c])
        return u

    def rhs(y):
        x = y[:4]
        psis = y[4:].reshape(2, 4)
        u = controls(x, psis)
        delta = x[:2] - x[2:]
        d2 = delta @ delta
        d = np.sqrt(d2)
        if not np.isfinite(d) or d < dist_floor:
            return None
        d3 = 1.0 / (d2 * d)
        d4 = 1.0 / (d2 * d2)
        dpsi = np.empty((2, 4))
        for i in range(2):
            s = 2 * i
            so = 2 * (1 - i)
            sgn = 1.0 if i == 0 else -1.0
            g = np.zeros(4)
            for c in range(2):
                prox = (theta[i, 4] * d3 + 2.0 * theta[i, 5] * d4) * sgn * delta[c]
                g[s + c] = (2.0 * theta[i, 2 + c] * (x[s + c] - xT[s + c])
                            + 2.0 * theta[i, 6 + c] * u[s + c] - prox)
                g[so + c] = prox
            dpsi[i] = -g
        return np.concatenate([u, dpsi.ravel()])

    X = np.empty((steps + 1, 4))
    PSI = np.empty((steps + 1, 8))
    U = np.empty((steps + 1, 4))
    y = np.concatenate([np.asarray(x0, float), np.asarray(psi0, float)])
    X[0], PSI[0] = y[:4], y[4:]
    U[0] = controls(y[:4], y[4:].reshape(2, 4))
    for k in range(steps):
        k1 = rhs(y)
        if k1 is None:
            return k, X, PSI, U
        k2 = rhs(y + (h / 2.0) * k1)
        if k2 is None:
            return k, X, PSI, U
        k3 = rhs(y + (h / 2.0) * k2)
        if k3 is None:
            return k, X, PSI, U
        k4 = rhs(y + h * k3)
        if k4 is None:
            return k, X, PSI, U
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > DIVERGENCE_GUARD:
            return k, X, PSI, U
        X[k + 1], PSI[k + 1] = y[:4], y[4:]
        U[k + 1] = controls(y[:4], y[4:].reshape(2, 4))
    return -1, X, PSI, U


def riccati_sweep(NT, DT, h, steps, M):
    """Backward RK4 of the residual-value Riccati equation.

    NT: (2*steps+1, n, MA) half-grid samples of N^T; DT: (2*steps+1, mi, MA)
    samples of D^T; MA = M + n. Integrates
        Pdot = (P Bt + N)(P Bt + N)^T - N N^T - D D^T,   P(T) = 0,
    where Bt = [0; I_n] so that P Bt is the last-n-column block of P.
    Returns (status, P (steps+1, MA, MA)), row k aligned with t_k.
    """
    K2 = NT.shape[0]
    assert K2 == 2 * steps + 1
    MA = NT.shape[2]

    def prhs(s, P):
        N = NT[s].T
        D = DT[s].T
        W = P[:, M:] + N
        return W @ W.T - N @ N.T - D @ D.T

    P = np.zeros((steps + 1, MA, MA))
    cur = np.zeros((MA, MA))
    for k in range(steps, 0, -1):
        s = 2 * k
        k1 = prhs(s, cur)
        k2 = prhs(s - 1, cur - (h / 2.0) * k1)
        k3 = prhs(s - 1, cur - (h / 2.0) * k2)
        k4 = prhs(s - 2, cur - h * k3)
        cur = cur - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(cur)) or np.max(np.abs(cur)) > SWEEP_GUARD:
            return k, P
        P[k - 1] = cur
    return -1, P


def linear_ode_quad(Mt, rt, Qt, ql, qc, y0, h, steps):
    """Forward RK4 of ydot = Mt(t) y + rt(t) with an accumulated quadratic
    functional qdot = y^T Qt(t) y + 2 ql(t)^T y + qc(t).

    All coefficient tables are half-grid sampled; shapes
    Mt (2*steps+1, d, d), rt (2*steps+1, d), Qt (2*steps+1, d, d),
    ql (2*steps+1, d), qc (2*steps+1,).
    Returns (status, Y (steps+1, d), q).
    """
    d = Mt.shape[1]

    def rhs(s, yq):
        y = yq[:d]
        dy = Mt[s] @ y + rt[s]
        dq = y @ (Qt[s] @ y) + 2.0 * (ql[s] @ y) + qc[s]
        return np.concatenate([dy, [dq]])

    Y = np.empty((steps + 1, d))
    yq = np.concatenate([np.asarray(y0, float), [0.0]])
    Y[0] = yq[:d]
    for k in range(steps):
        s = 2 * k
        k1 = rhs(s, yq)
        k2 = rhs(s + 1, yq + (h / 2.0) * k1)
        k3 = rhs(s + 1, yq + (h / 2.0) * k2)
        k4 = rhs(s + 2, yq + h * k3)
        yq = yq + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(yq)) or np.max(np.abs(yq[:d])) > SWEEP_GUARD:
            return k, Y, float(yq[d])
        Y[k + 1] = yq[:d]
    return -1, Y, float(yq[d])
