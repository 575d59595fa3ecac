"""Finite-horizon LQ solution by backward Riccati sweep + closed-loop rollout.

This is the independent oracle for the shooting solver on single-player LTI
games with diagonal quadratic costs: J = int x'Qx + u'Ru dt, no terminal
cost, so S(T) = 0 and the optimal feedback is u = -R^-1 B' S(t) x with
costate psi = 2 S x.
"""

import numpy as np

from .numerics import TimeGrid, integrate_rk4


def lq_solution(A, B, Q, R, x0, grid: TimeGrid):
    """Returns (X, U, PSI, S0) sampled on the grid."""
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    Q = np.asarray(Q, float)
    R = np.asarray(R, float)
    x0 = np.asarray(x0, float)
    n = A.shape[0]
    Rinv = np.linalg.inv(R)

    def s_rhs(t, s):
        S = s.reshape(n, n)
        dS = -(S @ A + A.T @ S - S @ B @ Rinv @ B.T @ S + Q)
        return dS.ravel()

    # S on the doubled grid so the forward rollout sees exact stage values
    fine = grid.refined(2)
    S_half = integrate_rk4(s_rhs, np.zeros(n * n), fine, "backward").reshape(-1, n, n)

    def cl_rhs(t, x):
        s = int(round((t - grid.t0) / (grid.h / 2.0)))
        return (A - B @ Rinv @ B.T @ S_half[s]) @ x

    X = integrate_rk4(cl_rhs, x0, grid, "forward")
    S_grid = S_half[::2]
    U = np.einsum("mr,krn,kn->km", -Rinv @ B.T, S_grid, X)
    PSI = 2.0 * np.einsum("kab,kb->ka", S_grid, X)
    return X, U, PSI, S_grid[0]


def theta_to_qr(theta, m, state_mask, n):
    """Map a per-coordinate quadratic parameter vector [w_u; w_x(mask)] to
    the (Q, R) pair of the LQ oracle."""
    theta = np.asarray(theta, float)
    R = np.diag(theta[:m])
    Q = np.zeros((n, n))
    for r, k in enumerate(state_mask):
        Q[k, k] = theta[m + r]
    return Q, R
