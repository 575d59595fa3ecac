"""Open-loop Nash equilibria by single shooting on the coupled two-point
boundary-value problem.

Controls are eliminated analytically from the stationarity conditions at
every integrator substep, states and costates are propagated forward with
fixed-step RK4, and a damped Newton iteration drives the stacked terminal
costates to zero (terminal costs live in the integrand, so transversality
reads psi_i(T) = 0). Multi-start follows the study protocol: a neutral zero
guess, a constant-state stationarity guess, and a mirrored guess for the
collision game.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NoConvergedCandidate, NotApplicable
from .games import (CostateTrajectory, GameDefinition, ParameterVector,
                    Trajectory, coupled_rhs, dphi_du)

NEWTON_MAX_ITER = 50
NEWTON_FD_STEP = 1e-6
SHOOT_TOL = 1e-6  # 1e-6 * (1 + ||grad h||_inf); grad h = 0 in integrand form


@dataclass
class OlneSolution:
    """One shooting attempt: trajectory, costates and convergence data."""

    trajectory: Trajectory
    costates: CostateTrajectory
    theta: ParameterVector
    psi0: np.ndarray
    shooting_residual: float
    converged: bool
    start_label: str
    iterations: int


def _propagate(game: GameDefinition, theta: ParameterVector, psi0: np.ndarray):
    """Integrate states+costates from a stacked psi(0); returns
    (status, X, PSI, U) with status -1 on success."""
    k = _kernels.active
    h, steps = game.grid.h, game.grid.steps
    if game.family == "lti":
        wu = np.concatenate([theta[i][:game.m[i]] for i in range(game.N)])
        S = np.zeros((game.N, game.n))
        for i, b in enumerate(game.bases):
            for r, coord in enumerate(b.state_mask):
                S[i, coord] = theta[i][game.m[i] + r]
        return k.shoot_lti(game.dynamics.A, game.dynamics.B,
                           game.dynamics.m_offsets, wu, S,
                           np.ascontiguousarray(game.x0),
                           np.ascontiguousarray(psi0, dtype=float), h, steps)
    if game.family == "collision":
        th = np.ascontiguousarray(np.vstack([theta[0], theta[1]]))
        xT = np.ascontiguousarray(
            np.concatenate([game.bases[0].target, game.bases[1].target]))
        from .games import DIST_FLOOR
        return k.shoot_collision(th, np.ascontiguousarray(game.x0), xT,
                                 np.ascontiguousarray(psi0, dtype=float),
                                 h, steps, DIST_FLOOR)
    return _propagate_generic(game, theta, psi0)


def _propagate_generic(game, theta, psi0):
    # pure-Python path for custom game families
    n, N, mtot = game.n, game.N, game.mtot
    steps, h = game.grid.steps, game.grid.h
    X = np.empty((steps + 1, n))
    PSI = np.empty((steps + 1, N * n))
    U = np.empty((steps + 1, mtot))

    def rhs(y):
        x, psis = y[:n], y[n:].reshape(N, n)
        u, dx, dpsis = coupled_rhs(game, theta, x, psis)
        return u, np.concatenate([dx, dpsis.ravel()])

    y = np.concatenate([game.x0, psi0])
    X[0], PSI[0] = y[:n], y[n:]
    U[0] = rhs(y)[0]
    for k in range(steps):
        try:
            _, k1 = rhs(y)
            _, k2 = rhs(y + h / 2 * k1)
            _, k3 = rhs(y + h / 2 * k2)
            _, k4 = rhs(y + h * k3)
        except Exception:
            return k, X, PSI, U
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > 1e6:
            return k, X, PSI, U
        X[k + 1], PSI[k + 1] = y[:n], y[n:]
        try:
            U[k + 1] = rhs(y)[0]
        except Exception:
            return k, X, PSI, U
    return -1, X, PSI, U


def _terminal_residual(game, theta, psi0):
    status, X, PSI, U = _propagate(game, theta, psi0)
    if status != -1:
        return None, None
    return PSI[-1], (X, PSI, U)


def newton_shoot(game: GameDefinition, theta: ParameterVector, psi0_guess,
                 label: str = "guess", tol: float = SHOOT_TOL,
                 max_iter: int = NEWTON_MAX_ITER) -> OlneSolution:
    """Damped-Newton single shooting over the stacked initial costate."""
    d = game.N * game.n
    p = np.asarray(psi0_guess, dtype=float).ravel().copy()
    if p.size != d:
        raise ValueError(f"psi0 guess must have {d} entries")

    r, data = _terminal_residual(game, theta, p)
    it = 0
    best_rn = np.inf
    stall = 0
    while it < max_iter:
        if r is None:
            break
        rn = np.max(np.abs(r))
        if rn <= tol:
            break
        # stagnation guard: damped steps that stop shrinking the terminal
        # residual will not recover; bail out instead of burning the budget
        if rn > 0.95 * best_rn:
            stall += 1
            if stall >= 8:
                break
        else:
            stall = 0
        best_rn = min(best_rn, rn)
        J = np.empty((d, d))
        fd_ok = True
        for j in range(d):
            pj = p.copy()
            pj[j] += NEWTON_FD_STEP
            rj, _ = _terminal_residual(game, theta, pj)
            if rj is None:
                fd_ok = False
                break
            J[:, j] = (rj - r) / NEWTON_FD_STEP
        if not fd_ok:
            break
        try:
            step = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        # backtracking on the max-norm of the terminal residual
        lam, improved = 1.0, False
        while lam >= 2.0 ** -12:
            r_try, data_try = _terminal_residual(game, theta, p + lam * step)
            if r_try is not None and np.max(np.abs(r_try)) < rn:
                p = p + lam * step
                r, data = r_try, data_try
                improved = True
                break
            lam *= 0.5
        it += 1
        if not improved:
            break

    if r is None or data is None:
        # diverged propagation: report the guess itself as non-converged
        status, X, PSI, U = _propagate(game, theta, p)
        k = max(status, 0)
        X[k + 1:], PSI[k + 1:], U[k + 1:] = X[k], PSI[k], U[k]
        resid = np.inf
    else:
        X, PSI, U = data
        resid = float(np.max(np.abs(r)))
    traj = Trajectory(game.grid, X, U)
    costates = CostateTrajectory(game.grid, PSI)
    return OlneSolution(traj, costates, theta, p, resid, resid <= tol, label, it)


def constant_state_guess(game: GameDefinition, theta: ParameterVector) -> np.ndarray:
    """Costate guess from the stationarity conditions at x0 with u = 0.

    Translates the constant-trajectory initial guess of the study protocol
    to shooting: solve G_i^T psi_i = -(dphi_i/du_i)^T theta_i at the initial
    state in the least-squares sense (minimum-norm psi).
    """
    psi0 = np.zeros((game.N, game.n))
    u0 = np.zeros(game.mtot)
    for i in range(game.N):
        c = dphi_du(game, i, game.x0, u0).T @ theta[i]
        G = game.dynamics.fu_jac(i, game.x0)
        psi0[i], *_ = np.linalg.lstsq(G.T, -c, rcond=None)
    return psi0.ravel()


def default_guesses(game: GameDefinition, theta: ParameterVector):
    guesses = [("zero", np.zeros(game.N * game.n))]
    try:
        guesses.append(("const-state", constant_state_guess(game, theta)))
    except Exception:
        pass
    return guesses


def mirrored_guess(game: GameDefinition, base: OlneSolution) -> np.ndarray:
    """Reflect each robot's path across its start-target line and rebuild a
    stationarity-consistent initial costate for the mirrored motion."""
    if game.family != "collision":
        raise NotApplicable("mirrored starts are defined for the collision game")
    if not base.converged:
        raise ValueError("base solution must be converged")
    theta = base.theta
    psi0 = base.psi0.reshape(game.N, game.n).copy()
    u0 = base.trajectory.controls[0].copy()
    u_mirror = np.zeros(game.mtot)
    for i in range(game.N):
        p0 = game.x0[2 * i:2 * i + 2]
        tgt = game.bases[i].target
        dvec = tgt - p0
        dn = np.linalg.norm(dvec)
        dvec = dvec / dn
        refl = 2.0 * np.outer(dvec, dvec) - np.eye(2)
        u_mirror[2 * i:2 * i + 2] = refl @ u0[2 * i:2 * i + 2]
    for i in range(game.N):
        c = dphi_du(game, i, game.x0, u_mirror).T @ theta[i]
        G = game.dynamics.fu_jac(i, game.x0)
        # minimally adjust the components seen through G_i; the cross-robot
        # costate components are kept from the base solution
        corr, *_ = np.linalg.lstsq(G.T, -c - G.T @ psi0[i], rcond=None)
        psi0[i] = psi0[i] + corr
    out = psi0.ravel()
    if not np.all(np.isfinite(out)):
        raise ValueError("mirrored guess is not finite")
    return out


def solve_olne(game: GameDefinition, theta: ParameterVector, guesses=None):
    """Shooting from every guess; returns one OlneSolution per attempt.

    ``guesses`` is a list of stacked psi(0) vectors or (label, vector) pairs;
    defaults to the zero + constant-state protocol, augmented with the
    mirrored start (derived from the first converged attempt) for the
    collision game.
    """
    game.validate_theta(theta)
    if not game.control_weights_positive(theta):
        raise ValueError("quadratic control weights must be strictly positive "
                         "for the stationarity elimination")
    augment = guesses is None
    if guesses is None:
        guesses = default_guesses(game, theta)
    else:
        guesses = [g if isinstance(g, tuple) else (f"guess{k}", np.asarray(g, float))
                   for k, g in enumerate(guesses)]
    sols = [newton_shoot(game, theta, g, label) for label, g in guesses]
    if augment and game.family == "collision":
        base = next((s for s in sols if s.converged), None)
        if base is not None:
            try:
                g = mirrored_guess(game, base)
                sols.append(newton_shoot(game, theta, g, "mirrored"))
            except NotApplicable:
                pass
    return sols


def select_best_olne(candidates, gt: Trajectory) -> OlneSolution:
    """Converged candidate with the smallest trajectory error against gt;
    ties break in list order."""
    from .metrics import nsae
    best, best_err = None, None
    for sol in candidates:
        if not sol.converged:
            continue
        err = nsae(gt.resampled(sol.trajectory.grid), sol.trajectory).total
        if best is None or err < best_err:
            best, best_err = sol, err
    if best is None:
        raise NoConvergedCandidate("no converged OLNE candidate")
    return best
