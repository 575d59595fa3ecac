"""Dynamic game definitions.

A game couples input-affine dynamics ``xdot = f_x(x) + sum_i G_i(x) u_i``
with per-player cost features: each player i carries running basis functions
mu_i(x, u_i) and optional terminal basis functions lam_i(x). Terminal costs
are folded into the integrand, so the full feature vector is

    phi_i(x, u) = [ mu_i(x, u_i) ; dlam_i/dx(x) @ f(x, u) ]

and player i's cost is the integral of theta_i . phi_i along the trajectory.
All derivative evaluations are analytic; finite differences only appear in
the test suite as oracles.

Built-in families: a generic LTI game with per-coordinate quadratic costs
(which includes the single-player double integrator) and the planar
two-robot collision-avoidance game with proximity and target-tracking terms.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, NonFinite
from .numerics import TimeGrid, interp_linear_many, solve_linear

DIST_FLOOR = 1e-6


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------

class LinearDynamics:
    """xdot = A x + sum_i B_i u_i (covers every built-in family)."""

    def __init__(self, A, Bs):
        self.A = np.ascontiguousarray(A, dtype=float)
        self.Bs = [np.ascontiguousarray(B, dtype=float) for B in Bs]
        self.n = self.A.shape[0]
        self.m = tuple(B.shape[1] for B in self.Bs)
        self.N = len(self.Bs)
        if self.A.shape != (self.n, self.n):
            raise ValueError("A must be square")
        for B in self.Bs:
            if B.shape[0] != self.n:
                raise ValueError("input map row count must equal n")
        self.B = np.ascontiguousarray(np.hstack(self.Bs))
        self.m_offsets = np.concatenate([[0], np.cumsum(self.m)]).astype(np.int64)

    def drift(self, x):
        return self.A @ x

    def input_map(self, i, x):
        return self.Bs[i]

    def f(self, x, u):
        return self.A @ x + self.B @ u

    def fx_jac(self, x):
        return self.A

    def fu_jac(self, i, x):
        return self.Bs[i]


# ---------------------------------------------------------------------------
# per-player bases
# ---------------------------------------------------------------------------

class QuadraticBasis:
    """Running basis [u_1^2 .. u_m^2, x_k^2 for k in mask]; no terminal part."""

    def __init__(self, n, m, state_mask):
        self.n = n
        self.m = m
        self.state_mask = tuple(state_mask)
        self.n_mu = m + len(self.state_mask)
        self.n_lam = 0
        self.M = self.n_mu
        self.control_weight_idx = tuple(range(m))

    def mu(self, x, ui):
        return np.concatenate([ui ** 2, x[list(self.state_mask)] ** 2])

    def dmu_dx(self, x, ui):
        out = np.zeros((self.n_mu, self.n))
        for r, k in enumerate(self.state_mask):
            out[self.m + r, k] = 2.0 * x[k]
        return out

    def dmu_du(self, x, ui):
        out = np.zeros((self.n_mu, self.m))
        for j in range(self.m):
            out[j, j] = 2.0 * ui[j]
        return out

    def lam(self, x):
        return np.zeros(0)

    def dlam_dx(self, x):
        return np.zeros((0, self.n))

    def d2lam_dx2(self, x):
        return np.zeros((0, self.n, self.n))


class CollisionBasis:
    """Player basis of the planar two-robot collision-avoidance game.

    mu_i = [u_{i,1}^2, u_{i,2}^2, (x_{i,1}-xT_{i,1})^2, (x_{i,2}-xT_{i,2})^2,
            1/d, 1/d^2] with d the inter-robot distance; terminal basis
    lam_i = [(x_{i,1}(T)-xT_{i,1})^2, (x_{i,2}(T)-xT_{i,2})^2].
    The proximity terms error out below the hard distance floor rather than
    clamping, so gradients are never silently distorted.
    """

    def __init__(self, player, target, n=4):
        self.player = player
        self.target = np.asarray(target, dtype=float)
        self.n = n
        self.m = 2
        self.own = 2 * player  # own position slot offset
        self.other = 2 * (1 - player)
        self.n_mu = 6
        self.n_lam = 2
        self.M = 8
        self.control_weight_idx = (0, 1)

    def _delta(self, x):
        d_vec = x[self.own:self.own + 2] - x[self.other:self.other + 2]
        d = float(np.linalg.norm(d_vec))
        if not np.isfinite(d) or d < DIST_FLOOR:
            raise NonFinite(
                f"robot distance {d:.3e} below floor {DIST_FLOOR}; proximity "
                "terms are singular")
        return d_vec, d

    def mu(self, x, ui):
        d_vec, d = self._delta(x)
        e = x[self.own:self.own + 2] - self.target
        return np.array([ui[0] ** 2, ui[1] ** 2, e[0] ** 2, e[1] ** 2,
                         1.0 / d, 1.0 / d ** 2])

    def dmu_dx(self, x, ui):
        d_vec, d = self._delta(x)
        e = x[self.own:self.own + 2] - self.target
        out = np.zeros((6, self.n))
        out[2, self.own] = 2.0 * e[0]
        out[3, self.own + 1] = 2.0 * e[1]
        for c in range(2):
            out[4, self.own + c] = -d_vec[c] / d ** 3
            out[4, self.other + c] = d_vec[c] / d ** 3
            out[5, self.own + c] = -2.0 * d_vec[c] / d ** 4
            out[5, self.other + c] = 2.0 * d_vec[c] / d ** 4
        return out

    def dmu_du(self, x, ui):
        out = np.zeros((6, 2))
        out[0, 0] = 2.0 * ui[0]
        out[1, 1] = 2.0 * ui[1]
        return out

    def lam(self, x):
        e = x[self.own:self.own + 2] - self.target
        return e ** 2

    def dlam_dx(self, x):
        out = np.zeros((2, self.n))
        e = x[self.own:self.own + 2] - self.target
        out[0, self.own] = 2.0 * e[0]
        out[1, self.own + 1] = 2.0 * e[1]
        return out

    def d2lam_dx2(self, x):
        out = np.zeros((2, self.n, self.n))
        out[0, self.own, self.own] = 2.0
        out[1, self.own + 1, self.own + 1] = 2.0
        return out


# ---------------------------------------------------------------------------
# parameter vectors and trajectories
# ---------------------------------------------------------------------------

@dataclass
class ParameterVector:
    """Per-player cost weights theta_i = [eta_i; zeta_i]."""

    players: list

    def __post_init__(self):
        self.players = [np.asarray(p, dtype=float).ravel() for p in self.players]
        for i, p in enumerate(self.players):
            if not np.all(np.isfinite(p)):
                raise ValueError(f"non-finite entries in theta_{i+1}")

    @property
    def stacked(self) -> np.ndarray:
        return np.concatenate(self.players)

    def __getitem__(self, i) -> np.ndarray:
        return self.players[i]

    def copy(self) -> "ParameterVector":
        return ParameterVector([p.copy() for p in self.players])


@dataclass
class Trajectory:
    """Grid-aligned state and stacked control samples."""

    grid: TimeGrid
    states: np.ndarray  # (steps+1, n)
    controls: np.ndarray  # (steps+1, sum m_i)

    def __post_init__(self):
        self.states = np.ascontiguousarray(self.states, dtype=float)
        self.controls = np.ascontiguousarray(self.controls, dtype=float)
        want = self.grid.steps + 1
        if self.states.shape[0] != want or self.controls.shape[0] != want:
            raise ValueError(
                f"expected {want} samples, got states {self.states.shape[0]} / "
                f"controls {self.controls.shape[0]}")

    def resampled(self, grid: TimeGrid) -> "Trajectory":
        if grid == self.grid:
            return self
        ts = grid.times()
        return Trajectory(grid,
                          interp_linear_many(self.grid, self.states, ts),
                          interp_linear_many(self.grid, self.controls, ts))

    def at_times(self, ts):
        return (interp_linear_many(self.grid, self.states, ts),
                interp_linear_many(self.grid, self.controls, ts))


@dataclass
class CostateTrajectory:
    grid: TimeGrid
    psis: np.ndarray  # (steps+1, N*n) stacked player costates

    def player(self, i, n):
        return self.psis[:, i * n:(i + 1) * n]


@dataclass
class GameDefinition:
    """Dynamics + per-player bases + horizon, initial state and solver grid."""

    dynamics: LinearDynamics
    bases: list
    x0: np.ndarray
    grid: TimeGrid
    family: str  # kernel dispatch tag: "lti" or "collision"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float).ravel()
        if self.x0.size != self.dynamics.n:
            raise ValueError("x0 dimension mismatch")
        if len(self.bases) != self.dynamics.N:
            raise ValueError("one basis per player required")

    @property
    def n(self):
        return self.dynamics.n

    @property
    def N(self):
        return self.dynamics.N

    @property
    def m(self):
        return self.dynamics.m

    @property
    def mtot(self):
        return int(sum(self.dynamics.m))

    @property
    def T(self):
        return self.grid.T

    @property
    def M(self):
        return tuple(b.M for b in self.bases)

    def control_slice(self, i):
        off = self.dynamics.m_offsets
        return slice(int(off[i]), int(off[i + 1]))

    def validate_theta(self, theta: ParameterVector):
        if len(theta.players) != self.N:
            raise ValueError("theta player count mismatch")
        for i, b in enumerate(self.bases):
            if theta[i].size != b.M:
                raise ValueError(
                    f"theta_{i+1} has {theta[i].size} entries, basis needs {b.M}")

    def control_weights_positive(self, theta: ParameterVector) -> bool:
        for i, b in enumerate(self.bases):
            if np.any(theta[i][list(b.control_weight_idx)] <= 0.0):
                return False
        return True


# ---------------------------------------------------------------------------
# feature evaluation (terminal block folded into the integrand)
# ---------------------------------------------------------------------------

def phi(game: GameDefinition, i: int, x, u) -> np.ndarray:
    b = game.bases[i]
    ui = u[game.control_slice(i)]
    top = b.mu(x, ui)
    if b.n_lam == 0:
        return top
    fx = game.dynamics.f(x, u)
    return np.concatenate([top, b.dlam_dx(x) @ fx])


def dphi_dx(game: GameDefinition, i: int, x, u) -> np.ndarray:
    b = game.bases[i]
    ui = u[game.control_slice(i)]
    top = b.dmu_dx(x, ui)
    if b.n_lam == 0:
        return top
    fx = game.dynamics.f(x, u)
    bottom = (b.d2lam_dx2(x) @ fx) + b.dlam_dx(x) @ game.dynamics.fx_jac(x)
    return np.vstack([top, bottom])


def dphi_du(game: GameDefinition, i: int, x, u, wrt: int | None = None) -> np.ndarray:
    """Derivative of phi_i w.r.t. player ``wrt``'s control (default own)."""
    b = game.bases[i]
    if wrt is None:
        wrt = i
    ui = u[game.control_slice(i)]
    top = b.dmu_du(x, ui) if wrt == i else np.zeros((b.n_mu, game.m[wrt]))
    if b.n_lam == 0:
        return top
    bottom = b.dlam_dx(x) @ game.dynamics.fu_jac(wrt, x)
    return np.vstack([top, bottom])


def eval_hamiltonian_grads(game: GameDefinition, theta: ParameterVector,
                           x, u, psi_i, player: int):
    """Gradients of H_i = theta_i . phi_i + psi_i . f w.r.t. u_i and x."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    psi_i = np.asarray(psi_i, dtype=float)
    grad_u = dphi_du(game, player, x, u).T @ theta[player] \
        + game.dynamics.fu_jac(player, x).T @ psi_i
    grad_x = dphi_dx(game, player, x, u).T @ theta[player] \
        + game.dynamics.fx_jac(x).T @ psi_i
    if not (np.all(np.isfinite(grad_u)) and np.all(np.isfinite(grad_x))):
        raise NonFinite("non-finite Hamiltonian gradient")
    return grad_u, grad_x


def eliminate_controls(game: GameDefinition, theta: ParameterVector, x, psis) -> np.ndarray:
    """Solve the per-player stationarity conditions for the controls.

    grad_{u_i} H_i is affine in u_i (running costs are quadratic in u_i and
    the terminal block is linear), so each player reduces to an m_i x m_i
    linear solve. ``psis``: (N, n) array of player costates.
    """
    x = np.asarray(x, dtype=float)
    u = np.zeros(game.mtot)
    out = np.empty(game.mtot)
    for i in range(game.N):
        sl = game.control_slice(i)
        c = dphi_du(game, i, x, u).T @ theta[i] \
            + game.dynamics.fu_jac(i, x).T @ psis[i]
        mi = game.m[i]
        K = np.empty((mi, mi))
        for j in range(mi):
            uj = np.zeros(game.mtot)
            uj[sl.start + j] = 1.0
            K[:, j] = dphi_du(game, i, x, uj).T @ theta[i] \
                + game.dynamics.fu_jac(i, x).T @ psis[i] - c
        out[sl] = solve_linear(K, -c)
    return out


def coupled_rhs(game: GameDefinition, theta: ParameterVector, x, psis):
    """Time derivative of (x, psi_1..psi_N) along the equilibrium conditions.

    Controls are eliminated stationarily at every evaluation. This generic
    path backs custom games and cross-checks the family kernels.
    """
    u = eliminate_controls(game, theta, x, psis)
    dx = game.dynamics.f(x, u)
    fxT = game.dynamics.fx_jac(x).T
    dpsis = np.empty_like(psis)
    for i in range(game.N):
        dpsis[i] = -(dphi_dx(game, i, x, u).T @ theta[i] + fxT @ psis[i])
    return u, dx, dpsis


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _default_steps(T: float) -> int:
    # 100 Hz solver grid; twice the 50 Hz recording rate of the study data
    return max(2, int(round(T * 100)))


def make_lti_game(A, Bs, state_masks, x0, T, steps=None) -> GameDefinition:
    """Generic LTI game with per-coordinate quadratic running costs.

    ``state_masks[i]`` lists the state coordinates whose squares appear in
    player i's running basis (after that player's control squares).
    """
    dyn = LinearDynamics(A, Bs)
    bases = [QuadraticBasis(dyn.n, dyn.m[i], state_masks[i]) for i in range(dyn.N)]
    steps = _default_steps(T) if steps is None else steps
    meta = {"builder": "lti", "A": np.asarray(A, float).tolist(),
            "Bs": [np.asarray(B, float).tolist() for B in Bs],
            "state_masks": [list(mk) for mk in state_masks],
            "x0": np.asarray(x0, float).tolist(), "T": float(T), "steps": int(steps)}
    return GameDefinition(dyn, bases, x0, TimeGrid(0.0, T, steps), "lti", meta)


def make_double_integrator(T: float = 6.0, x0=(1.0, -1.0),
                           basis_variant: str = "full", steps=None) -> GameDefinition:
    """Single-player double integrator.

    Full variant: phi = [u^2, x1^2, x2^2]; reduced variant drops the x1^2
    term (phi = [u^2, x2^2]), the deliberately misspecified basis set.
    """
    if basis_variant == "full":
        mask = (0, 1)
    elif basis_variant == "reduced":
        mask = (1,)
    else:
        raise ValueError(f"unknown basis_variant {basis_variant!r}")
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    game = make_lti_game(A, [B], [mask], x0, T, steps)
    game.meta = {"builder": "double_integrator", "T": float(T),
                 "x0": np.asarray(x0, float).tolist(),
                 "basis_variant": basis_variant, "steps": game.grid.steps}
    return game


def make_collision_game(T: float = 5.0,
                        x0=(-1.0, -0.5, 1.0, 0.0),
                        x_T=(1.0, 1.0, -1.0, 0.0), steps=None) -> GameDefinition:
    """Two-robot planar collision-avoidance game (single-integrator robots)."""
    x0 = np.asarray(x0, dtype=float)
    x_T = np.asarray(x_T, dtype=float)
    if x0.shape != (4,) or x_T.shape != (4,):
        raise ValueError("x0 and x_T must be 4-vectors (two planar robots)")
    if np.linalg.norm(x0[:2] - x0[2:]) < DIST_FLOOR:
        raise DegenerateGeometry("robots start closer than the distance floor")
    for i in range(2):
        if np.linalg.norm(x0[2 * i:2 * i + 2] - x_T[2 * i:2 * i + 2]) == 0.0:
            raise DegenerateGeometry(f"robot {i+1} starts on its target")
    A = np.zeros((4, 4))
    B1 = np.zeros((4, 2))
    B1[0, 0] = B1[1, 1] = 1.0
    B2 = np.zeros((4, 2))
    B2[2, 0] = B2[3, 1] = 1.0
    dyn = LinearDynamics(A, [B1, B2])
    bases = [CollisionBasis(0, x_T[0:2]), CollisionBasis(1, x_T[2:4])]
    steps = _default_steps(T) if steps is None else steps
    meta = {"builder": "collision", "T": float(T), "x0": x0.tolist(),
            "x_T": x_T.tolist(), "steps": int(steps)}
    return GameDefinition(dyn, bases, x0, TimeGrid(0.0, T, steps), "collision", meta)
