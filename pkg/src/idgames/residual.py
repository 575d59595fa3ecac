"""Indirect identification from optimality-condition violations.

The residual of a candidate (theta_i, psi_i(0)) is the integral of squared
violations of control stationarity and costate dynamics along the observed
trajectory, minimized over the costate path. Dynamic programming turns that
path minimization into a backward matrix Riccati sweep whose terminal-value
matrix P_i(0) makes the residual an explicit quadratic form alpha^T P_i(0)
alpha with alpha_i = [theta_i; psi_i(0)] — that is the object the QP
minimizes. ``residual_direct`` evaluates the same quantity independently by
solving the inner path minimization as a linear two-point boundary-value
problem (Euler-Lagrange shooting), which is the module's central
cross-check.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InfeasibleConstraints, NonFinite, NonFiniteState
from .games import GameDefinition, ParameterVector, Trajectory, dphi_dx, dphi_du
from .numerics import sym_eig
from .qp import QpResult, solve_box_qp

EPS_RANK = 1e-6  # relative to the largest singular value


# ---------------------------------------------------------------------------
# constraints
# ---------------------------------------------------------------------------

@dataclass
class PlayerConstraints:
    """Equality pins and lower bounds on one player's alpha = [theta; psi0].

    Indices address the alpha vector; the usual constraints only touch the
    theta block (e.g. pin index 0 to 1.0, bound the terminal weights).
    """

    pins: list = field(default_factory=list)    # (index, value)
    lower_bounds: list = field(default_factory=list)  # (index, bound)

    def excludes_zero(self) -> bool:
        return (any(v != 0.0 for _, v in self.pins)
                or any(b > 0.0 for _, b in self.lower_bounds))


@dataclass
class ConstraintSpec:
    players: list  # PlayerConstraints per player

    def __post_init__(self):
        for i, pc in enumerate(self.players):
            if not pc.excludes_zero():
                raise InfeasibleConstraints(
                    f"player {i+1} constraints do not exclude alpha = 0")

    @staticmethod
    def pin_first(n_players: int, value: float = 1.0) -> "ConstraintSpec":
        return ConstraintSpec([PlayerConstraints(pins=[(0, value)])
                               for _ in range(n_players)])

    def with_lower_bounds(self, bounds) -> "ConstraintSpec":
        """New spec with additional per-player lower bounds
        (list per player of (index, bound))."""
        players = []
        for pc, extra in zip(self.players, bounds):
            players.append(PlayerConstraints(list(pc.pins),
                                             list(pc.lower_bounds) + list(extra)))
        return ConstraintSpec(players)


# ---------------------------------------------------------------------------
# coefficient tables along the observed trajectory
# ---------------------------------------------------------------------------

def coefficient_tables(game: GameDefinition, gt: Trajectory, player: int):
    """Half-grid samples of N_i^T = [dphi/dx^T df/dx^T] and
    D_i^T = [dphi/du_i^T df/du_i^T] along the (interpolated) observation."""
    grid = game.grid
    ts = grid.half_times()
    Xh, Uh = gt.at_times(ts)
    n, mi, M = game.n, game.m[player], game.bases[player].M
    MA = M + n
    K2 = ts.size
    NT = np.zeros((K2, n, MA))
    DT = np.zeros((K2, mi, MA))
    fxT = game.dynamics.fx_jac(game.x0).T  # constant for the built-in families
    fuT = game.dynamics.fu_jac(player, game.x0).T
    for s in range(K2):
        x, u = Xh[s], Uh[s]
        NT[s, :, :M] = dphi_dx(game, player, x, u).T
        NT[s, :, M:] = fxT
        DT[s, :, :M] = dphi_du(game, player, x, u).T
        DT[s, :, M:] = fuT
    return np.ascontiguousarray(NT), np.ascontiguousarray(DT)


# ---------------------------------------------------------------------------
# Riccati sweep
# ---------------------------------------------------------------------------

@dataclass
class RiccatiAssembly:
    """Backward-sweep output for one player along one observation."""

    player: int
    M: int
    n: int
    P: np.ndarray        # (steps+1, MA, MA), P[k] at t_k, P[steps] = 0
    P0: np.ndarray       # symmetrized P[0]
    NT: np.ndarray
    DT: np.ndarray
    grid: object

    @property
    def MA(self) -> int:
        return self.M + self.n

    def psd_projected(self) -> np.ndarray:
        """P0 with negative eigenvalue noise clipped to zero (the exact
        value matrix is PSD; integration noise is not)."""
        w, v = np.linalg.eigh(self.P0)
        return (v * np.maximum(w, 0.0)) @ v.T


def riccati_backward(game: GameDefinition, gt: Trajectory, player: int) -> RiccatiAssembly:
    """Integrate the residual-value Riccati equation backward from P(T) = 0
    along the observed trajectory."""
    NT, DT = coefficient_tables(game, gt, player)
    h, steps = game.grid.h, game.grid.steps
    status, P = _kernels.active.riccati_sweep(NT, DT, h, steps, game.bases[player].M)
    if status != -1:
        raise NonFiniteState(
            f"Riccati sweep blew up at t = {game.grid.t0 + status * h:.4f}",
            step=status, time=game.grid.t0 + status * h)
    P0 = np.ascontiguousarray(0.5 * (P[0] + P[0].T))
    return RiccatiAssembly(player, game.bases[player].M, game.n, P, P0, NT, DT, game.grid)


# ---------------------------------------------------------------------------
# direct evaluation (independent of the sweep)
# ---------------------------------------------------------------------------

def _el_tables(NT, DT, M, theta_i):
    """Coefficient tables of the inner path-minimization in y = [psi; w]:
    ydot = Mt y + rt, objective integrand y^T Qt y + 2 ql.y + qc."""
    K2, n = NT.shape[0], NT.shape[1]
    A = NT[:, :, M:]              # df/dx^T
    b = NT[:, :, :M] @ theta_i    # dphi/dx^T theta
    E = DT[:, :, M:]              # df/du^T
    c = DT[:, :, :M] @ theta_i    # dphi/du^T theta
    d = 2 * n
    Mt = np.zeros((K2, d, d))
    Mt[:, :n, :n] = -A
    Mt[:, :n, n:] = np.eye(n)
    EtE = np.einsum("sqa,sqb->sab", E, E)
    Mt[:, n:, :n] = EtE
    Mt[:, n:, n:] = np.transpose(A, (0, 2, 1))
    rt = np.zeros((K2, d))
    rt[:, :n] = -b
    Etc = np.einsum("sqa,sq->sa", E, c)
    rt[:, n:] = Etc
    Qt = np.zeros((K2, d, d))
    Qt[:, :n, :n] = EtE
    Qt[:, n:, n:] = np.eye(n)
    ql = np.zeros((K2, d))
    ql[:, :n] = Etc
    qc = np.einsum("sq,sq->s", c, c)
    return (np.ascontiguousarray(Mt), np.ascontiguousarray(rt),
            np.ascontiguousarray(Qt), np.ascontiguousarray(ql),
            np.ascontiguousarray(qc))


def residual_player_direct(game: GameDefinition, gt: Trajectory, player: int,
                           theta_i: np.ndarray, psi0_i: np.ndarray,
                           tables=None) -> float:
    """Residual of one player at (theta_i, psi_i(0)): the costate-path
    minimization solved as a linear TPBVP by shooting on the Euler-Lagrange
    system, with the integrand accumulated through the same RK4 pass."""
    if tables is None:
        NT, DT = coefficient_tables(game, gt, player)
    else:
        NT, DT = tables
    M = game.bases[player].M
    n = game.n
    Mt, rt, Qt, ql, qc = _el_tables(NT, DT, M, np.asarray(theta_i, float))
    h, steps = game.grid.h, game.grid.steps
    kern = _kernels.active
    zeros_r = np.zeros_like(rt)
    zeros_Q = np.zeros_like(Qt)
    zeros_l = np.zeros_like(ql)
    zeros_c = np.zeros_like(qc)

    y0 = np.zeros(2 * n)
    y0[:n] = psi0_i
    status, Y, _ = kern.linear_ode_quad(Mt, rt, zeros_Q, zeros_l, zeros_c, y0, h, steps)
    if status != -1:
        raise NonFinite("Euler-Lagrange propagation diverged")
    w_aff = Y[-1, n:]
    L = np.empty((n, n))
    for j in range(n):
        e = np.zeros(2 * n)
        e[n + j] = 1.0
        status, Yh, _ = kern.linear_ode_quad(Mt, zeros_r, zeros_Q, zeros_l,
                                             zeros_c, e, h, steps)
        if status != -1:
            raise NonFinite("Euler-Lagrange propagation diverged")
        L[:, j] = Yh[-1, n:]
    w0 = np.linalg.solve(L, -w_aff)
    y0[n:] = w0
    status, _, q = kern.linear_ode_quad(Mt, rt, Qt, ql, qc, y0, h, steps)
    if status != -1:
        raise NonFinite("Euler-Lagrange propagation diverged")
    return float(q)


def residual_direct(game: GameDefinition, gt: Trajectory,
                    theta: ParameterVector, psi0) -> float:
    """Total residual error at (theta, psi(0)), summed over players.

    ``psi0``: stacked (N*n,) initial costates. Serves as the independent
    oracle for the quadratic form alpha^T P(0) alpha of the Riccati path.
    """
    game.validate_theta(theta)
    psi0 = np.asarray(psi0, dtype=float).ravel()
    total = 0.0
    n = game.n
    for i in range(game.N):
        total += residual_player_direct(game, gt, i, theta[i],
                                        psi0[i * n:(i + 1) * n])
    return total


# ---------------------------------------------------------------------------
# residual QP
# ---------------------------------------------------------------------------

@dataclass
class ResidualSolution:
    alphas: list          # per-player minimizers [theta_i; psi_i(0)]
    deltas: list          # per-player residual values
    theta: ParameterVector
    psi0: np.ndarray      # stacked psi(0)
    delta_R: float
    qp_results: list

    def summary(self) -> dict:
        return {"delta_R": self.delta_R,
                "delta_R_per_player": list(self.deltas),
                "theta": [p.tolist() for p in self.theta.players],
                "psi0": self.psi0.tolist()}


def solve_residual_qp(assemblies, constraints: ConstraintSpec) -> ResidualSolution:
    """Per-player convex QP min alpha^T P_i(0) alpha under the constraint
    spec; players are independent and solved separately."""
    if len(constraints.players) != len(assemblies):
        raise InfeasibleConstraints("constraint spec does not match player count")
    alphas, deltas, thetas, psi0s, results = [], [], [], [], []
    for asm, pc in zip(assemblies, constraints.players):
        MA = asm.MA
        for j, _ in list(pc.pins) + list(pc.lower_bounds):
            if not 0 <= j < MA:
                raise InfeasibleConstraints(f"constraint index {j} out of range (MA={MA})")
        res: QpResult = solve_box_qp(asm.psd_projected(), dict(pc.pins),
                                     dict(pc.lower_bounds))
        alphas.append(res.alpha)
        deltas.append(res.value)
        thetas.append(res.alpha[:asm.M])
        psi0s.append(res.alpha[asm.M:])
        results.append(res)
    return ResidualSolution(alphas, deltas, ParameterVector(thetas),
                            np.concatenate(psi0s), float(sum(deltas)), results)


# ---------------------------------------------------------------------------
# identifiability diagnostics
# ---------------------------------------------------------------------------

@dataclass
class IdentifiabilityDiagnostics:
    player: int
    P_bar: np.ndarray
    p_bar: np.ndarray
    P_bar_pinv: np.ndarray
    singular_values: np.ndarray
    U: np.ndarray
    rank: int
    U11: np.ndarray
    U12: np.ndarray
    U21: np.ndarray
    U22: np.ndarray
    full_rank: bool
    block_zero: bool

    @property
    def condition_met(self) -> bool:
        return self.full_rank or self.block_zero


def diagnose_identifiability(assembly: RiccatiAssembly) -> IdentifiabilityDiagnostics:
    """Rank/block structure of P_i(0) minus its first row and column, per the
    unique-up-to-scale recovery conditions."""
    P0 = assembly.P0
    P_bar = P0[1:, 1:]
    p_bar = P0[1:, 0]
    w, U = sym_eig(P_bar)
    svals = np.abs(w)
    order = np.argsort(svals)[::-1]
    svals = svals[order]
    U = U[:, order]
    smax = svals[0] if svals.size and svals[0] > 0.0 else 1.0
    rank = int(np.sum(svals > EPS_RANK * smax))
    Mi = assembly.M
    U11, U12 = U[:Mi - 1, :rank], U[:Mi - 1, rank:]
    U21, U22 = U[Mi - 1:, :rank], U[Mi - 1:, rank:]
    full_rank = rank == assembly.MA - 1
    block_zero = float(np.max(np.abs(U12), initial=0.0)) <= EPS_RANK * smax
    return IdentifiabilityDiagnostics(
        assembly.player, P_bar, p_bar, np.linalg.pinv(P_bar, rcond=EPS_RANK),
        svals, U, rank, U11, U12, U21, U22, full_rank, block_zero)
