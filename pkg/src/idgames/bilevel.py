"""Direct identification: derivative-free pattern search over the cost
weights, with a full multi-start equilibrium solve inside every objective
evaluation.

Coordinate polls go in fixed index order (+mesh then -mesh), the first
improving poll is accepted, the mesh expands on success and contracts on a
full poll failure. Pinned coordinates are never polled and bound-violating
polls are clipped, so every evaluated point is feasible. Equilibrium solver
failures count as an infinite objective, which routes the search around
parameter regions without a computable equilibrium.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleStart, NoConvergence
from .games import GameDefinition, ParameterVector, Trajectory
from .metrics import trajectory_error_of
from .residual import ConstraintSpec, ResidualSolution


@dataclass
class PatternSearchConfig:
    theta0: ParameterVector
    constraints: ConstraintSpec | None = None
    mesh0: np.ndarray | None = None  # per-coordinate; default 0.25*max(|theta0|,1)
    expansion: float = 2.0
    contraction: float = 0.5
    max_iter: int = 200
    mesh_tol: float = 1e-3
    parallel_poll: bool = False
    capped_mesh: bool = True   # expansion never grows the mesh beyond mesh0
    complete_poll: bool = True  # evaluate every poll, accept the best improver
    sufficient_decrease: float = 1e-4  # relative improvement required to accept
    pattern_moves: bool = True  # Hooke-Jeeves extrapolation along accepted moves

    def __post_init__(self):
        if not (self.expansion > 1.0 > self.contraction > 0.0):
            raise ValueError("need expansion > 1 > contraction > 0")
        if self.max_iter < 1:
            raise ValueError("need max_iter >= 1")


@dataclass
class TraceEntry:
    iteration: int
    theta: np.ndarray  # stacked
    objective: float
    mesh_max: float
    accepted: bool


@dataclass
class BilevelSolution:
    theta: ParameterVector
    objective: float
    trace: list
    evaluations: int
    inner_converged: int
    inner_failed: int
    wall_seconds: float
    warm_started: bool = False
    extras: dict = field(default_factory=dict)


class _Split:
    """Stacked-vector <-> per-player views plus constraint bookkeeping."""

    def __init__(self, theta0: ParameterVector, constraints: ConstraintSpec | None):
        self.sizes = [p.size for p in theta0.players]
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)]).astype(int)
        self.dim = int(self.offsets[-1])
        self.pins = {}
        self.lower = {}
        if constraints is not None:
            for i, pc in enumerate(constraints.players):
                for j, v in pc.pins:
                    if j < self.sizes[i]:
                        self.pins[self.offsets[i] + j] = v
                for j, b in pc.lower_bounds:
                    if j < self.sizes[i]:
                        self.lower[self.offsets[i] + j] = b
        self.free = [j for j in range(self.dim) if j not in self.pins]

    def to_players(self, stacked) -> ParameterVector:
        return ParameterVector([stacked[self.offsets[i]:self.offsets[i + 1]].copy()
                                for i in range(len(self.sizes))])

    def clip(self, stacked):
        out = stacked.copy()
        for j, v in self.pins.items():
            out[j] = v
        for j, b in self.lower.items():
            if out[j] < b:
                out[j] = b
        return out

    def feasible(self, stacked) -> bool:
        return (all(stacked[j] == v for j, v in self.pins.items())
                and all(stacked[j] >= b for j, b in self.lower.items()))


def _default_objective(game: GameDefinition, gt: Trajectory):
    def objective(theta: ParameterVector) -> float:
        try:
            return trajectory_error_of(game, theta, gt).total
        except NoConvergence:
            return np.inf
    return objective


def pattern_search(game: GameDefinition, gt: Trajectory,
                   config: PatternSearchConfig, objective=None) -> BilevelSolution:
    """Generalized pattern search minimizing the trajectory error.

    ``objective`` may replace the inner equilibrium solve (test hook); it
    receives a ParameterVector and returns a float (inf for failures).
    """
    t_start = time.perf_counter()
    split = _Split(config.theta0, config.constraints)
    obj_fn = objective if objective is not None else _default_objective(game, gt)

    import threading

    stats = {"evals": 0, "converged": 0, "failed": 0}
    stats_lock = threading.Lock()
    cache: dict = {}

    def evaluate(stacked) -> float:
        key = stacked.tobytes()
        if key in cache:
            return cache[key]
        val = float(obj_fn(split.to_players(stacked)))
        with stats_lock:
            stats["evals"] += 1
            stats["converged" if np.isfinite(val) else "failed"] += 1
            cache[key] = val
        return val

    theta = split.clip(config.theta0.stacked)
    if not split.feasible(config.theta0.stacked):
        raise InfeasibleStart("initial theta violates pins or bounds")
    if config.mesh0 is None:
        mesh = 0.25 * np.maximum(np.abs(theta), 1.0)
    else:
        mesh = np.asarray(config.mesh0, dtype=float).copy()
        if mesh.size == 1:
            mesh = np.full(split.dim, float(mesh))
    mesh_cap = mesh.copy() if config.capped_mesh else None
    best = evaluate(theta)
    if not np.isfinite(best):
        raise InfeasibleStart("initial theta is not forward-solvable")

    trace = [TraceEntry(0, theta.copy(), best, float(np.max(mesh[split.free])), True)]
    pool = ThreadPoolExecutor(max_workers=8) if config.parallel_poll else None
    last_move = None  # displacement of the most recent accepted move
    try:
        for it in range(1, config.max_iter + 1):
            if float(np.max(mesh[split.free])) < config.mesh_tol:
                break
            sufficient = lambda val: val < best - config.sufficient_decrease * (1.0 + abs(best))
            # pattern move: ride the last accepted displacement as long as it
            # keeps paying, doubling the stride (classic Hooke-Jeeves
            # acceleration through curved valleys)
            if config.pattern_moves and last_move is not None:
                stride = last_move
                while np.isfinite(best):
                    cand = split.clip(theta + stride)
                    if np.array_equal(cand, theta):
                        break
                    val = evaluate(cand)
                    if not sufficient(val):
                        break
                    last_move = cand - theta
                    theta, best = cand, val
                    trace.append(TraceEntry(it, theta.copy(), best,
                                            float(np.max(mesh[split.free])), True))
                    stride = 2.0 * last_move
            candidates = []
            for j in split.free:
                for sgn in (1.0, -1.0):
                    cand = theta.copy()
                    cand[j] = cand[j] + sgn * mesh[j]
                    cand = split.clip(cand)
                    if not np.array_equal(cand, theta):
                        candidates.append(cand)
            if pool is not None:
                list(pool.map(evaluate, candidates))  # warm the cache in parallel
            # flat valleys (e.g. the insensitive terminal weights) produce
            # endless rounding-scale "improvements" that would block mesh
            # refinement forever; demand a sufficient decrease instead
            accept_below = best - config.sufficient_decrease * (1.0 + abs(best)) \
                if np.isfinite(best) else best
            accepted = False
            prev = theta
            if config.complete_poll and candidates:
                vals = [evaluate(c) for c in candidates]
                k = int(np.argmin(vals))
                if vals[k] < accept_below:
                    theta, best = candidates[k], vals[k]
                    accepted = True
            elif candidates:
                for cand in candidates:
                    val = evaluate(cand)
                    if val < accept_below:
                        theta, best = cand, val
                        accepted = True
                        break
            last_move = (theta - prev) if accepted else None
            if accepted:
                mesh = mesh * config.expansion
                if mesh_cap is not None:
                    mesh = np.minimum(mesh, mesh_cap)
                trace.append(TraceEntry(it, theta.copy(), best,
                                        float(np.max(mesh[split.free])), True))
            else:
                mesh = mesh * config.contraction
                trace.append(TraceEntry(it, theta.copy(), best,
                                        float(np.max(mesh[split.free])), False))
    finally:
        if pool is not None:
            pool.shutdown(wait=False)

    return BilevelSolution(split.to_players(theta), best, trace,
                           stats["evals"], stats["converged"], stats["failed"],
                           time.perf_counter() - t_start)


def refine_from_residual(game: GameDefinition, gt: Trajectory,
                         residual_solution: ResidualSolution,
                         config: PatternSearchConfig) -> BilevelSolution:
    """Pattern search warm-started at the residual minimizer (clipped into
    the feasible set)."""
    split = _Split(config.theta0, config.constraints)
    warm = split.clip(residual_solution.theta.stacked)
    cfg = PatternSearchConfig(split.to_players(warm), config.constraints,
                              config.mesh0, config.expansion, config.contraction,
                              config.max_iter, config.mesh_tol, config.parallel_poll)
    sol = pattern_search(game, gt, cfg)
    sol.warm_started = True
    return sol
