"""Small dense convex QP under index pins and lower bounds: active-set on the
bounds, with each equality-pinned subproblem solved by direct reduction to
the free coordinates.

Problems here are tiny (dimension <= M_i + n ~ 12, a handful of bounds).
The value matrices are positive semidefinite with genuine null directions
(the residual quadratic form annihilates every optimality-consistent
parameter ray), so the reduced systems are solved in the minimum-norm
least-squares sense; that pins down a deterministic, tame representative of
the minimizing set instead of letting rounding noise pick an arbitrary point
on it.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleConstraints, UnboundedOrDegenerate

FEAS_TOL = 1e-9
LSTSQ_RCOND = 1e-10


@dataclass
class QpResult:
    alpha: np.ndarray
    value: float
    active_bounds: tuple
    iterations: int
    kkt_residual: float
    multipliers: dict


def _solve_pinned(P, fixed: dict):
    """Minimize alpha^T P alpha with alpha[j] = v for (j, v) in fixed.

    Reduction to the free block: P_ff a_f = -P_fc a_c, solved minimum-norm.
    Returns (alpha, multipliers dict for the fixed coordinates).
    """
    d = P.shape[0]
    fixed_idx = sorted(fixed)
    free_idx = [j for j in range(d) if j not in fixed]
    alpha = np.zeros(d)
    for j in fixed_idx:
        alpha[j] = fixed[j]
    if free_idx:
        Pff = P[np.ix_(free_idx, free_idx)]
        rhs = -P[np.ix_(free_idx, fixed_idx)] @ alpha[fixed_idx]
        sol, *_ = np.linalg.lstsq(Pff, rhs, rcond=LSTSQ_RCOND)
        alpha[free_idx] = sol
    grad = 2.0 * P @ alpha
    mults = {j: -grad[j] for j in fixed_idx}
    kkt = float(np.max(np.abs(grad[free_idx]), initial=0.0))
    return alpha, mults, kkt


def solve_box_qp(P: np.ndarray, pins: dict, lower: dict) -> QpResult:
    """Minimize alpha^T P alpha subject to alpha[j] = v (pins) and
    alpha[j] >= b (lower bounds). P must be positive semidefinite."""
    P = np.asarray(P, dtype=float)
    for j, v in pins.items():
        if j in lower and v < lower[j] - FEAS_TOL:
            raise InfeasibleConstraints(f"pin alpha[{j}]={v} violates bound >= {lower[j]}")
    bound_idx = [j for j in sorted(lower) if j not in pins]
    max_iter = max(1, 2 * len(bound_idx)) + 1

    active: list = []
    for it in range(1, max_iter + 1):
        fixed = dict(pins)
        for j in active:
            fixed[j] = lower[j]
        alpha, mults, kkt = _solve_pinned(P, fixed)
        scale = 1.0 + float(np.max(np.abs(alpha), initial=0.0))
        violated = [(lower[j] - alpha[j], j) for j in bound_idx
                    if j not in active and alpha[j] < lower[j] - FEAS_TOL * scale]
        if violated:
            active.append(max(violated)[1])
            continue
        # lower bound alpha_j >= b carries inequality multiplier -nu_j, which
        # must be nonnegative at the optimum; release the worst violator
        release = [(mults[j], j) for j in active if mults[j] > FEAS_TOL]
        if release:
            active.remove(max(release)[1])
            continue
        return QpResult(alpha, float(alpha @ P @ alpha), tuple(active), it, kkt,
                        mults)
    raise UnboundedOrDegenerate(
        f"active-set iteration cap {max_iter} reached without optimality")


def brute_force_box_qp(P: np.ndarray, pins: dict, lower: dict) -> QpResult:
    """Exact oracle: enumerate every active subset of the bounds, solve the
    equality-constrained problem, and keep the best feasible point. Only for
    tests (exponential in the number of bounds)."""
    from itertools import combinations

    P = np.asarray(P, dtype=float)
    bound_idx = [j for j in sorted(lower) if j not in pins]
    best = None
    for k in range(len(bound_idx) + 1):
        for combo in combinations(bound_idx, k):
            fixed = dict(pins)
            for j in combo:
                fixed[j] = lower[j]
            alpha, mults, kkt = _solve_pinned(P, fixed)
            scale = 1.0 + float(np.max(np.abs(alpha), initial=0.0))
            if any(alpha[j] < lower[j] - 1e-8 * scale for j in bound_idx):
                continue
            val = float(alpha @ P @ alpha)
            if best is None or val < best.value:
                best = QpResult(alpha, val, tuple(combo), 0, kkt, mults)
    if best is None:
        raise UnboundedOrDegenerate("no feasible active set found")
    return best
