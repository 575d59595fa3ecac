"""Trajectory-error measures: normalized sum of absolute errors (NSAE)."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNormalizer, NoConvergence
from .games import GameDefinition, ParameterVector, Trajectory


@dataclass
class TrajectoryError:
    state_part: float
    control_part: float
    total: float
    K: int


def _nsae_block(gt_block, est_block, zero_normalizer):
    acc = 0.0
    for j in range(gt_block.shape[1]):
        norm = float(np.max(np.abs(gt_block[:, j])))
        if norm == 0.0:
            if zero_normalizer == "error":
                raise DegenerateNormalizer(f"dimension {j} of the GT is identically zero")
            norm = 1.0  # absolute instead of relative error on dead channels
        acc += float(np.sum(np.abs(gt_block[:, j] - est_block[:, j]))) / norm
    return acc


def nsae(gt: Trajectory, est: Trajectory, zero_normalizer: str = "unit") -> TrajectoryError:
    """Normalized sum of absolute errors between two grid-aligned trajectories.

    Every dimension is normalized by the max absolute GT sample; state and
    control sums are reported separately and totaled. Trajectories must share
    the grid (resample beforehand).
    """
    if gt.grid != est.grid:
        raise ValueError("trajectories must share the same grid; resample first")
    if gt.states.shape != est.states.shape or gt.controls.shape != est.controls.shape:
        raise ValueError("trajectory dimensions differ")
    dx = _nsae_block(gt.states, est.states, zero_normalizer)
    du = _nsae_block(gt.controls, est.controls, zero_normalizer)
    return TrajectoryError(dx, du, dx + du, gt.states.shape[0])


def trajectory_error_of(game: GameDefinition, theta: ParameterVector,
                        gt: Trajectory) -> TrajectoryError:
    """NSAE of the best multi-start equilibrium at theta against gt.

    Raises NoConvergence when no shooting start converges (the absent-value
    case that sweep drivers record as missing).
    """
    from .shooting import select_best_olne, solve_olne
    if not game.control_weights_positive(theta):
        raise NoConvergence("nonpositive control weight: theta is outside the "
                            "forward-solvable model class")
    gt_local = gt.resampled(game.grid)
    sols = solve_olne(game, theta)
    if not any(s.converged for s in sols):
        raise NoConvergence("no shooting start converged for this theta")
    best = select_best_olne(sols, gt_local)
    return nsae(gt_local, best.trajectory)
