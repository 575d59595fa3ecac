"""Open-loop Nash equilibria of differential games and inverse identification
of the players' cost weights, by residual minimization (Riccati sweep + QP)
or bi-level pattern search."""

__version__ = "0.1.0"

from ._kernels import backend_name
from .games import (GameDefinition, ParameterVector, Trajectory,
                    make_collision_game, make_double_integrator, make_lti_game)
from .metrics import nsae, trajectory_error_of
from .residual import (ConstraintSpec, PlayerConstraints, residual_direct,
                       riccati_backward, solve_residual_qp,
                       diagnose_identifiability)
from .shooting import mirrored_guess, select_best_olne, solve_olne
from .bilevel import PatternSearchConfig, pattern_search, refine_from_residual
from .dataio import (NoiseSpec, RawRecording, differentiate_and_smooth,
                     detect_window, synthesize_gt)

__all__ = [
    "GameDefinition", "ParameterVector", "Trajectory", "ConstraintSpec",
    "PlayerConstraints", "NoiseSpec", "RawRecording", "PatternSearchConfig",
    "backend_name", "make_collision_game", "make_double_integrator",
    "make_lti_game", "nsae", "trajectory_error_of", "residual_direct",
    "riccati_backward", "solve_residual_qp", "diagnose_identifiability",
    "mirrored_guess", "select_best_olne", "solve_olne", "pattern_search",
    "refine_from_residual", "differentiate_and_smooth", "detect_window",
    "synthesize_gt",
]
