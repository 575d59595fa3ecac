import numpy as np
import pytest

from idgames.experiments import COLLISION_THETA_STAR, DI_THETA_STAR
from idgames.games import (ParameterVector, make_collision_game,
                           make_double_integrator, make_lti_game)


@pytest.fixture(scope="session")
def di_game():
    return make_double_integrator()


@pytest.fixture(scope="session")
def di_theta():
    return DI_THETA_STAR


@pytest.fixture(scope="session")
def collision_game():
    return make_collision_game()


@pytest.fixture(scope="session")
def collision_theta():
    return COLLISION_THETA_STAR


def random_lti_game(rng, n_max=4, T=4.0, steps=400):
    """Well-posed random single-player LTI instance with full quadratic costs."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, 3))
    A = rng.uniform(-1.0, 1.0, (n, n))
    B = rng.uniform(-1.0, 1.0, (n, m))
    x0 = rng.uniform(-1.0, 1.0, n)
    theta = ParameterVector([np.concatenate([rng.uniform(0.5, 2.0, m),
                                             rng.uniform(0.1, 2.0, n)])])
    game = make_lti_game(A, [B], [tuple(range(n))], x0, T, steps)
    return game, theta


@pytest.fixture(scope="session")
def di_gt(di_game, di_theta):
    """Exact double-integrator GT, sampled at half-grid resolution."""
    from idgames.dataio import synthesize_gt
    return synthesize_gt(di_game, di_theta, substeps=2)


@pytest.fixture(scope="session")
def collision_gt(collision_game, collision_theta):
    from idgames.dataio import synthesize_gt
    return synthesize_gt(collision_game, collision_theta, substeps=2)
