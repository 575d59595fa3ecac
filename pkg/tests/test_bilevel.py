import numpy as np
import pytest

from idgames.bilevel import PatternSearchConfig, pattern_search, refine_from_residual
from idgames.errors import InfeasibleStart
from idgames.games import ParameterVector
from idgames.metrics import trajectory_error_of
from idgames.residual import ConstraintSpec, PlayerConstraints


def quadratic_hook(center):
    center = np.asarray(center, dtype=float)

    def objective(theta: ParameterVector) -> float:
        v = theta.stacked - center
        return float(v @ v)
    return objective


class TestPatternSearchCore:
    def test_converges_on_quadratic_surrogate(self, di_game):
        theta0 = ParameterVector([[1.0, 0.5, 3.0]])
        cfg = PatternSearchConfig(theta0, mesh_tol=1e-5, max_iter=400)
        sol = pattern_search(di_game, None, cfg,
                             objective=quadratic_hook([1.2, 2.0, -0.5]))
        assert np.max(np.abs(sol.theta.stacked - [1.2, 2.0, -0.5])) < 1e-3

    def test_respects_pins_and_bounds(self, di_game):
        cons = ConstraintSpec([PlayerConstraints(pins=[(0, 1.0)],
                                                 lower_bounds=[(2, 0.5)])])
        cfg = PatternSearchConfig(ParameterVector([[1.0, 1.0, 1.0]]),
                                  constraints=cons, mesh_tol=1e-5, max_iter=300)
        sol = pattern_search(di_game, None, cfg,
                             objective=quadratic_hook([0.0, 2.0, -1.0]))
        assert sol.theta[0][0] == 1.0            # pinned exactly
        assert sol.theta[0][2] >= 0.5 - 1e-12    # clipped at the bound
        assert sol.theta[0][2] == pytest.approx(0.5, abs=1e-3)

    def test_monotone_accepted_trace(self, di_game):
        cfg = PatternSearchConfig(ParameterVector([[5.0, 5.0, 5.0]]),
                                  mesh_tol=1e-4, max_iter=200)
        sol = pattern_search(di_game, None, cfg,
                             objective=quadratic_hook([1.0, -1.0, 0.0]))
        accepted = [e.objective for e in sol.trace if e.accepted]
        assert all(a >= b for a, b in zip(accepted, accepted[1:]))

    def test_deterministic_trace(self, di_game):
        def run():
            cfg = PatternSearchConfig(ParameterVector([[2.0, 2.0, 2.0]]),
                                      mesh_tol=1e-4, max_iter=100)
            return pattern_search(di_game, None, cfg,
                                  objective=quadratic_hook([0.3, 0.7, 1.9]))
        a, b = run(), run()
        assert len(a.trace) == len(b.trace)
        for ea, eb in zip(a.trace, b.trace):
            assert np.array_equal(ea.theta, eb.theta)
            assert ea.objective == eb.objective

    def test_parallel_poll_matches_sequential(self, di_game):
        mk = lambda par: PatternSearchConfig(ParameterVector([[2.0, 2.0, 2.0]]),
                                             mesh_tol=1e-4, max_iter=80,
                                             parallel_poll=par)
        a = pattern_search(di_game, None, mk(False),
                           objective=quadratic_hook([0.3, 0.7, 1.9]))
        b = pattern_search(di_game, None, mk(True),
                           objective=quadratic_hook([0.3, 0.7, 1.9]))
        assert np.array_equal(a.theta.stacked, b.theta.stacked)
        assert a.objective == b.objective

    def test_infeasible_start_raises(self, di_game):
        cons = ConstraintSpec([PlayerConstraints(pins=[(0, 1.0)])])
        cfg = PatternSearchConfig(ParameterVector([[2.0, 1.0, 1.0]]),
                                  constraints=cons)
        with pytest.raises(InfeasibleStart):
            pattern_search(di_game, None, cfg, objective=quadratic_hook([0, 0, 0]))

    def test_inner_failures_counted_as_infinite(self, di_game):
        calls = {"n": 0}

        def sometimes_fails(theta):
            calls["n"] += 1
            if theta.stacked[1] > 2.5:
                return np.inf
            return float((theta.stacked[1] - 2.0) ** 2)

        cfg = PatternSearchConfig(ParameterVector([[1.0, 2.4, 1.0]]),
                                  mesh_tol=1e-4, max_iter=200)
        sol = pattern_search(di_game, None, cfg, objective=sometimes_fails)
        assert sol.inner_failed > 0
        assert sol.theta[0][1] == pytest.approx(2.0, abs=1e-3)


class TestOnDoubleIntegrator:
    def test_noisy_free_theta2_recovers_band(self, di_game, di_theta):
        # dense 1-D grid oracle fixes the true minimizer band for this seed
        from idgames.dataio import NoiseSpec, synthesize_gt
        gt = synthesize_gt(di_game, di_theta, NoiseSpec(0.1, 0.1, 2024))
        dense = np.arange(1.25, 2.80, 0.05)
        dense_vals = [trajectory_error_of(
            di_game, ParameterVector([[1.0, v, 1.0]]), gt).total for v in dense]
        oracle = dense[int(np.argmin(dense_vals))]
        assert abs(oracle - 2.0) <= 0.25

        cons = ConstraintSpec([PlayerConstraints(pins=[(0, 1.0), (2, 1.0)])])
        cfg = PatternSearchConfig(ParameterVector([[1.0, 1.0, 1.0]]),
                                  constraints=cons, mesh_tol=1e-4, max_iter=80)
        sol = pattern_search(di_game, gt, cfg)
        assert abs(sol.theta[0][1] - 2.0) <= 0.25
        assert abs(sol.theta[0][1] - oracle) <= 0.1

    def test_replay_consistency(self, di_game, di_theta, di_gt):
        cons = ConstraintSpec([PlayerConstraints(pins=[(0, 1.0), (2, 1.0)])])
        cfg = PatternSearchConfig(ParameterVector([[1.0, 1.5, 1.0]]),
                                  constraints=cons, mesh_tol=1e-3, max_iter=40)
        sol = pattern_search(di_game, di_gt, cfg)
        replay = trajectory_error_of(di_game, sol.theta, di_gt).total
        assert abs(replay - sol.objective) <= 1e-9


class TestRefineFromResidual:
    def test_warm_start_never_worse_than_its_seed(self, di_game, di_theta):
        from idgames.dataio import NoiseSpec, synthesize_gt
        from idgames.residual import riccati_backward, solve_residual_qp
        gt = synthesize_gt(di_game, di_theta, NoiseSpec(0.1, 0.1, 5))
        asm = riccati_backward(di_game, gt, 0)
        rsol = solve_residual_qp([asm], ConstraintSpec.pin_first(1))
        seed_err = trajectory_error_of(di_game, rsol.theta, gt).total
        cons = ConstraintSpec([PlayerConstraints(pins=[(0, 1.0)])])
        cfg = PatternSearchConfig(rsol.theta, constraints=cons,
                                  mesh_tol=1e-4, max_iter=60)
        sol = refine_from_residual(di_game, gt, rsol, cfg)
        assert sol.warm_started
        assert sol.objective <= seed_err + 1e-12

    def test_mesh_local_minimum_terminates_by_contraction(self, di_game):
        center = [1.0, 2.0, 0.5]
        cfg = PatternSearchConfig(ParameterVector([center]), mesh_tol=0.3,
                                  mesh0=np.array([0.5, 0.5, 0.5]), max_iter=50)
        sol = pattern_search(di_game, None, cfg, objective=quadratic_hook(center))
        assert np.array_equal(sol.theta.stacked, center)
        assert not sol.trace[-1].accepted  # ended contracting around the start
