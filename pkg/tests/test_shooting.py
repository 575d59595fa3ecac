import numpy as np
import pytest

from idgames.errors import NoConvergedCandidate, NotApplicable
from idgames.games import (ParameterVector, Trajectory, make_collision_game,
                           make_double_integrator, make_lti_game)
from idgames.lq import lq_solution, theta_to_qr
from idgames.metrics import nsae
from idgames.numerics import TimeGrid
from idgames.shooting import (mirrored_guess, newton_shoot, select_best_olne,
                              solve_olne)

from conftest import random_lti_game


class TestDoubleIntegratorOracle:
    def test_matches_lq_riccati(self, di_game, di_theta):
        sols = solve_olne(di_game, di_theta)
        assert all(s.converged for s in sols)
        sol = sols[0]
        Q, R = theta_to_qr(di_theta[0], 1, (0, 1), 2)
        X, U, PSI, _ = lq_solution(di_game.dynamics.A, di_game.dynamics.B, Q, R,
                                   di_game.x0, di_game.grid)
        assert np.max(np.abs(sol.trajectory.states - X)) < 1e-6
        assert np.max(np.abs(sol.trajectory.controls - U)) < 1e-6
        assert np.max(np.abs(sol.costates.psis - PSI)) < 1e-6

    def test_terminal_costate_zero(self, di_game, di_theta):
        sol = solve_olne(di_game, di_theta)[0]
        assert np.max(np.abs(sol.costates.psis[-1])) <= 1e-6


class TestLtiOracle:
    def test_twenty_random_instances(self):
        rng = np.random.default_rng(2024)
        for trial in range(20):
            game, theta = random_lti_game(rng)
            sols = solve_olne(game, theta)
            assert any(s.converged for s in sols), f"instance {trial} failed"
            sol = next(s for s in sols if s.converged)
            n, m = game.n, game.m[0]
            Q, R = theta_to_qr(theta[0], m, tuple(range(n)), n)
            X, U, PSI, _ = lq_solution(game.dynamics.A, game.dynamics.B, Q, R,
                                       game.x0, game.grid)
            scale = max(1.0, float(np.max(np.abs(X))))
            assert np.max(np.abs(sol.trajectory.states - X)) < 1e-6 * scale

    def test_zero_initial_state_stays_zero(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        B = np.eye(2)
        game = make_lti_game(A, [B], [(0, 1)], [0.0, 0.0], 3.0)
        sol = solve_olne(game, ParameterVector([[1.0, 1.0, 1.0, 1.0]]))[0]
        assert sol.converged
        assert np.max(np.abs(sol.trajectory.states)) == 0.0
        assert np.max(np.abs(sol.costates.psis)) == 0.0


class TestCollisionSolve:
    def test_converges_at_theta_star(self, collision_game, collision_theta):
        sols = solve_olne(collision_game, collision_theta)
        assert any(s.converged for s in sols)
        labels = [s.start_label for s in sols]
        assert "mirrored" in labels  # the two-start protocol engaged

    def test_self_consistency_residual(self, collision_game, collision_theta,
                                       collision_gt):
        # the solver's own equilibrium must annihilate the residual
        from idgames.residual import residual_direct
        sols = solve_olne(collision_game, collision_theta)
        sol = next(s for s in sols if s.converged)
        val = residual_direct(collision_game, collision_gt, collision_theta,
                              sol.psi0)
        assert val <= 1e-5

    def test_mirrored_start_finds_second_equilibrium(self, collision_game,
                                                     collision_theta):
        sols = solve_olne(collision_game, collision_theta)
        conv = [s for s in sols if s.converged]
        base = conv[0]
        mirrored = [s for s in conv if s.start_label == "mirrored"]
        assert mirrored
        dev = np.max(np.abs(mirrored[0].trajectory.states - base.trajectory.states))
        assert dev > 0.1  # genuinely distinct equilibrium

    def test_stationarity_certificate(self, collision_game, collision_theta):
        from idgames.games import eval_hamiltonian_grads
        sol = next(s for s in solve_olne(collision_game, collision_theta)
                   if s.converged)
        ks = [0, 100, 250, 400, 500]
        for k in ks:
            x = sol.trajectory.states[k]
            u = sol.trajectory.controls[k]
            for i in range(2):
                psi = sol.costates.player(i, 4)[k]
                gu, _ = eval_hamiltonian_grads(collision_game, collision_theta,
                                               x, u, psi, i)
                assert np.max(np.abs(gu)) < 1e-6

    def test_rejects_nonpositive_control_weight(self, collision_game):
        bad = ParameterVector([[1.0, -1.0, 0, 0, 0.2, 0, 100, 100],
                               [1.0, 1.0, 0, 0, 0.2, 0, 100, 100]])
        with pytest.raises(ValueError):
            solve_olne(collision_game, bad)


class TestScalingEquivariance:
    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_trajectory_invariant_under_theta_scaling(self, di_game, di_theta, c):
        base = solve_olne(di_game, di_theta)[0]
        scaled = solve_olne(di_game, ParameterVector([c * di_theta[0]]))[0]
        assert scaled.converged
        assert np.max(np.abs(scaled.trajectory.states - base.trajectory.states)) < 1e-6
        # costates rescale by c
        assert np.max(np.abs(scaled.costates.psis - c * base.costates.psis)) < 1e-5


class TestMirroredGuess:
    def test_straight_line_path_is_fixed_point(self):
        # head-on geometry with aligned start/target lines and no proximity
        # cost: the equilibrium path is the straight line, which the
        # reflection fixes, so the mirrored guess equals the base guess
        game = make_collision_game(x0=(-1.0, 0.0, 5.0, 3.0),
                                   x_T=(1.0, 0.0, 5.0, 4.0))
        theta = ParameterVector([[1, 1, 0, 0, 0, 0, 100, 100],
                                 [1, 1, 0, 0, 0, 0, 100, 100.0]])
        sols = solve_olne(game, theta)
        base = next(s for s in sols if s.converged)
        g = mirrored_guess(game, base)
        assert np.max(np.abs(g - base.psi0)) < 1e-6

    def test_reflects_transverse_component(self, collision_game, collision_theta):
        base = next(s for s in solve_olne(collision_game, collision_theta)
                    if s.converged)
        g = mirrored_guess(collision_game, base)
        # construction oracle: reflect the initial control, then rebuild the
        # own-slot costates from stationarity by hand
        theta = collision_theta
        expect = base.psi0.reshape(2, 4).copy()
        for i in range(2):
            p0 = collision_game.x0[2 * i:2 * i + 2]
            tgt = collision_game.bases[i].target
            d = (tgt - p0) / np.linalg.norm(tgt - p0)
            refl = 2 * np.outer(d, d) - np.eye(2)
            u_m = refl @ base.trajectory.controls[0][2 * i:2 * i + 2]
            for c in range(2):
                expect[i, 2 * i + c] = (-2 * theta[i][6 + c] * (p0[c] - tgt[c])
                                        - 2 * theta[i][c] * u_m[c])
        assert np.allclose(g, expect.ravel(), atol=1e-8)

    def test_not_applicable_for_di(self, di_game, di_theta):
        sol = solve_olne(di_game, di_theta)[0]
        with pytest.raises(NotApplicable):
            mirrored_guess(di_game, sol)


class TestSelectBest:
    def _mk(self, game, theta, traj):
        from idgames.games import CostateTrajectory
        from idgames.shooting import OlneSolution
        psis = np.zeros((game.grid.steps + 1, game.N * game.n))
        return OlneSolution(traj, CostateTrajectory(game.grid, psis), theta,
                            np.zeros(game.N * game.n), 0.0, True, "stub", 0)

    def test_single_candidate(self, di_game, di_theta):
        sol = solve_olne(di_game, di_theta)[0]
        gt = sol.trajectory
        assert select_best_olne([sol], gt) is sol

    def test_exact_match_wins(self, di_game, di_theta):
        grid = di_game.grid
        gt = Trajectory(grid, np.ones((grid.steps + 1, 2)),
                        np.ones((grid.steps + 1, 1)))
        other = Trajectory(grid, 2 * np.ones((grid.steps + 1, 2)),
                           np.ones((grid.steps + 1, 1)))
        a = self._mk(di_game, di_theta, other)
        b = self._mk(di_game, di_theta, gt)
        best = select_best_olne([a, b], gt)
        assert best is b
        assert nsae(gt, best.trajectory).total == 0.0

    def test_tie_breaks_first_in_list(self, di_game, di_theta):
        grid = di_game.grid
        base = np.ones((grid.steps + 1, 2))
        gt = Trajectory(grid, base, np.ones((grid.steps + 1, 1)))
        up = self._mk(di_game, di_theta,
                      Trajectory(grid, base + 0.5, np.ones((grid.steps + 1, 1))))
        down = self._mk(di_game, di_theta,
                        Trajectory(grid, base - 0.5, np.ones((grid.steps + 1, 1))))
        assert select_best_olne([up, down], gt) is up
        assert select_best_olne([down, up], gt) is down

    def test_no_converged_raises(self, di_game, di_theta):
        sol = solve_olne(di_game, di_theta)[0]
        sol = type(sol)(sol.trajectory, sol.costates, sol.theta, sol.psi0,
                        1.0, False, "zero", 3)
        with pytest.raises(NoConvergedCandidate):
            select_best_olne([sol], sol.trajectory)


class TestNewtonInternals:
    def test_divergent_guess_flagged(self, collision_game, collision_theta):
        sol = newton_shoot(collision_game, collision_theta,
                           1e5 * np.ones(8), "wild")
        assert not sol.converged or sol.shooting_residual <= 1e-6

    def test_residual_tolerance_honored(self, di_game, di_theta):
        for sol in solve_olne(di_game, di_theta):
            if sol.converged:
                assert sol.shooting_residual <= 1e-6
