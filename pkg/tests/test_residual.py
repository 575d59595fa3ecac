import numpy as np
import pytest

from idgames.errors import InfeasibleConstraints
from idgames.games import ParameterVector, Trajectory, make_double_integrator
from idgames.numerics import TimeGrid
from idgames.residual import (ConstraintSpec, PlayerConstraints,
                              diagnose_identifiability, residual_direct,
                              riccati_backward, solve_residual_qp)
from idgames.shooting import solve_olne

from conftest import random_lti_game


def cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@pytest.fixture(scope="module")
def di_assembly(di_game, di_gt):
    return riccati_backward(di_game, di_gt, 0)


@pytest.fixture(scope="module")
def di_psi0_star(di_game, di_theta):
    return solve_olne(di_game, di_theta)[0].psi0


class TestRiccatiSweep:
    def test_terminal_condition_exact(self, di_assembly):
        assert np.all(di_assembly.P[-1] == 0.0)

    def test_symmetry_and_psd_along_sweep(self, di_assembly):
        scale = np.max(np.abs(di_assembly.P))
        for k in range(0, di_assembly.P.shape[0], 60):
            Pk = di_assembly.P[k]
            assert np.max(np.abs(Pk - Pk.T)) < 1e-8 * max(1.0, scale)
            w = np.linalg.eigvalsh(0.5 * (Pk + Pk.T))
            assert w.min() >= -1e-7 * max(w.max(), 1.0)

    def test_zero_forcing_gives_zero(self):
        # an LTI game whose coefficients vanish along the zero trajectory:
        # A = 0 and GT resting at the origin makes N depend only on df/dx = 0
        # ... but df/du stays nonzero, so instead check the contrived zero
        # tables directly through the kernel
        from idgames._kernels import active
        steps = 50
        NT = np.zeros((2 * steps + 1, 2, 5))
        DT = np.zeros((2 * steps + 1, 1, 5))
        status, P = active.riccati_sweep(NT, DT, 0.01, steps, 3)
        assert status == -1
        assert np.all(P == 0.0)

    def test_alpha_star_annihilated(self, di_game, di_gt, di_assembly,
                                    di_theta, di_psi0_star):
        alpha = np.concatenate([di_theta[0], di_psi0_star])
        val = alpha @ di_assembly.P0 @ alpha
        assert abs(val) <= 1e-8 * max(1.0, alpha @ alpha)


class TestLemma2Equivalence:
    """residual_direct must reproduce the quadratic form; the module's
    decisive numerical property."""

    def _check(self, game, theta_star, n_random=20, seed=0):
        from idgames.dataio import synthesize_gt
        gt = synthesize_gt(game, theta_star, substeps=2)
        asms = [riccati_backward(game, gt, i) for i in range(game.N)]
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(n_random):
            thetas = [rng.uniform(-2.0, 2.0, game.bases[i].M)
                      for i in range(game.N)]
            psi0 = rng.uniform(-2.0, 2.0, game.N * game.n)
            qf = 0.0
            for i in range(game.N):
                a = np.concatenate([thetas[i], psi0[i * game.n:(i + 1) * game.n]])
                qf += float(a @ asms[i].P0 @ a)
            direct = residual_direct(game, gt, ParameterVector(thetas), psi0)
            worst = max(worst, abs(direct - qf) / (1.0 + abs(qf)))
        assert worst <= 1e-6, f"worst relative deviation {worst:.3e}"

    def test_di_full(self, di_game, di_theta):
        self._check(di_game, di_theta)

    def test_di_reduced(self):
        self._check(make_double_integrator(basis_variant="reduced"),
                    ParameterVector([[1.0, 2.0]]))

    def test_random_lti(self):
        rng = np.random.default_rng(77)
        game, theta = random_lti_game(rng)
        self._check(game, theta)

    def test_collision(self, collision_game, collision_theta):
        self._check(collision_game, collision_theta)


class TestResidualDirect:
    def test_zero_on_exact_gt(self, di_game, di_gt, di_theta, di_psi0_star):
        val = residual_direct(di_game, di_gt, di_theta, di_psi0_star)
        assert abs(val) <= 1e-8

    def test_positive_and_increasing_away_from_star(self, di_game, di_gt,
                                                    di_theta, di_psi0_star):
        vals = []
        for th2 in (2.0, 2.5, 3.0, 3.5):
            theta = ParameterVector([[1.0, th2, 1.0]])
            vals.append(residual_direct(di_game, di_gt, theta, di_psi0_star))
        assert vals[1] > 1e-6
        assert vals[0] < vals[1] < vals[2] < vals[3]


class TestResidualQp:
    def test_recovers_di_weights(self, di_game, di_gt, di_assembly):
        spec = ConstraintSpec.pin_first(1)
        sol = solve_residual_qp([di_assembly], spec)
        assert np.allclose(sol.theta[0], [1.0, 2.0, 1.0], atol=1e-4)
        assert cosine(sol.theta[0], np.array([1.0, 2.0, 1.0])) >= 0.9999
        assert sol.delta_R >= -1e-9

    def test_recovery_vs_dense_grid_oracle(self, di_game, di_gt, di_assembly):
        # brute-force oracle: dense grid over (theta2, theta3) with theta1=1
        # and the costate minimized analytically per point
        P = di_assembly.psd_projected()
        best, arg = np.inf, None
        for t2 in np.linspace(1.0, 3.0, 41):
            for t3 in np.linspace(0.25, 1.75, 31):
                fixed = {0: 1.0, 1: t2, 2: t3}
                free = [3, 4]
                a = np.zeros(5)
                for j, v in fixed.items():
                    a[j] = v
                rhs = -P[np.ix_(free, list(fixed))] @ a[list(fixed)]
                a[free] = np.linalg.lstsq(P[np.ix_(free, free)], rhs, rcond=None)[0]
                v = a @ P @ a
                if v < best:
                    best, arg = v, (t2, t3)
        sol = solve_residual_qp([di_assembly], ConstraintSpec.pin_first(1))
        assert arg == pytest.approx((2.0, 1.0), abs=0.05)
        assert sol.deltas[0] <= best + 1e-9

    def test_pinned_value_scales_quadratically(self, di_assembly):
        # pinning theta_1 = c scales the minimizer and value by c, c^2
        s1 = solve_residual_qp([di_assembly], ConstraintSpec.pin_first(1, 1.0))
        s2 = solve_residual_qp([di_assembly], ConstraintSpec.pin_first(1, 2.0))
        assert np.allclose(2.0 * s1.alphas[0], s2.alphas[0], atol=1e-6)

    def test_monotone_constraint_effect(self, di_assembly):
        base = solve_residual_qp([di_assembly], ConstraintSpec.pin_first(1))
        spec = ConstraintSpec.pin_first(1).with_lower_bounds([[(1, 2.5)]])
        more = solve_residual_qp([di_assembly], spec)
        assert more.delta_R >= base.delta_R - 1e-12
        assert more.theta[0][1] >= 2.5 - 1e-9

    def test_constraints_must_exclude_zero(self):
        with pytest.raises(InfeasibleConstraints):
            ConstraintSpec([PlayerConstraints(pins=[(0, 0.0)])])
        with pytest.raises(InfeasibleConstraints):
            ConstraintSpec([PlayerConstraints()])

    def test_index_range_checked(self, di_assembly):
        spec = ConstraintSpec([PlayerConstraints(pins=[(99, 1.0)])])
        with pytest.raises(InfeasibleConstraints):
            solve_residual_qp([di_assembly], spec)


class TestIdentifiability:
    def test_di_exact_gt_condition_and_recovery(self, di_game, di_gt, di_assembly):
        diag = diagnose_identifiability(di_assembly)
        sol = solve_residual_qp([di_assembly], ConstraintSpec.pin_first(1))
        # Lemma-3 setting: condition flag and unique-up-to-scale recovery
        # must hold together
        assert diag.condition_met
        assert diag.full_rank
        assert diag.rank == di_assembly.MA - 1
        assert cosine(sol.theta[0], np.array([1.0, 2.0, 1.0])) >= 0.9999

    def test_zero_matrix_rank_zero(self, di_assembly):
        import dataclasses
        asm = dataclasses.replace(
            di_assembly, P=np.zeros_like(di_assembly.P),
            P0=np.zeros_like(di_assembly.P0))
        diag = diagnose_identifiability(asm)
        assert diag.rank == 0
        assert not diag.full_rank

    def test_constructed_full_rank(self, di_assembly):
        import dataclasses
        rng = np.random.default_rng(1)
        MA = di_assembly.MA
        g = rng.standard_normal((MA - 1, MA - 1))
        P0 = np.zeros((MA, MA))
        P0[1:, 1:] = g @ g.T + 0.1 * np.eye(MA - 1)
        asm = dataclasses.replace(di_assembly, P0=P0)
        diag = diagnose_identifiability(asm)
        assert diag.full_rank
        assert diag.rank == MA - 1

    def test_block_dimensions(self, di_assembly):
        d = diagnose_identifiability(di_assembly)
        Mi, n, r = di_assembly.M, di_assembly.n, d.rank
        assert d.U11.shape == (Mi - 1, r)
        assert d.U12.shape == (Mi - 1, Mi + n - 1 - r)
        assert d.U21.shape == (n, r)
        assert d.U22.shape == (n, Mi + n - 1 - r)

    def test_collision_pins_only_fails_conditions(self, collision_game,
                                                  collision_gt):
        # the degenerate case behind the untrustworthy pins-only result
        for i in range(2):
            asm = riccati_backward(collision_game, collision_gt, i)
            diag = diagnose_identifiability(asm)
            assert not diag.condition_met
