import numpy as np
import pytest

from approxdual.descent import (DescentConfig, DescentConfigError, SeparableQuadratic,
                                beta_cap, descent_step_direct, descent_step_fw,
                                lagrangian_alpha_cap, make_schedule, min_eps_prime,
                                run_descent, slow_variation_check, variation_samples)
from approxdual.problem import ProblemError

SQUARE = np.array([(0, 0), (0, 1), (1, 0), (1, 1)], float)


class TestSteps:
    def test_direct_example(self):
        x, z = descent_step_direct(lambda w: float(w[0] ** 2), [1.0], (0,), [0.0, 1.0], 0.5)
        assert x[0] == 0.0 and z[0] == 0.5

    def test_direct_bounded_backslide_at_optimum(self):
        beta, mu_F, xbar = 0.2, 1.0, 1.0
        x, z = descent_step_direct(lambda w: float(w[0] ** 2), [0.0], (0,), [0.0, 1.0], beta)
        assert z[0] ** 2 - 0.0 <= mu_F * beta ** 2 * xbar ** 2

    def test_fw_sign(self):
        x, z = descent_step_fw(np.array([2.0]), [1.0], (0,), [0.0, 1.0], 0.5)
        assert x[0] == 0.0 and z[0] == 0.5

    def test_fw_tie_goes_to_lowest_index(self):
        x, _ = descent_step_fw(np.array([0.0, 0.0]), [0.5, 0.5], (0, 1), SQUARE, 0.1)
        np.testing.assert_array_equal(x, SQUARE[0])

    def test_fw_square(self):
        grad = lambda z: np.array([2 * (z[0] - 1), 2 * z[1]])
        x, _ = descent_step_fw(grad, [0.0, 1.0], (0, 1), SQUARE, 0.1)
        np.testing.assert_array_equal(x, [1, 0])

    def test_block_step_leaves_other_coordinates(self):
        _, z = descent_step_direct(lambda w: float((w[0] - 3) ** 2), [1.0, 5.0], (0,),
                                   np.array([(a, b) for a in range(9) for b in range(9)], float), 0.1)
        assert z[1] == 5.0 and z[0] == pytest.approx(1.0 + 0.1 * (8 - 1))

    def test_missing_gradient(self):
        with pytest.raises(ProblemError):
            descent_step_fw(None, [0.0], (0,), [0.0, 1.0], 0.1)

    def test_linear_objective_engines_agree(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c = rng.normal(size=2)
            z = rng.random(2)
            xd, _ = descent_step_direct(lambda w: float(c @ w), z, (0, 1), SQUARE, 0.3)
            xf, _ = descent_step_fw(c, z, (0, 1), SQUARE, 0.3)
            np.testing.assert_array_equal(xd, xf)


class TestConfig:
    def test_cap_enforced(self):
        DescentConfig(0.01, 0.1, N=1, mu_F=1, x_bar=1).validate()
        with pytest.raises(DescentConfigError, match="step-size condition"):
            DescentConfig(0.2, 0.1, N=1, mu_F=1, x_bar=1).validate()

    def test_gamma_ranges(self):
        with pytest.raises(DescentConfigError):
            DescentConfig(0.01, 0.1, gamma=0.5, gamma1=0.3).validate()

    def test_min_eps_round_trip(self):
        eps = min_eps_prime(0.1, 0.5, 2, 1.0, 8 * np.sqrt(2))
        assert eps == pytest.approx(102.4)
        assert beta_cap(eps, 0.5, 2, 1.0, 8 * np.sqrt(2)) == pytest.approx(0.1)

    def test_effective_tolerance(self):
        cfg = DescentConfig(0.1, 1.0, 0.5, 0.2)
        assert cfg.eps_effective == pytest.approx(1 / 1.01)
        assert cfg.variation_bound() == pytest.approx(0.2 * 0.5 * 0.1 / 2)


class TestSchedule:
    def test_cyclic(self):
        s = make_schedule([(0,), (1,)], "cyclic")
        assert [s.block(k) for k in range(4)] == [(0,), (1,), (0,), (1,)] and s.N == 2

    def test_full(self):
        s = make_schedule([(0, 1, 2)], "full")
        assert s.N == 1 and s.block(7) == (0, 1, 2)

    def test_cyclic_n(self):
        assert make_schedule([(i,) for i in range(5)], "cyclic").N == 5

    def test_custom_and_boundaries(self):
        s = make_schedule([(0,), (1,), (0, 1)], "custom", order=[(0,), (0,), (1,), (0, 1)])
        assert s.N == 3
        assert s.boundaries(8) == [0, 3, 4, 7, 8]

    def test_inadmissible(self):
        with pytest.raises(ProblemError):
            make_schedule([(0,), (0, 1), (1,), (0, 1)], "cyclic", n=2)
        with pytest.raises(ProblemError):
            make_schedule([(0,), (1,)], "custom", order=[(0,)])


class TestSlowVariation:
    def test_identical(self):
        f = lambda z: float(z @ z)
        res = slow_variation_check(f, f, SQUARE, 1e-6)
        assert res and res.worst_gap == 0

    def test_violation_has_witness(self):
        f = lambda z: float(z @ z)
        res = slow_variation_check(f, lambda z: f(z) + 2e-3, SQUARE, 1e-3)
        assert not res and res.witness is not None

    def test_lagrangian_alpha_rule(self):
        # F_k = L(., lam_k) with |lam_{k+1} - lam_k| <= alpha g_bar (m = 1)
        beta, eps, gamma, gamma1 = 0.05, 0.5, 0.5, 0.2
        g = lambda z: 1.0 - z[0]
        g_bar = 1.0
        alpha = lagrangian_alpha_cap(beta, eps, gamma, gamma1, g_bar)
        rng = np.random.default_rng(1)
        lam = 2.0
        samples = variation_samples(np.array([[0.0], [2.0]]), count=32)
        for _ in range(50):
            lam_next = max(lam + alpha * rng.uniform(-1, 1) * g_bar, 0.0)
            F0 = lambda z, l=lam: float(z[0] ** 2 + l * g(z))
            F1 = lambda z, l=lam_next: float(z[0] ** 2 + l * g(z))
            bound = gamma1 * gamma * beta * eps / 2
            assert slow_variation_check(F0, F1, samples, bound)
            lam = lam_next


class TestRunDescent:
    def test_static_quadratic_full(self):
        cfg = DescentConfig(beta=0.01, eps_prime=0.1, N=1, mu_F=1.0, x_bar=np.sqrt(2)).validate()
        F = SeparableQuadratic(np.ones(2), lambda k: np.zeros(2))
        s = make_schedule([(0, 1)], "full")
        tr = run_descent(s, cfg, F, SQUARE, 3000, z1=np.array([1.0, 1.0]), n_update_sets=1,
                         burn_in=1000)
        gaps = tr.enforced_gaps()
        assert gaps and max(gaps.values()) <= 2 * cfg.eps_prime

    def test_time_varying_cyclic(self):
        gamma, gamma1, eps = 0.5, 0.2, 0.2
        N, xbar = 2, np.sqrt(2)
        beta = (1 - gamma) * gamma * eps / (N * 1.0 * xbar ** 2)
        cfg = DescentConfig(beta, eps, gamma, gamma1, N, 1.0, xbar).validate()
        bound = cfg.variation_bound()
        # centres move slowly enough: |dF| <= 2 |dc| (since |2z - c - c'| <= 2 on [0,1])
        speed = bound / 4.0
        F = SeparableQuadratic(np.ones(2), lambda k: np.array([0.5 + 0.3 * np.sin(speed * k / 0.3),
                                                               0.4 + 0.0 * k]))
        samples = variation_samples(SQUARE, count=32)
        for k in (0, 100, 1000):
            assert slow_variation_check(lambda z: F.value(k, z), lambda z: F.value(k + 1, z), samples, bound)
        s = make_schedule([(0,), (1,)], "cyclic")
        tr = run_descent(s, cfg, F, SQUARE, 6000, z1=np.array([0.5, 0.4]), n_update_sets=2)
        gaps = tr.enforced_gaps()
        assert gaps
        assert max(gaps.values()) <= tr.tolerance_effective <= tr.tolerance

    def test_rejects_large_beta(self):
        cfg = DescentConfig(0.5, 0.1, N=1, mu_F=1.0, x_bar=1.0)
        with pytest.raises(DescentConfigError):
            run_descent(make_schedule([(0,)], "full"), cfg,
                        SeparableQuadratic(np.ones(1), lambda k: np.zeros(1)), [0.0, 1.0], 10)
