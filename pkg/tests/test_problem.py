import numpy as np
import pytest

from approxdual.problem import (Box, ConvexProblem, InnerSolverError, ProblemError,
                                SeparableStructure, SlaterCertificate, caratheodory_descent_point,
                                check_admissible, check_curvature, check_u_feasible, dual_eval,
                                in_convex_hull, lagrangian_eval, minimize_lagrangian,
                                slater_dual_bound, spot_check_convexity)
from approxdual.problems import disc_problem, link_problem, quadratic_toy, unsync_queues


@pytest.fixture
def toy():
    return quadratic_toy()


@pytest.fixture
def toy_numeric():
    # same problem without the analytic argmin, so the generic inner solver runs
    return ConvexProblem(1, 1, lambda z: float(z[0] ** 2), lambda z: np.array([1 - z[0]]),
                         box=Box([0.0], [2.0]))


class TestLagrangian:
    def test_link_at_origin(self):
        assert lagrangian_eval(link_problem(), [0, 0], [0, 0]) == pytest.approx(1.0)

    def test_active_constraint(self, toy):
        assert lagrangian_eval(toy, [1.0], [2.0]) == pytest.approx(1.0)

    def test_hand_arithmetic(self, toy):
        assert lagrangian_eval(toy, [0.5], [3.0]) == pytest.approx(1.75)

    def test_linear_in_lambda(self, toy):
        z = [0.7]
        a, b = lagrangian_eval(toy, z, [1.0]), lagrangian_eval(toy, z, [3.0])
        assert lagrangian_eval(toy, z, [2.0]) == pytest.approx((a + b) / 2)

    def test_rejects_bad_input(self, toy):
        with pytest.raises(ProblemError):
            lagrangian_eval(toy, [0.5, 0.5], [1.0])
        with pytest.raises(ProblemError):
            lagrangian_eval(toy, [0.5], [-1.0])


class TestDual:
    @pytest.mark.parametrize("lam,z_star,q", [(2.0, 1.0, 1.0), (6.0, 2.0, -2.0), (0.0, 0.0, 0.0)])
    def test_examples(self, toy, toy_numeric, lam, z_star, q):
        for p in (toy, toy_numeric):
            val, z = dual_eval(p, [lam])
            assert val == pytest.approx(q, abs=1e-8)
            assert z[0] == pytest.approx(z_star, abs=1e-5)

    def test_projected_gradient_path(self):
        p = ConvexProblem(2, 1, lambda z: float((z[0] - 0.3) ** 2 + 2 * (z[1] - 0.6) ** 2),
                          lambda z: np.array([z[0] + z[1] - 0.5]), box=Box([0, 0], [1, 1]))
        q, z = dual_eval(p, [0.0])
        assert q == pytest.approx(0.0, abs=1e-10)
        np.testing.assert_allclose(z, [0.3, 0.6], atol=1e-6)

    def test_inner_failure_reports_residual(self, toy_numeric):
        def bad(p, lam):
            return np.array([1.0]), 0.5

        with pytest.raises(InnerSolverError) as e:
            dual_eval(toy_numeric, [1.0], inner_solver=bad)
        assert e.value.residual == 0.5

    def test_hull_ground_set_uses_frank_wolfe(self):
        D = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        p = ConvexProblem(2, 1, lambda z: float(((z - 0.5) ** 2).sum()),
                          lambda z: np.array([-1.0]), actions=D)
        assert p.box is None
        z, gap = minimize_lagrangian(p, [0.0], tol=1e-6, max_iter=200_000)
        np.testing.assert_allclose(z, [0.5, 0.5], atol=1e-3)


class TestSlater:
    def test_examples(self, toy):
        cert = SlaterCertificate.from_point(toy, [2.0])
        assert (cert.upsilon, cert.f_bar) == (1.0, 4.0)
        assert slater_dual_bound(toy, cert, 1.0) == pytest.approx(3.0)
        assert slater_dual_bound(toy, cert, 1.0, 0.5) == pytest.approx(3.5)

    def test_optimal_slater_point(self, toy):
        cert = SlaterCertificate(np.array([1.5]), 0.5, 2.25)
        assert slater_dual_bound(toy, cert, 2.25) == 0.0

    def test_violated(self, toy):
        with pytest.raises(ProblemError):
            SlaterCertificate.from_point(toy, [1.0])
        with pytest.raises(ProblemError):
            slater_dual_bound(toy, SlaterCertificate(np.array([1.0]), 0.0, 1.0), 1.0)


class TestCaratheodory:
    def test_square(self):
        D = [(0, 0), (0, 1), (1, 0), (1, 1)]
        x, j = caratheodory_descent_point(D, [1, 1], [0.5, 0.5])
        np.testing.assert_array_equal(x, [0, 0])
        assert np.dot([1, 1], x - 0.5) == -1

    def test_zero_direction(self):
        x, j = caratheodory_descent_point([(0, 0), (1, 1)], [0, 0])
        assert j == 0

    def test_scalar(self):
        x, _ = caratheodory_descent_point([0.0, 1.0], [-1.0])
        assert x[0] == 1.0 and -1.0 * (x[0] - 0.3) == pytest.approx(-0.7)

    def test_empty(self):
        with pytest.raises(ProblemError):
            caratheodory_descent_point(np.zeros((0, 2)), [1, 1])


class TestUFeasible:
    def test_full_set_always(self):
        assert check_u_feasible([(0, 0), (1, 1)], [(0, 1)])

    def test_diagonal_fails_with_witness(self):
        res = check_u_feasible([(0, 0), (1, 1)], [(0,), (1,)])
        assert not res
        z, x, u = res.witness
        np.testing.assert_array_equal(z, [1, 1])
        np.testing.assert_array_equal(x, [0, 0])
        assert u == (0,)
        w = z.copy()
        w[list(u)] = x[list(u)]
        assert not in_convex_hull([(0, 0), (1, 1)], w)

    def test_hypercube_vertices(self):
        D = np.array([(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)], float)
        assert check_u_feasible(D, [(0,), (1,), (2,)])

    def test_unit_vectors_plus_ones_is_not_a_cube(self):
        # conv({e_i} u {1}) is not the hypercube, so blockwise swaps leave it
        D = np.vstack([np.eye(3), np.ones(3)])
        res = check_u_feasible(D, [(0,), (1,), (2,)])
        assert not res and res.witness is not None

    def test_non_product_but_feasible(self):
        # a simplex with the full set only
        assert check_u_feasible(np.vstack([np.zeros(2), np.eye(2)]), [(0, 1)])


class TestStructure:
    def test_admissible(self):
        check_admissible([(0,), (1,)], 2)
        check_admissible([(0,), (1,), (0, 1)], 2)
        with pytest.raises(ProblemError):
            check_admissible([(0,), (0, 1), (0, 1)], 2)
        with pytest.raises(ProblemError):
            check_admissible([(0,)], 2)

    def test_link_separability_sums(self):
        p = link_problem()
        rng = np.random.default_rng(1)
        for z in rng.random((20, 2)):
            parts = p.separability.block_objectives
            assert parts[0](z[[0]]) + parts[1](z[[1]]) == pytest.approx(p.f(z))

    def test_action_blocks(self):
        blocks = unsync_queues().action_blocks()
        assert set(blocks) == {(0,), (1,)}
        assert len(blocks[(0,)]) == 9

    def test_box_from_actions(self):
        assert link_problem().box is not None

    def test_g_bar(self):
        p = unsync_queues()
        assert p.g_bar(np.inf) == pytest.approx(7.5)
        assert p.g_bar(2) == pytest.approx(np.hypot(7.5, 6.5))
        assert p.Az_bar() == 8.0

    def test_convexity_and_curvature(self):
        assert spot_check_convexity(quadratic_toy())
        assert check_curvature(unsync_queues())
        assert check_curvature(disc_problem())
        bad = ConvexProblem(1, 0, lambda z: float(-z[0] ** 2), lambda z: np.zeros(0), box=Box([0], [1]))
        with pytest.warns(RuntimeWarning):
            spot_check_convexity(bad)

    def test_finite_difference_gradient(self):
        p = ConvexProblem(2, 1, lambda z: float(z[0] ** 2 + 3 * z[1]), lambda z: np.array([z[0] * z[1]]),
                          box=Box([0, 0], [1, 1]))
        np.testing.assert_allclose(p.grad_f(np.array([0.5, 0.2])), [1.0, 3.0], atol=1e-6)
        np.testing.assert_allclose(p.jac_g(np.array([0.5, 0.2])), [[0.2, 0.5]], atol=1e-6)
