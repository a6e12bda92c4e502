import numpy as np
import pytest

from approxdual.tracker import (BlockTrackers, TrackerError, TrackerState, action_matrix_norm,
                                decompose_batch, decompose_to_simplex, select_action,
                                track_sequence, two_timescale_track)

TRIANGLE = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])


class TestDecompose:
    def test_vertex(self):
        np.testing.assert_array_equal(decompose_to_simplex([1.0, 0.0], TRIANGLE), [0, 1, 0])

    def test_one_dimensional(self):
        np.testing.assert_allclose(decompose_to_simplex([0.6], [0.0, 1.0]), [0.4, 0.6])

    def test_barycentric(self):
        np.testing.assert_allclose(decompose_to_simplex([0.25, 0.25], TRIANGLE), [0.5, 0.25, 0.25])

    def test_adjacent_levels(self):
        a = decompose_to_simplex([3.3], np.arange(9.0))
        assert np.flatnonzero(a).tolist() == [3, 4]
        assert a[4] == pytest.approx(0.3)

    def test_many_actions_lp(self):
        D = np.array([(a, b) for a in range(3) for b in range(3)], float)
        rng = np.random.default_rng(0)
        for z in rng.uniform(0, 2, (50, 2)):
            a = decompose_to_simplex(z, D)
            assert a.min() >= 0 and a.sum() == pytest.approx(1)
            assert np.abs(D.T @ a - z).max() <= 1e-9
            assert np.count_nonzero(a > 1e-12) <= 3

    def test_outside(self):
        with pytest.raises(TrackerError):
            decompose_to_simplex([0.8, 0.8], TRIANGLE)
        with pytest.raises(TrackerError):
            decompose_to_simplex([1.5], [0.0, 1.0])

    def test_batch_matches_single(self):
        rng = np.random.default_rng(1)
        Z = rng.dirichlet(np.ones(3), 20) @ TRIANGLE
        A = decompose_batch(Z, TRIANGLE)
        for z, a in zip(Z, A):
            np.testing.assert_allclose(a, decompose_to_simplex(z, TRIANGLE), atol=1e-12)
        t = rng.uniform(0, 8, 20)
        A1 = decompose_batch(t, np.arange(9.0))
        for z, a in zip(t, A1):
            np.testing.assert_allclose(a, decompose_to_simplex([z], np.arange(9.0)), atol=1e-12)


class TestSelect:
    @pytest.mark.parametrize("strategy", ["max_element", "argmin_inf"])
    def test_hand_trace(self, strategy):
        st = TrackerState.from_actions([0.0, 1.0], strategy=strategy)
        x, j = select_action(st, [0.4, 0.6])
        assert (x[0], j) == (1.0, 1)
        np.testing.assert_allclose(st.S, [0.4, -0.4])
        x, j = select_action(st, [0.4, 0.6])
        assert (x[0], j) == (0.0, 0)
        np.testing.assert_allclose(st.S, [-0.2, 0.2])

    def test_vertex_keeps_zero_drift(self):
        st = TrackerState.from_actions(TRIANGLE)
        _, j = select_action(st, [0, 0, 1.0])
        assert j == 2 and np.all(st.S == 0)

    def test_first_eligible(self):
        st = TrackerState.from_actions([0.0, 1.0], strategy="first_eligible")
        _, j = select_action(st, [0.4, 0.6])
        assert j == 0

    def test_rejects_non_simplex(self):
        st = TrackerState.from_actions([0.0, 1.0])
        with pytest.raises(TrackerError):
            select_action(st, [0.7, 0.7])

    def test_floor_and_strategy_validation(self):
        with pytest.raises(TrackerError):
            TrackerState.from_actions([0.0, 1.0], S_bar=0.5)
        with pytest.raises(TrackerError):
            TrackerState.from_actions([0.0, 1.0], strategy="nope")

    def test_scalar_and_vector_choice_agree(self):
        from approxdual.tracker import _choose, _choose_list
        rng = np.random.default_rng(5)
        for _ in range(2000):
            d = rng.integers(2, 6)
            S = rng.uniform(-1, 1, d)
            S -= S.mean()
            a = rng.dirichlet(np.ones(d))
            for strat in ("argmin_inf", "max_element", "first_eligible"):
                assert _choose(S + a, 1.0, strat) == _choose_list(list(S + a), 0.0, strat)


class TestTrack:
    def test_decaying_sequence(self):
        k = np.arange(1, 1001)
        rep = track_sequence(0.75 / k + 0.25, TrackerState.from_actions([0.0, 1.0]))
        assert rep.bound == 1.0 and rep.max_deviation <= 1.0

    def test_constant_vertex(self):
        rep = track_sequence(np.tile([1.0, 0.0], (50, 1)), TrackerState.from_actions(TRIANGLE))
        assert np.all(rep.indices == 1) and rep.max_deviation == 0

    def test_random_triangle(self):
        rng = np.random.default_rng(2)
        Z = rng.dirichlet(np.ones(3), 10_000) @ TRIANGLE
        rep = track_sequence(Z, TrackerState.from_actions(TRIANGLE))
        assert rep.bound == 2.0 and rep.within_bound
        assert rep.min_drift >= -1.0 and rep.max_zero_sum_error <= 1e-9

    def test_average_lipschitz_consequence(self):
        # |f(x_avg) - f(z_avg)| <= deviation * nu_f / k for f(z) = 3 z (nu_f = 3)
        k = np.arange(1, 501)
        z = 0.5 + 0.4 * np.sin(k / 7.0)
        rep = track_sequence(z, TrackerState.from_actions([0.0, 1.0]))
        zbar = np.cumsum(z) / k
        xbar = np.cumsum(rep.x[:, 0]) / k
        assert np.all(np.abs(3 * xbar - 3 * zbar) <= 3 * rep.bound / k + 1e-12)

    def test_induced_norm(self):
        assert action_matrix_norm(TRIANGLE.T) == 1.0
        assert action_matrix_norm(np.arange(9.0)[None, :]) == 36.0


class TestTwoTimescale:
    def test_hold_one_is_plain_tracking(self):
        z = np.random.default_rng(3).random(200)
        a = two_timescale_track(z, 1, TrackerState.from_actions([0.0, 1.0]))
        b = track_sequence(z, TrackerState.from_actions([0.0, 1.0]))
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_counting(self):
        rep = two_timescale_track(np.full(10, 0.3), 10, TrackerState.from_actions([0.0, 1.0]))
        assert abs(rep.x.sum() - 30) <= 1 and rep.max_deviation <= 1

    def test_hold_validation(self):
        with pytest.raises(TrackerError):
            two_timescale_track([0.5], 0, TrackerState.from_actions([0.0, 1.0]))


def test_block_trackers():
    bt = BlockTrackers.build({(0,): np.array([[0.0], [1.0]]), (1,): np.arange(9.0)[:, None]})
    total = np.zeros(2)
    for _ in range(300):
        z = np.array([0.3, 4.6])
        total += z - bt.step(z)
        assert np.abs(total).max() <= bt.bound()
