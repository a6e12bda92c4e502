"""Acceptance criteria, one test each, at their stated tolerances.

Run directly (``python tests/test_acceptance.py``) for the PASS/FAIL lines
alone; under pytest the same lines appear in the terminal summary.
"""
import time

import numpy as np
import pytest

from _instances import check_descent_instance, random_descent_instance
from approxdual.harness import scenarios
from approxdual.harness.config import from_sections
from approxdual.problem import SlaterCertificate
from approxdual.problems import (QUADRATIC_TOY_F_STAR, link_problem, quadratic_toy,
                                 two_flow_num)
from approxdual.queues import (MultiplierState, delayed_multiplier_view, iterate_queue,
                               queue_distance_bound, queue_update, skorokhod_closed_form)
from approxdual.solvers import classical_max_weight, dual_subgradient, solve, stochastic_arrivals
from approxdual.tracker import TrackerState, track_sequence

TRIANGLE = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])


def criterion_1():
    target_f, target_q = 2.15, np.array([2.56, 1.65])
    t0 = time.perf_counter()
    f_ok = q_ok = both = 0
    fs, qs = [], []
    for seed in range(10):
        cfg = from_sections({"scenario": {"id": "link", "steps": "1000", "seed": str(seed)},
                             "link": {"b": "0.5", "tau_bar": "5"}, "solver": {"alpha": "0.1"}})
        traj = scenarios.run(cfg).trajectories["link"]
        f, q = traj.f_avg[-1], traj.mu[-1]
        fs.append(f)
        qs.append(q)
        a = abs(f - target_f) <= 0.05
        b = np.abs(q - target_q).max() <= 0.3
        f_ok += a
        q_ok += b
        both += a and b
    elapsed = time.perf_counter() - t0
    ok = both >= 9 and elapsed < 5.0
    detail = (f"{both}/10 seeds within both tolerances (f: {f_ok}/10, alphaQ: {q_ok}/10); "
              f"f(z_K) in [{min(fs):.4f}, {max(fs):.4f}], alphaQ_K e.g. {np.round(qs[0], 3).tolist()}; "
              f"{elapsed:.2f} s")
    return ok, detail


def criterion_2():
    rng = np.random.default_rng(2)
    seqs = [(rng.uniform(0, 5), rng.uniform(-3, 3, rng.integers(0, 201))) for _ in range(10_000)]
    t0 = time.perf_counter()
    worst = 0.0
    for lam1, x in seqs:
        a = skorokhod_closed_form(lam1, x)
        b = iterate_queue(lam1, x)[-1]
        if a != b:
            worst = max(worst, abs(a - b) / abs(b) if b else np.inf)
    elapsed = time.perf_counter() - t0
    return worst <= 1e-12 and elapsed < 2.0, f"max relative error {worst:.3g}; {elapsed:.2f} s"


def criterion_3():
    rng = np.random.default_rng(3)
    violations = 0
    for _ in range(1000):
        n = rng.integers(1, 201)
        scale = rng.uniform(0.1, 3)
        x, y = rng.uniform(-scale, scale, (2, n))
        lhs, rhs = queue_distance_bound(x, y, rng.uniform(0, 2))
        violations += int(np.sum(lhs > rhs + 1e-12))
    return violations == 0, f"{violations} prefix violations over 1000 pairs"


def criterion_4():
    violations = 0
    worst = 0.0
    D = np.array([(a, b) for a in (0.0, 1.0) for b in (0.0, 1.0)])
    for seed, (alpha, beta) in enumerate([(0.1, 0.1), (0.05, 0.3), (1.0, 0.05)]):
        rng = np.random.default_rng(40 + seed)
        A = rng.uniform(-1, 1, (2, 2))
        b = rng.uniform(0, 1, 2)
        m = 2
        sigma1 = 2 * np.abs(D @ A.T).max()
        arrivals = stochastic_arrivals(b, 0.5)
        bound = 2 * m * alpha * (sigma1 / beta + arrivals.sigma2)
        z = D[rng.integers(4)].copy()
        lam = np.zeros(m)
        mu = np.zeros(m)
        for _ in range(10_000):
            x = D[rng.integers(4)]
            z = (1 - beta) * z + beta * x
            lam = queue_update(lam, alpha * (A @ z - b))
            mu = queue_update(mu, alpha * (A @ x - arrivals.next()))
            gap = float(np.linalg.norm(mu - lam))
            worst = max(worst, gap / bound)
            violations += gap > bound
        if not arrivals.within_cap:
            violations += 1
    return violations == 0, f"{violations} violations in 3 x 10^4 steps; worst gap/bound {worst:.3f}"


def criterion_5():
    K = 1_000_000
    rng = np.random.default_rng(5)
    runs = {
        "random triangle": (rng.dirichlet(np.ones(3), K) @ TRIANGLE, TRIANGLE),
        "alternating vertices": (np.where((np.arange(K) % 2 == 0)[:, None], TRIANGLE[1], TRIANGLE[2]), TRIANGLE),
        "fig2": (0.75 / np.arange(1, K + 1) + 0.25, np.array([0.0, 1.0])),
    }
    ok = True
    parts = []
    for name, (Z, D) in runs.items():
        rep = track_sequence(Z, TrackerState.from_actions(D))
        good = rep.within_bound and rep.max_zero_sum_error <= 1e-9 and rep.min_drift >= -1.0
        ok &= good
        parts.append(f"{name}: dev {rep.max_deviation:.3f}/{rep.bound:.0f}, "
                     f"1'S err {rep.max_zero_sum_error:.1e}, min S {rep.min_drift:.3f}")
    return ok, "; ".join(parts)


def criterion_6():
    rng = np.random.default_rng(6)
    improving = flat = 0
    violations = []
    while improving < 1000:
        imp, bad = check_descent_instance(random_descent_instance(rng))
        improving += imp
        flat += not imp
        violations += bad
    return not violations, (f"{len(violations)} violations; {improving} improving and "
                            f"{flat} non-improving instances, both engines")


def criterion_7():
    toy = quadratic_toy()
    slater = SlaterCertificate.from_point(toy, [2.0])
    K = 10_000
    parts = []
    ok = True
    for alpha in (0.1, 0.01):
        traj = solve(toy, dual_subgradient(alpha), K, f_star=QUADRATIC_TOY_F_STAR, slater=slater)
        bad = traj.window_violations(QUADRATIC_TOY_F_STAR, burn_in=K // 10)
        checked = int(np.sum(~np.isnan(traj.bound_lower[K // 10:])))
        ok &= not bad and checked > 0
        parts.append(f"alpha={alpha}: {len(bad)}/{checked} checkpoints outside")
    return ok, "; ".join(parts)


def criterion_8():
    cfg = from_sections({"scenario": {"id": "unsync_queues", "steps": "5000"},
                         "unsync": {"b": "0.5 1.5", "n": "2", "d": "8"},
                         "solver": {"preset": "unsync_max_weight", "alpha": "0.05", "beta": "0.1"}})
    traj = scenarios.run(cfg).trajectories["unsync_queues"]
    f, mu = traj.f_avg[-1], traj.mu[-1]
    f_ok = abs(f - 2.5) <= 0.15
    mu_ok = np.abs(mu - np.array([1.0, 3.0])).max() <= 0.3
    return f_ok and mu_ok, (f"f(z_K) = {f:.4f} ({'ok' if f_ok else 'out'}), "
                            f"mu_K = {np.round(mu, 4).tolist()} ({'ok' if mu_ok else 'out'})")


def criterion_9():
    parts = []
    ok = True
    for name, P, arrivals in (("two-flow", two_flow_num(), None),
                              ("link", link_problem(), lambda: stochastic_arrivals([-0.5, 0.0], 0.5))):
        kw = lambda: {"arrivals": arrivals()} if arrivals else {}
        a = solve(P, classical_max_weight(0.05, 0.1), 1000, **kw())
        b = solve(P, classical_max_weight(0.05, 0.1, stolyar=True), 1000, **kw())
        same = bool(np.array_equal(a.x, b.x))
        ok &= same
        parts.append(f"{name}: {'identical' if same else 'DIFFER'} over 1000 steps")
    return ok, "; ".join(parts)


def criterion_10():
    violations = 0
    for tau in range(1, 11):
        rng = np.random.default_rng(100 + tau)
        alpha, g_bar = rng.uniform(0.01, 0.5), rng.uniform(0.5, 3)
        st = MultiplierState(3, alpha, max_delay=tau)
        for _ in range(2000):
            st.step_exact(rng.uniform(-g_bar, g_bar, 3))
            mu = delayed_multiplier_view(st, rng.integers(0, tau + 1, 3), tau)
            violations += np.abs(st.lam - mu).max() > alpha * g_bar * tau + 1e-12
    return violations == 0, f"{violations} violations for tau_bar = 1..10, 2000 steps each"


CRITERIA = [
    (1, "link example reproduction", criterion_1),
    (2, "Skorokhod closed form vs recursion", criterion_2),
    (3, "queue continuity", criterion_3),
    (4, "running-average certificate", criterion_4),
    (5, "tracker deviation bound", criterion_5),
    (6, "descent certificate", criterion_6),
    (7, "approximation window sandwich", criterion_7),
    (8, "unsynchronised queues vs oracle", criterion_8),
    (9, "Stolyar form equivalence", criterion_9),
    (10, "delayed multiplier certificate", criterion_10),
]


@pytest.mark.parametrize("n,title,check", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(n, title, check, record):
    ok, detail = check()
    record(n, title, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    for n, title, check in CRITERIA:
        ok, detail = check()
        print(f"{'PASS' if ok else 'FAIL'}  {n:>2}. {title}: {detail}", flush=True)
