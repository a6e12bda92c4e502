"""Named solvers built from a descent engine, a multiplier source and an action selector."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .descent import DescentConfig, UpdateSchedule, make_schedule
from .problem import (ConvexProblem, ProblemError, SlaterCertificate, minimize_lagrangian,
                      slater_dual_bound)
from .queues import MultiplierState, queue_update
from .tracker import (BlockTrackers, TrackerState, action_matrix_norm, decompose_to_simplex,
                      select_action)

logger = logging.getLogger(__name__)

Array = np.ndarray

DESCENTS = ("exact_argmin", "fw", "direct_actionset")
SOURCES = ("exact", "running_average_queue", "tracked_action_queue", "delayed", "stale_blockwise")
UPDATES = ("linear", "nonlinear_sampled", "nonlinear_linearized")


class PresetError(ValueError):
    pass


# arrivals ---------------------------------------------------------------------

@dataclass
class ArrivalSource:
    """Per-step arrival vectors b_k with mean ``mean``.

    ``deterministic_dither`` rounds the running target with error diffusion,
    so every prefix satisfies |sum (b_k - b)| <= 1/2. ``bernoulli_logged``
    draws i.i.d. {0, 1} values (scaled by the sign of the mean) and records
    the realised worst prefix deviation.
    """

    mean: Array
    sigma2: float
    kind: str = "deterministic_dither"
    rng: Optional[np.random.Generator] = None
    max_value: float = 1.0
    residual: Array = field(init=False)
    partial: Array = field(init=False)
    max_prefix_deviation: float = 0.0

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        self.residual = np.zeros_like(self.mean)
        self.partial = np.zeros_like(self.mean)

    def next(self) -> Array:
        mag = np.abs(self.mean)
        sign = np.sign(self.mean)
        if self.kind == "deterministic_dither":
            level = np.floor(self.residual + mag + 0.5)
            self.residual += mag - level
        elif self.kind == "constant":
            level = mag
        else:
            level = (self.rng.random(mag.shape) < mag).astype(float)
        out = sign * level
        self.partial += out - self.mean
        self.max_prefix_deviation = max(self.max_prefix_deviation, float(np.abs(self.partial).max()))
        return out

    @property
    def upper(self) -> float:
        """Largest possible |b_k| component."""
        if self.kind == "constant":
            return float(np.abs(self.mean).max(initial=0.0))
        return float(np.ceil(np.abs(self.mean)).max(initial=0.0))

    @property
    def within_cap(self) -> bool:
        return self.max_prefix_deviation <= self.sigma2 + 1e-12


def stochastic_arrivals(mean, sigma2: float, kind: str = "deterministic_dither",
                        rng: Optional[np.random.Generator] = None,
                        max_value: float = 1.0) -> ArrivalSource:
    """Arrival process with mean b and prefix deviation cap sigma2.

    Dithering is defined on integer levels {0, ..., max_value} (magnitudes,
    sign taken from the mean); Bernoulli draws need magnitudes in [0, 1].
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    if sigma2 <= 0 and kind != "constant":
        raise PresetError("deviation cap sigma2 must be positive")
    mag = np.abs(mean)
    if kind == "bernoulli_logged":
        if np.any(mag > 1):
            raise PresetError("Bernoulli arrivals need |b| in [0, 1]")
        if rng is None:
            raise PresetError("Bernoulli arrivals need a random generator")
    elif kind == "deterministic_dither":
        if np.any(mag > max_value):
            raise PresetError(f"dithered arrivals need |b| in [0, {max_value}]")
        if sigma2 < 0.5 and np.any(mag != np.round(mag)):
            raise PresetError("dithering guarantees prefix deviation 1/2; sigma2 must be >= 0.5")
    elif kind != "constant":
        raise PresetError(f"unknown arrival kind {kind!r}")
    return ArrivalSource(mean, sigma2, kind, rng, max_value)


@dataclass(frozen=True, eq=False)
class RandomizedActionMap:
    """Action x in D realises y with probability p[x, y]; ybar(x) = sum_y y p[x, y]."""

    D: Array
    p: Array

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        D = D.reshape(-1, 1) if D.ndim == 1 else D
        p = np.asarray(self.p, dtype=float)
        if p.shape != (len(D), len(D)) or np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0):
            raise PresetError("action map must be a row-stochastic |D| x |D| matrix")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "p", p)

    @property
    def effective(self) -> Array:
        return self.p @ self.D

    def sample(self, j: int, rng: np.random.Generator) -> Array:
        return self.D[rng.choice(len(self.D), p=self.p[j])]


def randomized_action_map(p, D) -> RandomizedActionMap:
    return RandomizedActionMap(D, p)


# presets --------------------------------------------------------------------

@dataclass(frozen=True)
class SolverPreset:
    name: str
    descent: str
    multiplier_source: str
    alpha: float
    beta: Optional[float] = None
    constraint_update: str = "linear"
    clip: Optional[float] = None
    sigma0: Optional[float] = None
    max_delay: int = 0
    constraint_owner: Optional[tuple[int, ...]] = None
    S_bar: float = 1.0
    tracker_strategy: str = "argmin_inf"
    stolyar: bool = False
    action_map: Optional[RandomizedActionMap] = None
    sampled_constraint: Optional[Callable[[int, Array], Array]] = None
    descent_config: Optional[DescentConfig] = None
    inner_tol: float = 1e-8

    def validate(self) -> "SolverPreset":
        if self.descent not in DESCENTS:
            raise PresetError(f"unknown descent engine {self.descent!r}")
        if self.multiplier_source not in SOURCES:
            raise PresetError(f"unknown multiplier source {self.multiplier_source!r}")
        if self.constraint_update not in UPDATES:
            raise PresetError(f"unknown constraint update {self.constraint_update!r}")
        if not self.alpha > 0:
            raise PresetError("alpha must be positive")
        if self.descent != "exact_argmin" and not (self.beta is not None and 0 < self.beta < 1):
            raise PresetError(f"{self.descent} descent needs beta in (0, 1)")
        if self.max_delay < 0:
            raise PresetError("max delay must be nonnegative")
        if self.multiplier_source == "running_average_queue" and self.descent == "exact_argmin":
            raise PresetError("running-average queues need a vertex-emitting descent (fw or direct)")
        if self.constraint_update == "nonlinear_sampled":
            if self.sampled_constraint is None or self.sigma0 is None:
                raise PresetError("sampled nonlinear updates need a constraint source and a declared sigma0")
        if self.stolyar and not (self.descent == "fw" and self.multiplier_source == "running_average_queue"):
            raise PresetError("the Stolyar form applies to classical max-weight only")
        if self.descent_config is not None:
            self.descent_config.validate()
        return self

    @property
    def uses_queue(self) -> bool:
        return self.multiplier_source in ("running_average_queue", "tracked_action_queue")


def dual_subgradient(alpha: float, **kw) -> SolverPreset:
    return SolverPreset("dual_subgradient", "exact_argmin", "exact", alpha, **kw)


def unsync_dual_subgradient(alpha: float, **kw) -> SolverPreset:
    return SolverPreset("unsync_dual_subgradient", "exact_argmin", "stale_blockwise", alpha, **kw)


def delayed_dual_subgradient(alpha: float, max_delay: int, **kw) -> SolverPreset:
    return SolverPreset("delayed_dual_subgradient", "exact_argmin", "delayed", alpha,
                        max_delay=max_delay, **kw)


def fw_dual(alpha: float, beta: float, **kw) -> SolverPreset:
    return SolverPreset("fw_dual", "fw", "exact", alpha, beta, **kw)


def classical_max_weight(alpha: float, beta: float, stolyar: bool = False, **kw) -> SolverPreset:
    return SolverPreset("classical_max_weight", "fw", "running_average_queue", alpha, beta,
                        stolyar=stolyar, **kw)


def dual_max_weight(alpha: float, beta: float, **kw) -> SolverPreset:
    return SolverPreset("dual_max_weight", "direct_actionset", "running_average_queue", alpha, beta, **kw)


def discrete_dual(alpha: float, **kw) -> SolverPreset:
    return SolverPreset("discrete_dual", "exact_argmin", "tracked_action_queue", alpha, **kw)


def unsync_discrete_dual(alpha: float, max_delay: int = 0, **kw) -> SolverPreset:
    return SolverPreset("unsync_discrete_dual", "exact_argmin", "tracked_action_queue", alpha,
                        max_delay=max_delay, **kw)


def unsync_max_weight(alpha: float, beta: float, **kw) -> SolverPreset:
    return SolverPreset("unsync_max_weight", "fw", "tracked_action_queue", alpha, beta, **kw)


def unsync_dual_max_weight(alpha: float, beta: float, **kw) -> SolverPreset:
    return SolverPreset("unsync_dual_max_weight", "direct_actionset", "tracked_action_queue",
                        alpha, beta, **kw)


PRESETS: dict[str, Callable[..., SolverPreset]] = {
    "dual_subgradient": dual_subgradient,
    "unsync_dual_subgradient": unsync_dual_subgradient,
    "delayed_dual_subgradient": delayed_dual_subgradient,
    "fw_dual": fw_dual,
    "classical_max_weight": classical_max_weight,
    "dual_max_weight": dual_max_weight,
    "discrete_dual": discrete_dual,
    "unsync_discrete_dual": unsync_discrete_dual,
    "unsync_max_weight": unsync_max_weight,
    "unsync_dual_max_weight": unsync_dual_max_weight,
}


# bounds ------------------------------------------------------------------------

def theorem3_window(k: Optional[float], alpha: float, eps: float, sigma0: float, g_bar: float,
                    lam_bar: float, m: int) -> tuple[float, float]:
    """Bounds on f(z_avg_k) - f*; ``k=None`` or ``inf`` gives the asymptotic pair."""
    if alpha <= 0:
        raise PresetError("alpha must be positive")
    if k is not None and not math.isinf(k) and k < 1:
        raise PresetError("k must be at least 1")
    slack_lo = alpha * m * (g_bar ** 2 / 2 + sigma0 * (1 + g_bar))
    slack_hi = alpha * m * (g_bar ** 2 + sigma0 * (1 + g_bar))
    if k is None or math.isinf(k):
        return -slack_lo - eps, eps + slack_hi
    lower = -2 * m * lam_bar ** 2 / (alpha * k) - slack_lo - eps
    upper = eps + slack_hi + 3 * m * lam_bar ** 2 / (2 * alpha * k)
    return lower, upper


def bounded_multiplier_radius(cert: SlaterCertificate, f_star: float, alpha: float, m: int,
                              g_bar: float, sigma0: float, eps: float, lam1_norm: float = 0.0) -> float:
    """lam_bar = 2Q + max(|lam_1|, Q + alpha m g_bar) with Q at delta = alpha m^2 (g^2/2 + sigma0 g) + eps."""
    if not cert.upsilon > 0:
        raise PresetError("Slater margin must be positive")
    delta = alpha * m ** 2 * (g_bar ** 2 / 2 + sigma0 * g_bar) + eps
    Q = (cert.f_bar - f_star + delta) / cert.upsilon
    return 2 * Q + max(lam1_norm, Q + alpha * m * g_bar)


def clip_admissible(clip: float, m: int, Q: float) -> bool:
    """Clip level accepted by the clipped-update corollary (clip <= m Q)."""
    return clip <= m * Q


# certificates -----------------------------------------------------------------

@dataclass(frozen=True)
class Certificate:
    sigma0: float
    rule: str
    parts: dict


def _increment_bar(problem: ConvexProblem, arrivals: Optional[ArrivalSource]) -> float:
    """Bound on |A x - b_k|_inf over actions and arrivals."""
    A, b = problem.linear
    Ax = float(np.abs(problem.vertices() @ A.T).max())
    bb = arrivals.upper if arrivals is not None else float(np.abs(b).max(initial=0.0))
    return Ax + bb


def preset_sigma0(problem: ConvexProblem, preset: SolverPreset, schedule: UpdateSchedule,
                  arrivals: Optional[ArrivalSource] = None) -> Certificate:
    """sigma0 mandated by the lemma behind the preset's multiplier source."""
    m = problem.m
    g_inf = problem.g_bar(np.inf)
    src = preset.multiplier_source
    tau = preset.max_delay
    sigma2 = arrivals.sigma2 if arrivals is not None and arrivals.kind != "constant" else 0.0
    if preset.sigma0 is not None:
        return Certificate(preset.sigma0, "declared", {})
    if src == "exact":
        return Certificate(0.0, "exact", {})
    if src == "delayed":
        return Certificate(g_inf * tau, "delay: g_bar*tau_bar", {"g_bar": g_inf, "tau_bar": tau})
    if src == "stale_blockwise":
        stale = max(schedule.N - 1, 0) + tau
        return Certificate(g_inf * stale, "staleness: g_bar*tau_max", {"g_bar": g_inf, "tau_max": stale})
    if preset.constraint_update == "nonlinear_linearized":
        sigma3 = tracking_bound(problem, preset) if src == "tracked_action_queue" else _diam_inf(problem) / preset.beta
        dg = problem.jac_bar()
        base = m * (g_inf + 2 * sigma3 * dg)
        return Certificate(base, "linearized: m(g_bar + 2 sigma3 dg_bar)",
                           {"g_bar": g_inf, "sigma3": sigma3, "dg_bar": dg})
    if problem.linear is None:
        raise PresetError("queue certificates need linear constraints or a declared sigma0")
    delay_term = _increment_bar(problem, arrivals) * tau
    if src == "running_average_queue":
        sigma1 = 2 * problem.Az_bar()
        base = 2 * m * (sigma1 / preset.beta + sigma2)
        return Certificate(base + delay_term, "running average: 2m(sigma1/beta + sigma2) + delay",
                           {"sigma1": sigma1, "sigma2": sigma2, "delay_term": delay_term})
    sigma3 = tracking_bound(problem, preset)
    A = problem.linear[0]
    rho = max(float(np.abs(A).sum(axis=1).max()), problem.Az_bar())
    base = 2 * m * (rho * sigma3 + sigma2)
    return Certificate(base + delay_term, "tracked: 2m(rho sigma3 + sigma2) + delay",
                       {"rho": rho, "sigma3": sigma3, "sigma2": sigma2, "delay_term": delay_term})


def _diam_inf(problem: ConvexProblem) -> float:
    V = problem.vertices()
    return float((V.max(axis=0) - V.min(axis=0)).max())


def tracking_bound(problem: ConvexProblem, preset: SolverPreset) -> float:
    """sigma3: worst prefix deviation allowed by the tracker(s) used for this problem."""
    blocks = problem.action_blocks()
    if blocks is not None:
        return max((len(D) - 1) * preset.S_bar * action_matrix_norm(np.asarray(D).T)
                   for D in blocks.values())
    D = problem.actions if problem.actions is not None else problem.vertices()
    return (len(D) - 1) * preset.S_bar * action_matrix_norm(D.T)


# trajectory ---------------------------------------------------------------------

@dataclass
class Trajectory:
    """Per-step record. Row k-1 holds slot k: its decision z_k, action x_k,
    and the multipliers after that slot's update."""

    z: Array
    x: Optional[Array]
    lam: Array
    mu: Array
    Q: Array
    z_avg: Array
    x_avg: Optional[Array]
    lam_avg: Array
    mu_avg: Array
    f_avg: Array
    g_violation_max: Array
    bound_lower: Array
    bound_upper: Array
    blocks: list
    sigma0: float = 0.0
    sigma_observed: float = 0.0
    certificate: Optional[Certificate] = None
    tracking_deviation: float = 0.0
    lam_bar: float = math.nan
    lam_norm_max: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.z)

    @property
    def certificate_ok(self) -> bool:
        return self.sigma_observed <= self.sigma0 + 1e-9

    def window_violations(self, f_star: float, burn_in: int = 0) -> list[int]:
        bad = []
        for k in range(burn_in, self.K):
            lo, hi = self.bound_lower[k], self.bound_upper[k]
            if np.isnan(lo):
                continue
            d = self.f_avg[k] - f_star
            if d < lo - 1e-12 or d > hi + 1e-12:
                bad.append(k + 1)
        return bad


# solve ----------------------------------------------------------------------------

def _partition(problem: ConvexProblem) -> tuple[tuple[int, ...], ...]:
    if problem.separability is None:
        return (tuple(range(problem.n)),)
    return problem.separability.partition


def _block_actions(problem: ConvexProblem, D: Array, u: tuple[int, ...]) -> Array:
    blocks = problem.action_blocks()
    if blocks is not None and u in blocks:
        return blocks[u]
    return np.unique(D[:, list(u)], axis=0)


def solve(problem: ConvexProblem, preset: SolverPreset, K: int,
          schedule: Optional[UpdateSchedule] = None, *, rng: Optional[np.random.Generator] = None,
          arrivals: Optional[ArrivalSource] = None, f_star: Optional[float] = None,
          slater: Optional[SlaterCertificate] = None, z1: Optional[Array] = None,
          lam1: Optional[Array] = None, checkpoint_every: Optional[int] = None,
          inner_eps: Optional[float] = None,
          sink: Optional[Callable[[int, Array, Array, Array], None]] = None) -> Trajectory:
    """Run a preset for K slots and return the populated trajectory.

    ``arrivals`` supplies b_k for linear constraints (default: the constant
    b). When ``f_star`` and ``slater`` are both given, the approximation
    window is evaluated every ``checkpoint_every`` slots (default ceil(K/100)).
    """
    preset.validate()
    rng = rng if rng is not None else np.random.default_rng(0)
    n, m = problem.n, problem.m
    parts = _partition(problem)
    full = tuple(range(n))
    if schedule is None:
        schedule = make_schedule([full], "full", n=n)
    if preset.descent != "exact_argmin" and problem.actions is None:
        raise PresetError("vertex-emitting descent needs an action set")
    D = problem.actions if problem.actions is not None else problem.vertices()
    D_eff = preset.action_map.effective if preset.action_map is not None else D
    linear = problem.linear
    if preset.uses_queue and preset.constraint_update == "linear" and linear is None:
        raise PresetError("linear queue updates need linear constraints")
    if arrivals is None and linear is not None:
        arrivals = stochastic_arrivals(linear[1], 1.0, "constant")
    cert = preset_sigma0(problem, preset, schedule, arrivals)
    sigma0 = cert.sigma0

    tau_bar = preset.max_delay
    owner = preset.constraint_owner
    per_block_views = (tau_bar > 0 and owner is not None) or preset.multiplier_source == "stale_blockwise"
    state = MultiplierState(m, preset.alpha, clip=preset.clip, max_delay=tau_bar,
                            lam=lam1 if lam1 is not None else np.zeros(m))
    Q_direct = state.mu / preset.alpha

    block_actions = problem.action_blocks()
    trackers = None
    global_tracker = None
    if preset.multiplier_source == "tracked_action_queue":
        if block_actions is not None:
            trackers = BlockTrackers.build(block_actions, preset.S_bar, preset.tracker_strategy)
        else:
            global_tracker = TrackerState.from_actions(D, S_bar=preset.S_bar, strategy=preset.tracker_strategy)

    if z1 is not None:
        z = np.asarray(z1, dtype=float).copy()
    elif preset.descent == "exact_argmin":
        z = _start(problem)
    else:
        z = D[0].astype(float).copy()
    stale_view = {u: state.lam.copy() for u in parts}

    g_inf = problem.g_bar(np.inf) if m else 0.0
    g_two = problem.g_bar(2) if m else 0.0
    if inner_eps is None:
        if preset.descent == "exact_argmin":
            inner_eps = 0.0 if (problem.argmin or problem.block_argmin) else preset.inner_tol
        elif preset.descent_config is not None:
            inner_eps = (len(set(schedule.pattern)) + 1) * preset.descent_config.eps_prime
        else:
            inner_eps = math.nan
    lam_bar = math.nan
    if slater is not None and f_star is not None and m:
        lam_bar = bounded_multiplier_radius(slater, f_star, preset.alpha, m, max(g_inf, g_two),
                                            sigma0, 0.0 if math.isnan(inner_eps) else inner_eps,
                                            float(np.linalg.norm(state.lam)))
        if preset.clip is not None:
            lam_bar = min(lam_bar, preset.clip * math.sqrt(m))
    every = checkpoint_every or max(1, math.ceil(K / 100))

    Z = np.empty((K, n))
    X = np.empty((K, n)) if preset.multiplier_source != "exact" or preset.descent != "exact_argmin" else None
    LAM = np.empty((K, m))
    MU = np.empty((K, m))
    F_AVG = np.empty(K)
    GV = np.empty(K)
    LO = np.full(K, np.nan)
    HI = np.full(K, np.nan)
    blocks_used = []
    z_sum = np.zeros(n)
    x_sum = np.zeros(n)
    dev_sum = np.zeros(n)
    sigma_obs = 0.0
    dev_max = 0.0
    lam_norm_max = 0.0

    for k in range(K):
        u = schedule.block(k)
        blocks_used.append(u)
        sub = [b for b in parts if set(b) <= set(u)] if len(parts) > 1 else [u]

        # multiplier views, one per updated block
        views = {}
        for b in sub:
            if preset.multiplier_source == "stale_blockwise":
                stale_view[b] = state.lam.copy()
                views[b] = stale_view[b]
            else:
                base = "lam" if preset.multiplier_source in ("exact", "delayed") else "mu"
                views[b] = _view(state, base, b, parts, owner, tau_bar, rng)
        if preset.multiplier_source == "stale_blockwise":
            gap = max(float(np.abs(state.lam - v).max()) for v in stale_view.values()) if m else 0.0
        else:
            gap = max(float(np.abs(state.lam - v).max()) for v in views.values()) if m else 0.0
        sigma_obs = max(sigma_obs, gap / preset.alpha)
        mu_used = views[sub[0]]

        # descent
        z_prev = z.copy()
        x_vertex = None
        j_vertex = None
        if preset.descent == "exact_argmin":
            if len(sub) == 1 and sub[0] == full:
                z, res = minimize_lagrangian(problem, mu_used, z0=z, tol=preset.inner_tol)
            else:
                for b in sub:
                    z, res = minimize_lagrangian(problem, views[b], block=b, z0=z, tol=preset.inner_tol)
        elif preset.stolyar:
            grad_U = -problem.grad_f(z)
            scores = D_eff @ (grad_U - preset.alpha * (linear[0].T @ Q_direct))
            j_vertex = int(np.argmax(scores))
            x_vertex = D[j_vertex]
            z = z + preset.beta * (D_eff[j_vertex] - z)
        else:
            z, x_vertex, j_vertex = _vertex_step(problem, preset, z, u, sub, views, D, D_eff, parts,
                                                 block_actions)

        # exact multiplier follows the decision
        state.step_exact(problem.g(z))

        # actions and approximate multiplier
        x = None
        if preset.multiplier_source == "tracked_action_queue":
            if trackers is not None:
                x = trackers.step(z)
            else:
                a = decompose_to_simplex(z, D)
                x, _ = select_action(global_tracker, a)
        elif x_vertex is not None:
            x = x_vertex
        if preset.uses_queue:
            x_in = x
            if preset.action_map is not None:
                j_act = j_vertex if j_vertex is not None else _index_of(D, x)
                x_in = preset.action_map.effective[j_act]
            if preset.constraint_update == "linear":
                b_k = arrivals.next()
                inc = linear[0] @ x_in - b_k
            elif preset.constraint_update == "nonlinear_linearized":
                zl = z if preset.multiplier_source == "tracked_action_queue" else z_prev
                inc = problem.g(zl) + problem.jac_g(zl) @ (x_in - zl)
            else:
                inc = np.atleast_1d(preset.sampled_constraint(k, x_in))
            state.step_approx(inc)
            if preset.stolyar:
                Q_direct = np.maximum(Q_direct + inc, 0.0)
        else:
            state.set_mu(mu_used)
        state.tick()
        if sink is not None:
            sink(k + 1, state.lam.copy(), state.mu.copy(), state.Q)

        Z[k] = z
        if X is not None:
            X[k] = x if x is not None else z
            x_sum += X[k]
            dev_sum += z - X[k]
            dev_max = max(dev_max, float(np.abs(dev_sum).max()))
        LAM[k] = state.lam
        MU[k] = state.mu
        lam_norm_max = max(lam_norm_max, float(np.linalg.norm(state.lam)))
        z_sum += z
        zbar = z_sum / (k + 1)
        F_AVG[k] = problem.f(zbar)
        GV[k] = float(problem.g(zbar).max()) if m else -np.inf
        if not math.isnan(lam_bar) and ((k + 1) % every == 0 or k + 1 == K):
            lo, hi = theorem3_window(k + 1, preset.alpha, 0.0 if math.isnan(inner_eps) else inner_eps,
                                     sigma0, max(g_inf, g_two), lam_bar, m)
            LO[k], HI[k] = lo, hi

    if m and preset.uses_queue:
        sigma_obs = max(sigma_obs, float(np.abs(state.lam - state.mu).max()) / preset.alpha)
    if sigma_obs > sigma0 + 1e-9:
        logger.warning("%s: observed |lam - mu|/alpha = %.4g exceeds sigma0 = %.4g",
                       preset.name, sigma_obs, sigma0)
    if not math.isnan(lam_bar) and lam_norm_max > lam_bar + 1e-9:
        logger.warning("%s: |lam|_2 reached %.4g above radius %.4g", preset.name, lam_norm_max, lam_bar)

    counts = np.arange(1, K + 1)[:, None]
    traj = Trajectory(
        z=Z, x=X, lam=LAM, mu=MU, Q=MU / preset.alpha,
        z_avg=np.cumsum(Z, axis=0) / counts if K else Z,
        x_avg=(np.cumsum(X, axis=0) / counts if K else X) if X is not None else None,
        lam_avg=np.cumsum(LAM, axis=0) / counts if K else LAM,
        mu_avg=np.cumsum(MU, axis=0) / counts if K else MU,
        f_avg=F_AVG, g_violation_max=GV, bound_lower=LO, bound_upper=HI, blocks=blocks_used,
        sigma0=sigma0, sigma_observed=sigma_obs, certificate=cert, tracking_deviation=dev_max,
        lam_bar=lam_bar, lam_norm_max=lam_norm_max,
        meta={"preset": preset.name, "alpha": preset.alpha, "beta": preset.beta,
              "eps": inner_eps, "g_bar_inf": g_inf, "g_bar_2": g_two, "f_star": f_star,
              "window_every": every, "sigma0_rule": cert.rule},
    )
    if per_block_views:
        traj.meta["per_block_views"] = True
    return traj


def _start(problem: ConvexProblem) -> Array:
    if problem.box is not None:
        return problem.box.lower.copy()
    return problem.actions[0].astype(float).copy()


def _index_of(D: Array, x: Array) -> int:
    return int(np.flatnonzero(np.all(np.abs(D - x) <= 1e-12, axis=1))[0])


def _view(state: MultiplierState, base: str, block, parts, owner, tau_bar, rng) -> Array:
    current = state.lam if base == "lam" else state.mu
    if tau_bar <= 0:
        return current.copy()
    b_index = parts.index(block) if block in parts else -1
    tau = rng.integers(0, tau_bar + 1, size=state.m)
    if owner is not None:
        tau = np.where(np.asarray(owner) == b_index, 0, tau)
    hist = state.history if base == "lam" else state.mu_history
    return np.array([hist[-1 - t][i] for i, t in enumerate(tau)])


def _vertex_step(problem, preset, z, u, sub, views, D, D_eff, parts, block_actions):
    """Frank-Wolfe or direct step on the Lagrangian over the updated blocks."""
    beta = preset.beta
    z_new = z.copy()
    product = block_actions is not None and all(b in block_actions for b in sub)
    if product and preset.action_map is None:
        # per-block choice; coordinates outside the updated blocks echo z
        x = z.copy()
        for b in sub:
            cols = list(b)
            Db = block_actions[b]
            mu_b = views[b]
            if preset.descent == "fw":
                grad = problem.lagrangian_grad(z, mu_b)
                j = int(np.argmin(Db @ grad[cols]))
            else:
                cands = z[cols] + beta * (Db - z[cols])
                vals = []
                for c in cands:
                    w = z.copy()
                    w[cols] = c
                    vals.append(problem.f(w) + float(mu_b @ problem.g(w)))
                j = int(np.argmin(vals))
            x[cols] = Db[j]
            z_new[cols] = z[cols] + beta * (Db[j] - z[cols])
        hit = np.flatnonzero(np.all(np.abs(D - x) <= 1e-12, axis=1))
        return z_new, x, (int(hit[0]) if hit.size else None)
    mu_b = views[sub[0]]
    cols = list(u)
    if preset.descent == "fw":
        grad = problem.lagrangian_grad(z, mu_b)
        j = int(np.argmin(D_eff[:, cols] @ grad[cols]))
    else:
        vals = []
        for y in D_eff:
            w = z.copy()
            w[cols] = z[cols] + beta * (y[cols] - z[cols])
            vals.append(problem.f(w) + float(mu_b @ problem.g(w)))
        j = int(np.argmin(vals))
    z_new[cols] = z[cols] + beta * (D_eff[j, cols] - z[cols])
    return z_new, D[j].copy(), j


# oracles -------------------------------------------------------------------------

def estimate_f_star(problem: ConvexProblem, K: int = 200_000, alpha: float = 1e-3) -> dict:
    """Long exact dual-subgradient run; f of the second-half average estimates f*."""
    lam = np.zeros(problem.m)
    z = _start(problem)
    tail = np.zeros(problem.n)
    lam_tail = np.zeros(problem.m)
    half = K // 2
    for k in range(K):
        z, _ = minimize_lagrangian(problem, lam, z0=z)
        lam = queue_update(lam, alpha * problem.g(z))
        if k >= half:
            tail += z
            lam_tail += lam
    zt = tail / (K - half)
    return {"f_star": problem.f(zt), "z": zt, "lam": lam_tail / (K - half),
            "max_violation": float(problem.g(zt).max()) if problem.m else 0.0,
            "alpha": alpha, "steps": K}


def dual_maximizer_grid(problem: ConvexProblem, center: Array, radius: float = 0.5,
                        points: int = 21, rounds: int = 4) -> Array:
    """Grid search for argmax q, refined around ``center``; for plots only."""
    from itertools import product
    c = np.maximum(np.asarray(center, dtype=float), 0.0)
    r = radius
    for _ in range(rounds):
        axes = [np.linspace(max(ci - r, 0.0), ci + r, points) for ci in c]
        best, best_q = c, -np.inf
        for lam in product(*axes):
            lam = np.array(lam)
            z, _ = minimize_lagrangian(problem, lam)
            q = problem.f(z) + float(lam @ problem.g(z))
            if q > best_q:
                best, best_q = lam, q
        c = best
        r /= 4
    return c
