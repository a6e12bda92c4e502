"""Scenario runners: the link example, unsynchronised queues, figure demos, custom problems."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .. import problems
from ..descent import DescentConfig, DescentConfigError, lagrangian_alpha_cap, make_schedule, min_eps_prime
from ..problem import Box, ConvexProblem, Curvature, SeparableStructure, SlaterCertificate
from ..queues import queue_update
from ..solvers import (PRESETS, PresetError, SolverPreset, Trajectory, estimate_f_star, solve,
                       stochastic_arrivals)
from ..tracker import TrackerState, track_sequence, two_timescale_track
from .config import ConfigError, ScenarioConfig, parse_blocks

logger = logging.getLogger(__name__)


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class ScenarioResult:
    name: str
    tables: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)


def _trajectory_checks(traj: Trajectory, f_star: Optional[float], burn_frac: float = 0.1,
                       sigma3: Optional[float] = None) -> list[Check]:
    out = [Check("multiplier certificate", traj.certificate_ok,
                 f"max |lam-mu|/alpha = {traj.sigma_observed:.6g} vs sigma0 = {traj.sigma0:.6g}")]
    if f_star is not None and not math.isnan(traj.lam_bar):
        burn = int(math.ceil(burn_frac * traj.K))
        bad = traj.window_violations(f_star, burn)
        out.append(Check("approximation window", not bad,
                         f"{len(bad)} checkpoint violations after burn-in {burn}"))
        out.append(Check("multiplier radius", traj.lam_norm_max <= traj.lam_bar + 1e-9,
                         f"max |lam|_2 = {traj.lam_norm_max:.6g} vs {traj.lam_bar:.6g}"))
    if sigma3 is not None:
        out.append(Check("tracking deviation", traj.tracking_deviation <= sigma3 + 1e-9,
                         f"{traj.tracking_deviation:.6g} vs {sigma3:.6g}"))
    return out


# link ---------------------------------------------------------------------------------

def link_preset(cfg: ScenarioConfig) -> tuple[SolverPreset, float, int]:
    b = cfg.get_float("link", "b", 0.5)
    tau = cfg.get_int("link", "tau_bar", 5)
    alpha = cfg.get_float("solver", "alpha", 0.1)
    if not 0.0 <= b <= 1.0:
        raise ConfigError(f"link arrival rate b={b} must lie in [0, 1]")
    if tau < 0:
        raise ConfigError("tau_bar must be nonnegative")
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    preset = PRESETS["unsync_discrete_dual"](
        alpha, max_delay=tau, constraint_owner=(0, 1),
        S_bar=cfg.get_float("solver", "S_bar", 1.0),
        tracker_strategy=cfg.get("solver", "strategy", "argmin_inf"))
    return preset, b, tau


def run_link_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    """Two-node tandem link: delayed queue views, per-node tracking, dithered arrivals."""
    preset, b, tau = link_preset(cfg)
    P = problems.link_problem(b)
    opt = problems.link_optimum(b)
    kind = cfg.get("arrivals", "kind", "deterministic_dither")
    rng = cfg.rng_for()
    arrivals = stochastic_arrivals([-b, 0.0], cfg.get_float("arrivals", "sigma2", 0.5), kind,
                                   rng=cfg.rng_for(10_000))
    slater = problems.link_slater(P, b) if b < 1 else None
    traj = solve(P, preset, cfg.steps, rng=rng, arrivals=arrivals, f_star=opt["f_star"], slater=slater)
    from ..solvers import tracking_bound
    res = ScenarioResult("link")
    res.trajectories["link"] = traj
    res.checks = _trajectory_checks(traj, opt["f_star"], sigma3=tracking_bound(P, preset))
    res.summary = {
        "f_star": opt["f_star"], "lam_star": opt["lam_star"], "steps": cfg.steps,
        "f_avg_final": traj.f_avg[-1] if traj.K else math.nan,
        "alphaQ_final": traj.mu[-1] if traj.K else [],
        "lam_final": traj.lam[-1] if traj.K else [],
        "z_avg_final": traj.z_avg[-1] if traj.K else [],
        "sigma0": traj.sigma0, "sigma_observed": traj.sigma_observed,
        "arrival_max_prefix_deviation": arrivals.max_prefix_deviation,
        "b": b, "tau_bar": tau, "alpha": preset.alpha,
    }
    return res


# unsynchronised queues ----------------------------------------------------------------

def unsync_setup(cfg: ScenarioConfig):
    n = cfg.get_int("unsync", "n", 2)
    d = cfg.get_int("unsync", "d", 8)
    b = cfg.get_vector("unsync", "b", [0.5, 1.5] if n == 2 else [0.5] * n)
    if b.shape != (n,):
        raise ConfigError(f"[unsync] b needs {n} entries")
    if np.any(b < 0) or np.any(b > d):
        raise ConfigError(f"arrival means b={b.tolist()} must lie in [0, d={d}]")
    alpha = cfg.get_float("solver", "alpha", 0.05)
    beta = cfg.get_float("solver", "beta", 0.1)
    name = cfg.get("solver", "preset", "unsync_max_weight")
    if name not in ("unsync_max_weight", "unsync_dual_max_weight"):
        raise ConfigError(f"unsync scenario supports unsync_max_weight or unsync_dual_max_weight, not {name}")
    P = problems.unsync_queues(n, d, b)
    schedule = make_schedule([(i,) for i in range(n)], "cyclic", n=n)
    dcfg = descent_config_for(cfg, P, schedule, beta, alpha)
    preset = PRESETS[name](alpha, beta, descent_config=dcfg,
                           S_bar=cfg.get_float("solver", "S_bar", 1.0),
                           tracker_strategy=cfg.get("solver", "strategy", "argmin_inf"))
    return P, schedule, preset, b, d


def descent_config_for(cfg: ScenarioConfig, P: ConvexProblem, schedule, beta: float,
                       alpha: float) -> DescentConfig:
    """Check the step-size cap and the Lagrangian slow-variation rule."""
    gamma = cfg.get_float("solver", "gamma", 0.5)
    gamma1 = cfg.get_float("solver", "gamma1", 0.2)
    mu_F = P.curvature.lagrangian(0.0) if P.curvature is not None else 1.0
    if P.curvature is not None and any(P.curvature.mu_g):
        clip = cfg.get_float("solver", "clip")
        if clip is None:
            raise ConfigError("nonlinear constraints need a multiplier clip to bound the Lagrangian curvature")
        mu_F = P.curvature.lagrangian(clip)
    x_bar = P.diameter()
    eps = cfg.get_float("solver", "eps_prime")
    try:
        if eps is None:
            eps = min_eps_prime(beta, gamma, schedule.N, mu_F, x_bar)
        dcfg = DescentConfig(beta, eps, gamma, gamma1, schedule.N, mu_F, x_bar).validate()
    except DescentConfigError as exc:
        raise ConfigError(str(exc)) from exc
    g2 = P.g_bar(2)
    cap = lagrangian_alpha_cap(beta, eps, gamma, gamma1, g2)
    if alpha > cap * (1 + 1e-12):
        raise ConfigError(
            f"slow-variation rule violated: alpha={alpha:g} > gamma1*gamma*beta*eps'/(2*g_bar) = {cap:g}")
    return dcfg


def run_unsync_queues_scenario(cfg: ScenarioConfig) -> ScenarioResult:
    P, schedule, preset, b, d = unsync_setup(cfg)
    opt = problems.unsync_optimum(b)
    arrivals = stochastic_arrivals(-b, cfg.get_float("arrivals", "sigma2", 0.5),
                                   cfg.get("arrivals", "kind", "deterministic_dither"),
                                   rng=cfg.rng_for(10_000), max_value=d)
    slater = problems.unsync_slater(P, b, d) if np.all(b < d) else None
    traj = solve(P, preset, cfg.steps, schedule, rng=cfg.rng_for(), arrivals=arrivals,
                 f_star=opt["f_star"], slater=slater)
    from ..solvers import tracking_bound
    res = ScenarioResult("unsync_queues")
    res.trajectories["unsync_queues"] = traj
    res.checks = _trajectory_checks(traj, opt["f_star"], sigma3=tracking_bound(P, preset))
    res.summary = {
        "f_star": opt["f_star"], "lam_star": opt["lam_star"], "steps": cfg.steps,
        "preset": preset.name, "b": b, "d": d, "alpha": preset.alpha, "beta": preset.beta,
        "eps_prime": preset.descent_config.eps_prime, "N": schedule.N,
        "f_avg_final": traj.f_avg[-1] if traj.K else math.nan,
        "mu_final": traj.mu[-1] if traj.K else [],
        "lam_final": traj.lam[-1] if traj.K else [],
        "sigma0": traj.sigma0, "sigma_observed": traj.sigma_observed,
    }
    return res


# figure demos --------------------------------------------------------------------------

def fig1_series(K: int, rng: np.random.Generator, alpha: float = 1.0, beta: float = 0.1,
                b: float = 0.5) -> tuple[dict, dict]:
    """Exact vs running-average queue with random {0,1} actions (A = 1, b_k = b)."""
    x = rng.integers(0, 2, size=K).astype(float)
    z = b
    lam = mu = 0.0
    cols = {k: np.empty(K) for k in ("x", "z", "lambda", "mu", "gap", "lemma4_rhs", "lemma6_bound")}
    run = 0.0
    run_max = 0.0
    sigma1 = 2.0  # 2 max_C |A z|
    bound6 = 2 * 1 * alpha * (sigma1 / beta + 0.0)
    for k in range(K):
        z = (1 - beta) * z + beta * x[k]
        lam = max(lam + alpha * (z - b), 0.0)
        mu = max(mu + alpha * (x[k] - b), 0.0)
        run += alpha * ((z - b) - (x[k] - b))
        run_max = max(run_max, abs(run))
        cols["x"][k], cols["z"][k] = x[k], z
        cols["lambda"][k], cols["mu"][k] = lam, mu
        cols["gap"][k] = abs(lam - mu)
        cols["lemma4_rhs"][k] = 2 * run_max
        cols["lemma6_bound"][k] = bound6
    table = {"k": np.arange(1, K + 1), **cols}
    summary = {"max_gap": float(cols["gap"].max()) if K else 0.0, "lemma6_bound": bound6,
               "alpha": alpha, "beta": beta, "b": b}
    return table, summary


def fig2_series(K: int, S_bar: float = 1.0) -> tuple[dict, dict]:
    k = np.arange(1, K + 1)
    z = 0.75 / k + 0.25
    st = TrackerState.from_actions([0.0, 1.0], S_bar=S_bar)
    rep = track_sequence(z, st)
    return _track_table(k, z, rep), {"max_deviation": rep.max_deviation, "bound": rep.bound}


def fig5_series(K: int, rng: np.random.Generator, hold: int = 10, S_bar: float = 1.0):
    slow = rng.random(int(math.ceil(K / hold)))
    st = TrackerState.from_actions([0.0, 1.0], S_bar=S_bar)
    rep = two_timescale_track(slow, hold, st)
    z = np.repeat(slow, hold)[:K]
    rep_x = rep.x[:K, 0]
    k = np.arange(1, K + 1)
    dev = np.abs(np.cumsum(z - rep_x))
    table = {"k": k, "z": z, "x": rep_x, "sum_z": np.cumsum(z), "sum_x": np.cumsum(rep_x),
             "deviation": dev, "bound": np.full(K, rep.bound)}
    return table, {"max_deviation": float(dev.max()) if K else 0.0, "bound": rep.bound, "hold": hold}


def _track_table(k, z, rep):
    x = rep.x[:, 0]
    return {"k": k, "z": z, "x": x, "sum_z": np.cumsum(z), "sum_x": np.cumsum(x),
            "deviation": rep.deviation, "bound": np.full(len(k), rep.bound)}


def run_fig_demos(cfg: ScenarioConfig, which: tuple[str, ...] = ("fig1", "fig2", "fig5")) -> ScenarioResult:
    res = ScenarioResult("+".join(which))
    K = cfg.steps
    if "fig1" in which:
        t, s = fig1_series(K, cfg.rng_for(1), cfg.get_float("fig1", "alpha", 1.0),
                           cfg.get_float("fig1", "beta", 0.1), cfg.get_float("fig1", "b", 0.5))
        res.tables["fig1"], res.summary["fig1"] = t, s
        ok = bool(np.all(t["gap"] <= t["lemma4_rhs"] + 1e-12) and np.all(t["gap"] <= t["lemma6_bound"]))
        res.checks.append(Check("fig1 queue continuity", ok, f"max gap {s['max_gap']:.6g}"))
    if "fig2" in which:
        t, s = fig2_series(K, cfg.get_float("solver", "S_bar", 1.0))
        res.tables["fig2"], res.summary["fig2"] = t, s
        res.checks.append(Check("fig2 tracking bound", s["max_deviation"] <= s["bound"] + 1e-9,
                                f"{s['max_deviation']:.6g} vs {s['bound']:.6g}"))
    if "fig5" in which:
        t, s = fig5_series(K, cfg.rng_for(5), cfg.get_int("fig5", "hold", 10),
                           cfg.get_float("solver", "S_bar", 1.0))
        res.tables["fig5"], res.summary["fig5"] = t, s
        res.checks.append(Check("fig5 tracking bound", s["max_deviation"] <= s["bound"] + 1e-9,
                                f"{s['max_deviation']:.6g} vs {s['bound']:.6g}"))
    return res


# custom -------------------------------------------------------------------------------

def custom_problem(cfg: ScenarioConfig) -> tuple[ConvexProblem, Optional[float], Optional[SlaterCertificate]]:
    """Separable quadratic with linear constraints: f = sum w_i (z_i - c_i)^2, A z <= b."""
    kind = cfg.get("problem", "kind", "separable_quadratic")
    if kind != "separable_quadratic":
        raise ConfigError(f"unsupported problem kind {kind!r}")
    A = cfg.get_matrix("problem", "A")
    bvec = cfg.get_vector("problem", "b")
    if A is None or bvec is None:
        raise ConfigError("[problem] needs A and b")
    m, n = A.shape
    if bvec.shape != (m,):
        raise ConfigError("[problem] b must have one entry per row of A")
    w = cfg.get_vector("problem", "weights", np.ones(n))
    c = cfg.get_vector("problem", "centers", np.zeros(n))
    if w.shape != (n,) or c.shape != (n,) or np.any(w <= 0):
        raise ConfigError("[problem] weights (positive) and centers need one entry per coordinate")
    levels = cfg.get_vector("problem", "levels")
    actions = None
    box = None
    if levels is not None:
        import itertools
        actions = np.array(list(itertools.product(np.unique(levels), repeat=n)))
    else:
        lo = cfg.get_vector("problem", "lower", np.zeros(n))
        hi = cfg.get_vector("problem", "upper", np.ones(n))
        box = Box(lo, hi)
    blocks_txt = cfg.get("problem", "blocks")
    sep = SeparableStructure(tuple(parse_blocks(blocks_txt))) if blocks_txt else None
    lo_b = actions.min(axis=0) if actions is not None else box.lower
    hi_b = actions.max(axis=0) if actions is not None else box.upper

    def argmin(mu):
        return np.clip(c - (A.T @ mu) / (2 * w), lo_b, hi_b)

    def block_argmin(u, mu):
        u = list(u)
        return np.clip(c[u] - (A[:, u].T @ mu) / (2 * w[u]), lo_b[u], hi_b[u])

    separable_constraints = sep is not None
    P = ConvexProblem(
        n=n, m=m,
        objective=lambda z: float(w @ (np.asarray(z) - c) ** 2),
        constraints=lambda z: A @ z - bvec,
        objective_grad=lambda z: 2 * w * (np.asarray(z) - c),
        box=box, actions=actions, separability=sep,
        curvature=Curvature(float(w.max()), tuple(0.0 for _ in range(m))),
        linear=(A, bvec), argmin=argmin,
        block_argmin=block_argmin if separable_constraints else None,
        name="custom",
    )
    f_star = cfg.get_float("problem", "f_star")
    zs = cfg.get_vector("problem", "slater_point")
    slater = SlaterCertificate.from_point(P, zs) if zs is not None else None
    return P, f_star, slater


def custom_preset(cfg: ScenarioConfig, P: ConvexProblem, schedule) -> SolverPreset:
    name = cfg.get("solver", "preset", "dual_subgradient")
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    alpha = cfg.get_float("solver", "alpha", 0.01)
    beta = cfg.get_float("solver", "beta")
    kw = {}
    for key, conv in (("clip", float), ("S_bar", float)):
        v = cfg.get_float("solver", key)
        if v is not None:
            kw[key] = v
    if cfg.get("solver", "strategy"):
        kw["tracker_strategy"] = cfg.get("solver", "strategy")
    delay = cfg.get_int("solver", "max_delay", 0)
    try:
        if name in ("fw_dual", "classical_max_weight", "dual_max_weight", "unsync_max_weight",
                    "unsync_dual_max_weight"):
            if beta is None:
                raise ConfigError(f"preset {name} needs [solver] beta")
            kw["descent_config"] = descent_config_for(cfg, P, schedule, beta, alpha)
            preset = PRESETS[name](alpha, beta, max_delay=delay, **kw)
        elif name == "delayed_dual_subgradient":
            preset = PRESETS[name](alpha, delay, **kw)
        else:
            preset = PRESETS[name](alpha, max_delay=delay, **kw)
        return preset.validate()
    except PresetError as exc:
        raise ConfigError(str(exc)) from exc


def custom_schedule(cfg: ScenarioConfig, P: ConvexProblem):
    policy = cfg.get("solver", "schedule", "full")
    sets = P.separability.update_sets if P.separability is not None else [tuple(range(P.n))]
    if policy == "cyclic" and P.separability is None:
        raise ConfigError("cyclic schedules need [problem] blocks")
    try:
        return make_schedule(sets, policy, n=P.n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_custom(cfg: ScenarioConfig) -> ScenarioResult:
    P, f_star, slater = custom_problem(cfg)
    schedule = custom_schedule(cfg, P)
    preset = custom_preset(cfg, P, schedule)
    arrivals = None
    kind = cfg.get("arrivals", "kind")
    if kind:
        levels = P.vertices()
        arrivals = stochastic_arrivals(P.linear[1], cfg.get_float("arrivals", "sigma2", 0.5), kind,
                                       rng=cfg.rng_for(10_000),
                                       max_value=float(np.ceil(np.abs(P.linear[1]).max(initial=1.0))))
    traj = solve(P, preset, cfg.steps, schedule, rng=cfg.rng_for(), arrivals=arrivals,
                 f_star=f_star, slater=slater)
    res = ScenarioResult("custom")
    res.trajectories["custom"] = traj
    res.checks = _trajectory_checks(traj, f_star)
    res.summary = {"preset": preset.name, "f_star": f_star, "steps": cfg.steps,
                   "f_avg_final": traj.f_avg[-1] if traj.K else math.nan,
                   "sigma0": traj.sigma0, "sigma_observed": traj.sigma_observed}
    return res


# dispatch ------------------------------------------------------------------------------

def validate(cfg: ScenarioConfig) -> None:
    """Raise ConfigError for any inadmissible setting without running."""
    if cfg.scenario == "link":
        link_preset(cfg)
    elif cfg.scenario == "unsync_queues":
        unsync_setup(cfg)
    elif cfg.scenario == "custom":
        P, _, _ = custom_problem(cfg)
        custom_preset(cfg, P, custom_schedule(cfg, P))
    elif cfg.scenario in ("fig5", "two_timescale"):
        if cfg.get_int("fig5", "hold", 10) < 1:
            raise ConfigError("hold must be at least 1")
    S_bar = cfg.get_float("solver", "S_bar", 1.0)
    if S_bar < 1:
        raise ConfigError(f"drift floor S_bar={S_bar} must be at least 1")


def run(cfg: ScenarioConfig) -> ScenarioResult:
    validate(cfg)
    if cfg.scenario == "link":
        return run_link_scenario(cfg)
    if cfg.scenario == "unsync_queues":
        return run_unsync_queues_scenario(cfg)
    if cfg.scenario == "custom":
        return run_custom(cfg)
    which = {"fig1": ("fig1",), "fig2": ("fig2",), "fig5": ("fig5",),
             "two_timescale": ("fig5",)}[cfg.scenario]
    return run_fig_demos(cfg, which)


def oracle(cfg: ScenarioConfig, K: int = 200_000, alpha: float = 1e-3) -> dict:
    """Long exact dual run on the scenario's problem; the estimate is flagged as derived."""
    if cfg.scenario == "link":
        P = problems.link_problem(cfg.get_float("link", "b", 0.5))
    elif cfg.scenario == "unsync_queues":
        P = unsync_setup(cfg)[0]
    elif cfg.scenario == "custom":
        P = custom_problem(cfg)[0]
    else:
        raise ConfigError(f"scenario {cfg.scenario} has no optimisation problem")
    out = estimate_f_star(P, K, alpha)
    out["source"] = "derived: long-horizon exact dual subgradient"
    return out
