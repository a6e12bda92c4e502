"""Descent over conv(D) with discrete actions: direct and Frank-Wolfe steps, schedules."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Protocol, Sequence

import numpy as np

from .problem import ProblemError, check_admissible

Array = np.ndarray


class DescentConfigError(ValueError):
    """A descent parameter violates a step-size or slow-variation condition."""


@dataclass(frozen=True)
class DescentConfig:
    beta: float
    eps_prime: float
    gamma: float = 0.5
    gamma1: float = 0.2
    N: int = 1
    mu_F: float = 1.0
    x_bar: float = 1.0

    def beta_cap(self) -> float:
        return beta_cap(self.eps_prime, self.gamma, self.N, self.mu_F, self.x_bar)

    def validate(self) -> "DescentConfig":
        if not 0.0 < self.beta < 1.0:
            raise DescentConfigError(f"beta={self.beta} must lie in (0, 1)")
        if not 0.0 < self.gamma < 1.0:
            raise DescentConfigError(f"gamma={self.gamma} must lie in (0, 1)")
        if not 0.0 < self.gamma1 < self.gamma / 2:
            raise DescentConfigError(f"gamma1={self.gamma1} must lie in (0, gamma/2)")
        if self.eps_prime <= 0 or self.N < 1 or self.mu_F < 0:
            raise DescentConfigError("need eps' > 0, N >= 1 and mu_F >= 0")
        cap = self.beta_cap()
        if self.beta > cap * (1 + 1e-12):
            raise DescentConfigError(
                f"step-size condition violated: beta={self.beta:g} > "
                f"(1-gamma)*gamma*min(eps'/(N*mu_F*x_bar^2), 1) = {cap:g}")
        return self

    @property
    def eps_effective(self) -> float:
        """eps' / (1 + gamma1*gamma*beta), the tighter reading of the tolerance."""
        return self.eps_prime / (1.0 + self.gamma1 * self.gamma * self.beta)

    def variation_bound(self) -> float:
        return self.gamma1 * self.gamma * self.beta * self.eps_prime / (2 * self.N)

    def alpha_cap(self, g_bar: float) -> float:
        return lagrangian_alpha_cap(self.beta, self.eps_prime, self.gamma, self.gamma1, g_bar)


def beta_cap(eps_prime: float, gamma: float, N: int, mu_F: float, x_bar: float) -> float:
    denom = N * mu_F * x_bar ** 2
    ratio = 1.0 if denom == 0 else min(eps_prime / denom, 1.0)
    return (1 - gamma) * gamma * ratio


def min_eps_prime(beta: float, gamma: float, N: int, mu_F: float, x_bar: float) -> float:
    """Smallest eps' for which ``beta`` meets the step-size cap."""
    if beta > (1 - gamma) * gamma:
        raise DescentConfigError(f"beta={beta} exceeds (1-gamma)*gamma={(1 - gamma) * gamma}")
    return beta * N * mu_F * x_bar ** 2 / ((1 - gamma) * gamma)


def lagrangian_alpha_cap(beta, eps_prime, gamma, gamma1, g_bar) -> float:
    """alpha <= gamma1*gamma*beta*eps' / (2 g_bar) keeps Lagrangian iterates slowly varying."""
    if g_bar <= 0:
        return math.inf
    return gamma1 * gamma * beta * eps_prime / (2.0 * g_bar)


# schedules --------------------------------------------------------------------

@dataclass
class UpdateSchedule:
    """Block sequence u_0, u_1, ... (repeated cyclically) with covering length N."""

    n: int
    pattern: tuple[tuple[int, ...], ...]
    policy: str = "cyclic"
    N: int = field(init=False)

    def __post_init__(self):
        self.pattern = tuple(tuple(sorted(u)) for u in self.pattern)
        self.N = self._covering_length()

    def block(self, k: int) -> tuple[int, ...]:
        return self.pattern[k % len(self.pattern)]

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return itertools.cycle(self.pattern)

    def boundaries(self, K: int) -> list[int]:
        """Start indices k_i of greedy disjoint covering windows within range(K)."""
        out = [0]
        seen: set[int] = set()
        for k in range(K):
            seen.update(self.block(k))
            if len(seen) == self.n:
                out.append(k + 1)
                seen = set()
        return out

    def _covering_length(self) -> int:
        p = len(self.pattern)
        longest = 0
        # windows may straddle the pattern boundary, so probe two periods
        for start in range(p):
            seen: set[int] = set()
            for step in range(2 * p):
                seen.update(self.block(start + step))
                if len(seen) == self.n:
                    longest = max(longest, step + 1)
                    break
            else:
                raise ProblemError("schedule never covers every coordinate")
        return longest


def make_schedule(update_sets: Sequence[Sequence[int]], policy: str = "cyclic",
                  n: Optional[int] = None, order: Optional[Sequence[Sequence[int]]] = None
                  ) -> UpdateSchedule:
    """Build a schedule over admissible update sets.

    ``cyclic`` cycles through the partition, ``full`` always updates every
    coordinate, ``custom`` repeats ``order``.
    """
    sets = [tuple(sorted(u)) for u in update_sets]
    if n is None:
        n = max(max(u) for u in sets) + 1
    check_admissible(sets, n)
    full = tuple(range(n))
    if policy == "full":
        return UpdateSchedule(n, (full,), "full")
    if policy == "cyclic":
        parts = [u for u in sets if u != full] or [full]
        return UpdateSchedule(n, tuple(parts), "cyclic")
    if policy == "custom":
        if not order:
            raise ProblemError("custom schedule needs an explicit order")
        bad = [u for u in order if tuple(sorted(u)) not in sets]
        if bad:
            raise ProblemError(f"blocks {bad} are not admissible update sets")
        return UpdateSchedule(n, tuple(order), "custom")
    raise ProblemError(f"unknown schedule policy {policy!r}")


# steps --------------------------------------------------------------------------

def _actions(D) -> Array:
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D.reshape(-1, 1)
    if D.size == 0:
        raise ProblemError("empty action set")
    return D


def descent_step_direct(F_block: Callable[[Array], float], z, u: Sequence[int], D,
                        beta: float) -> tuple[Array, Array]:
    """x = argmin_{x in D} F^u(z^u + beta (x^u - z^u)); z_next = z + beta U_u (x - z).

    ``F_block`` takes the block vector z^u. Ties go to the lowest index.
    """
    D = _actions(D)
    z = np.asarray(z, dtype=float)
    u = list(u)
    zu = z[u]
    cands = zu + beta * (D[:, u] - zu)
    vals = np.array([F_block(c) for c in cands])
    j = int(np.argmin(vals))
    z_next = z.copy()
    z_next[u] = cands[j]
    return D[j].copy(), z_next


def descent_step_fw(F_grad, z, u: Sequence[int], D, beta: float) -> tuple[Array, Array]:
    """x = argmin_{x in D} dF(z)^T U_u x, then the same averaging step.

    ``F_grad`` is either the gradient vector at z or a callable returning it.
    """
    D = _actions(D)
    z = np.asarray(z, dtype=float)
    if F_grad is None:
        raise ProblemError("Frank-Wolfe step needs a subgradient")
    grad = np.asarray(F_grad(z) if callable(F_grad) else F_grad, dtype=float)
    u = list(u)
    j = int(np.argmin(D[:, u] @ grad[u]))
    z_next = z.copy()
    z_next[u] = z[u] + beta * (D[j, u] - z[u])
    return D[j].copy(), z_next


@dataclass
class VariationCheck:
    ok: bool
    worst_gap: float
    witness: Optional[Array]
    bound: float

    def __bool__(self) -> bool:
        return self.ok


def slow_variation_check(F_k, F_k1, samples, bound: float) -> VariationCheck:
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    if pts.size == 0:
        raise ValueError("sample set is empty")
    gaps = np.array([abs(F_k1(p) - F_k(p)) for p in pts])
    i = int(np.argmax(gaps))
    return VariationCheck(bool(gaps[i] <= bound), float(gaps[i]), pts[i].copy(), bound)


def variation_samples(D, box=None, count: int = 64, seed: int = 0) -> Array:
    """D's vertices plus random interior points, ``count`` in total when possible."""
    D = _actions(D)
    rng = np.random.default_rng(seed)
    extra = max(count - len(D), 0)
    w = rng.dirichlet(np.ones(len(D)), size=extra)
    return np.vstack([D[:count], w @ D])


# time-varying objectives --------------------------------------------------------------

class ObjectiveSequence(Protocol):
    def value(self, k: int, z: Array) -> float: ...
    def block_value(self, k: int, u: tuple[int, ...], zu: Array) -> float: ...
    def gradient(self, k: int, z: Array) -> Array: ...


@dataclass
class SeparableQuadratic:
    """F_k(z) = sum_i w_i (z_i - c_i(k))^2 with centres from ``centers(k)``."""

    weights: Array
    centers: Callable[[int], Array]

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    def value(self, k, z):
        return float(self.weights @ (np.asarray(z) - self.centers(k)) ** 2)

    def block_value(self, k, u, zu):
        c = self.centers(k)[list(u)]
        return float(self.weights[list(u)] @ (np.asarray(zu) - c) ** 2)

    def gradient(self, k, z):
        return 2.0 * self.weights * (np.asarray(z) - self.centers(k))

    @property
    def mu_F(self) -> float:
        return float(self.weights.max())


def projected_gradient_min(fun: Callable[[Array], float], grad: Callable[[Array], Array],
                           lower: Array, upper: Array, z0: Optional[Array] = None,
                           tol: float = 1e-8, max_iter: int = 10_000) -> tuple[Array, float]:
    """Reference minimum over a box; returns (z, f(z))."""
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    z = np.clip(0.5 * (lower + upper) if z0 is None else np.asarray(z0, float), lower, upper)
    step = 1.0
    for _ in range(max_iter):
        g = grad(z)
        if np.abs(z - np.clip(z - g, lower, upper)).max() <= tol:
            break
        fz = fun(z)
        while True:
            cand = np.clip(z - step * g, lower, upper)
            if fun(cand) <= fz - 1e-4 * float(g @ (z - cand)) or step < 1e-14:
                break
            step *= 0.5
        z = cand
        step *= 2.0
    return z, fun(z)


@dataclass
class DescentTrace:
    z: Array
    x: Array
    F: Array
    boundaries: list[int]
    gaps: dict[int, float]
    tolerance: float
    tolerance_effective: float
    burn_in: int

    def enforced_gaps(self) -> dict[int, float]:
        keep = self.boundaries[self.burn_in:]
        return {k: self.gaps[k] for k in keep if k in self.gaps}


def run_descent(schedule: UpdateSchedule, config: DescentConfig, F_sequence: ObjectiveSequence,
                D, K: int, engine: str = "direct", z1: Optional[Array] = None,
                n_update_sets: Optional[int] = None, burn_in: Optional[int] = None,
                reference: bool = True) -> DescentTrace:
    """Run K steps of direct or Frank-Wolfe descent over conv(D).

    Gaps F_k(z_k) - min_C F_k are evaluated at covering boundaries with a
    projected-gradient reference on the bounding box of D, which is C for the
    product-form sets this routine targets.
    """
    config.validate()
    D = _actions(D)
    z = D.mean(axis=0) if z1 is None else np.asarray(z1, dtype=float).copy()
    n = D.shape[1]
    zs = np.empty((K + 1, n))
    xs = np.empty((K, n))
    Fs = np.empty(K + 1)
    zs[0] = z
    Fs[0] = F_sequence.value(0, z)
    for k in range(K):
        u = schedule.block(k)
        if engine == "direct":
            x, z = descent_step_direct(lambda w: F_sequence.block_value(k, u, w), z, u, D, config.beta)
        elif engine == "fw":
            x, z = descent_step_fw(F_sequence.gradient(k, z), z, u, D, config.beta)
        else:
            raise ValueError(f"unknown engine {engine!r}")
        xs[k] = x
        zs[k + 1] = z
        Fs[k + 1] = F_sequence.value(k + 1, z)
    bounds = [b for b in schedule.boundaries(K) if b <= K]
    nb = burn_in if burn_in is not None else max(10 * schedule.N, 100)
    gaps: dict[int, float] = {}
    if reference:
        lo, hi = D.min(axis=0), D.max(axis=0)
        for kb in bounds[nb:]:
            _, fmin = projected_gradient_min(lambda w: F_sequence.value(kb, w),
                                             lambda w: F_sequence.gradient(kb, w), lo, hi)
            gaps[kb] = Fs[kb] - fmin
    U = n_update_sets if n_update_sets is not None else len(set(schedule.pattern))
    tol = (U + 1) * config.eps_prime
    return DescentTrace(zs, xs, Fs, bounds, gaps, tol, (U + 1) * config.eps_effective, nb)
