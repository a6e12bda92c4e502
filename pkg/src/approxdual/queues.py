"""Multiplier and queue updates, Skorokhod closed form, delay views."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

Array = np.ndarray


class QueueError(ValueError):
    pass


def queue_update(lam, increment, clip: Optional[float] = None) -> Array:
    """Element-wise [lam + increment]^+, or [.]^{[0, clip]} when clip is set."""
    out = np.asarray(lam, dtype=float) + np.asarray(increment, dtype=float)
    if clip is None:
        return np.maximum(out, 0.0)
    return np.clip(out, 0.0, clip)


def skorokhod_closed_form(lam1: float, increments: Sequence[float]) -> float:
    """Value of lam_{k+1} for the recursion lam <- [lam + x]^+ started at lam1.

    max{ max_j sum_{i=j..k} x_i , [sum_i x_i + lam1]^+ }

    Each sum is accumulated left to right. Tails that cannot be the maximum
    (cheap estimate below the leader by more than the rounding bound) are
    skipped, so the cost is linear unless many tails nearly tie.
    """
    if lam1 < 0:
        raise QueueError("initial queue value must be nonnegative")
    x = np.asarray(increments, dtype=float)
    if x.size == 0:
        return float(lam1)
    prefix = np.concatenate([[0.0], np.cumsum(x)])
    approx = prefix[-1] - prefix[:-1]
    slack = 8 * x.size * np.finfo(float).eps * (np.abs(x).sum() + lam1)
    cands = np.flatnonzero(approx >= approx.max() - slack)
    best = max(float(np.add.accumulate(x[j:])[-1]) for j in cands)
    start = float(np.add.accumulate(np.concatenate([[lam1], x]))[-1])
    return max(best, start, 0.0)


def iterate_queue(lam1: float, increments: Sequence[float]) -> Array:
    """Full path lam_1..lam_{k+1} of the scalar recursion."""
    out = np.empty(len(increments) + 1)
    out[0] = lam = float(lam1)
    for i, x in enumerate(increments):
        lam = lam + x
        if lam < 0.0:
            lam = 0.0
        out[i + 1] = lam
    return out


def queue_distance_bound(x_seq, y_seq, lam1: float = 0.0) -> tuple[Array, Array]:
    """Per-prefix (|lam_{k+1} - mu_{k+1}|, 2 max_j |sum_{i<=j} (x_i - y_i)|).

    Inputs may be scalar sequences or (k, m) arrays; the distance is then
    taken component-wise and the returned arrays are (k, m).
    """
    x = np.asarray(x_seq, dtype=float)
    y = np.asarray(y_seq, dtype=float)
    if x.shape != y.shape:
        raise QueueError("increment sequences must have equal shape")
    scalar = x.ndim == 1
    if scalar:
        x, y = x[:, None], y[:, None]
    lam = np.full(x.shape[1], float(lam1))
    mu = lam.copy()
    lhs = np.empty_like(x)
    for k in range(x.shape[0]):
        lam = np.maximum(lam + x[k], 0.0)
        mu = np.maximum(mu + y[k], 0.0)
        lhs[k] = np.abs(lam - mu)
    rhs = 2.0 * np.maximum.accumulate(np.abs(np.cumsum(x - y, axis=0)), axis=0)
    if scalar:
        return lhs[:, 0], rhs[:, 0]
    return lhs, rhs


@dataclass
class IncrementLog:
    """Running sum of x_i - y_i and its largest absolute prefix."""

    dim: int = 1
    partial_sums: Array = field(init=False)
    max_abs_partial: Array = field(init=False)

    def __post_init__(self):
        self.partial_sums = np.zeros(self.dim)
        self.max_abs_partial = np.zeros(self.dim)

    def push(self, x, y) -> None:
        self.partial_sums += np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        np.maximum(self.max_abs_partial, np.abs(self.partial_sums), out=self.max_abs_partial)

    @property
    def bound(self) -> Array:
        return 2.0 * self.max_abs_partial


def running_average_step(z, x, beta: float) -> Array:
    if not 0.0 < beta < 1.0:
        raise QueueError(f"beta must lie in (0, 1), got {beta}")
    z = np.asarray(z, dtype=float)
    return z + beta * (np.asarray(x, dtype=float) - z)


@dataclass
class MultiplierState:
    """Exact multiplier lam, approximate multiplier mu, and a history of past lam.

    ``history_depth`` defaults to 2*max_delay + 1. The history is prefilled
    with the initial value so delayed views are defined from step one.
    """

    m: int
    alpha: float
    clip: Optional[float] = None
    max_delay: int = 0
    history_depth: Optional[int] = None
    lam: Array = None
    mu: Array = None
    sink: Optional[Callable[[int, Array, Array, Array], None]] = None
    k: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise QueueError("alpha must be positive")
        self.lam = np.zeros(self.m) if self.lam is None else np.array(self.lam, dtype=float)
        self.mu = self.lam.copy() if self.mu is None else np.array(self.mu, dtype=float)
        if np.any(self.lam < 0) or np.any(self.mu < 0):
            raise QueueError("multipliers must be nonnegative")
        depth = self.history_depth or 2 * self.max_delay + 1
        if depth < self.max_delay + 1:
            raise QueueError("history depth shorter than the maximum delay")
        self.history: deque = deque([self.lam.copy()] * depth, maxlen=depth)
        self.mu_history: deque = deque([self.mu.copy()] * depth, maxlen=depth)

    @property
    def Q(self) -> Array:
        return self.mu / self.alpha

    def step_exact(self, g_value) -> Array:
        self.lam = queue_update(self.lam, self.alpha * np.asarray(g_value, dtype=float), self.clip)
        self.history.append(self.lam.copy())
        return self.lam

    def step_approx(self, increment) -> Array:
        """mu <- [mu + alpha * increment]^+ (clipped when configured)."""
        self.mu = queue_update(self.mu, self.alpha * np.asarray(increment, dtype=float), self.clip)
        self.mu_history.append(self.mu.copy())
        return self.mu

    def set_mu(self, mu) -> None:
        self.mu = np.asarray(mu, dtype=float)
        self.mu_history.append(self.mu.copy())

    def tick(self) -> None:
        self.k += 1
        if self.sink is not None:
            self.sink(self.k, self.lam.copy(), self.mu.copy(), self.Q)

    def past(self, tau: int, which: str = "lam") -> Array:
        hist = self.history if which == "lam" else self.mu_history
        if tau < 0 or tau >= len(hist):
            raise QueueError(f"delay {tau} exceeds stored history of {len(hist)}")
        return hist[-1 - tau]

    def gap(self) -> float:
        return float(np.abs(self.lam - self.mu).max()) if self.m else 0.0


def delayed_multiplier_view(state: MultiplierState, delays, tau_bar: int,
                            which: str = "lam") -> Array:
    """Component i is the stored multiplier from delays[i] steps ago."""
    tau = np.atleast_1d(np.asarray(delays, dtype=int))
    if tau.shape != (state.m,):
        raise QueueError("one delay per constraint is required")
    if np.any(tau < 0) or np.any(tau > tau_bar):
        raise QueueError(f"delays must lie in [0, {tau_bar}]")
    hist = state.history if which == "lam" else state.mu_history
    if tau_bar >= len(hist):
        raise QueueError(f"max delay {tau_bar} exceeds stored history of {len(hist)}")
    return np.array([hist[-1 - t][i] for i, t in enumerate(tau)])


# increment builders ----------------------------------------------------------

def linear_increment(A, b) -> Callable[[Array, Optional[Array]], Array]:
    """x -> A x - b_k, with b_k overriding b when supplied."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))

    def inc(x, b_k=None):
        return A @ x - (b if b_k is None else b_k)

    return inc


def sampled_increment(g_k: Callable[[Array], Array]) -> Callable[[Array], Array]:
    """Nonlinear update using a per-step sampled constraint g_k(x)."""
    return lambda x: np.atleast_1d(np.asarray(g_k(x), dtype=float))


def linearized_increment(g: Callable[[Array], Array],
                         jac: Callable[[Array], Array]) -> Callable[[Array, Array], Array]:
    """(x, z) -> g(z) + dg(z)^T (x - z)."""

    def inc(x, z):
        return np.atleast_1d(g(z)) + np.atleast_2d(jac(z)) @ (np.asarray(x) - np.asarray(z))

    return inc
