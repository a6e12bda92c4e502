"""Online discrete-action tracking of continuous decisions in conv(D)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

Array = np.ndarray

STRATEGIES = ("argmin_inf", "max_element", "first_eligible")
SIMPLEX_TOL = 1e-9


class TrackerError(ValueError):
    pass


def _as_actions(D) -> Array:
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D.reshape(-1, 1)
    if D.size == 0:
        raise TrackerError("empty action set")
    return D


def action_matrix_norm(X: Array) -> float:
    """Induced inf-norm (max absolute row sum) of the n x |D| action matrix."""
    return float(np.abs(X).sum(axis=1).max())


def decompose_to_simplex(z, D, tol: float = 1e-9) -> Array:
    """Weights a >= 0 with sum 1 and D^T a = z, at most n+1 of them nonzero.

    Vertices map to unit vectors. One-dimensional sets use the two adjacent
    bracketing actions. Up to n+1 affinely independent actions use the
    barycentric solve; anything else goes through a linear program whose
    basic solution has at most n+1 nonzeros.
    """
    D = _as_actions(D)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    k, n = D.shape
    if z.shape != (n,):
        raise TrackerError("point and actions differ in dimension")
    hit = np.flatnonzero(np.all(np.abs(D - z) <= 1e-15, axis=1))
    a = np.zeros(k)
    if hit.size:
        a[hit[0]] = 1.0
        return a
    if n == 1:
        return _bracket_1d(z[0], D[:, 0], tol)
    if k <= n + 1:
        M = np.vstack([D.T, np.ones(k)])
        if np.linalg.matrix_rank(M) == k:
            sol, *_ = np.linalg.lstsq(M, np.append(z, 1.0), rcond=None)
            if sol.min() >= -tol and np.abs(D.T @ sol - z).max() <= tol:
                sol = np.clip(sol, 0.0, None)
                return sol / sol.sum()
            raise TrackerError(f"point {z} lies outside conv(D)")
    return _decompose_lp(z, D, tol)


def _bracket_1d(t: float, vals: Array, tol: float) -> Array:
    lo_mask = vals <= t
    hi_mask = vals >= t
    if not lo_mask.any() or not hi_mask.any():
        if vals.min() - tol <= t <= vals.max() + tol:
            a = np.zeros(vals.size)
            a[int(np.argmin(np.abs(vals - t)))] = 1.0
            return a
        raise TrackerError(f"point {t} lies outside conv(D)")
    lo_val = vals[lo_mask].max()
    hi_val = vals[hi_mask].min()
    i = int(np.flatnonzero(vals == lo_val)[0])
    j = int(np.flatnonzero(vals == hi_val)[0])
    a = np.zeros(vals.size)
    w = (t - lo_val) / (hi_val - lo_val)
    a[i] = 1.0 - w
    a[j] = w
    return a


def _decompose_lp(z, D, tol):
    k = len(D)
    cost = ((D - z) ** 2).sum(axis=1)
    A_eq = np.vstack([D.T, np.ones(k)])
    b_eq = np.append(z, 1.0)
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs-ds")
    if res.status != 0:
        raise TrackerError(f"point {z} lies outside conv(D)")
    a = np.clip(res.x, 0.0, None)
    a /= a.sum()
    if np.abs(D.T @ a - z).max() > max(tol, 1e-9):
        raise TrackerError(f"decomposition residual too large for {z}")
    return a


def decompose_batch(Z, D) -> Array:
    """Row-wise decomposition; vectorised for the one-dimensional and barycentric cases."""
    D = _as_actions(D)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z.reshape(-1, D.shape[1])
    k, n = D.shape
    if n == 1:
        order = np.argsort(D[:, 0], kind="stable")
        vals = D[order, 0]
        uvals, first = np.unique(vals, return_index=True)
        t = Z[:, 0]
        if t.min() < uvals[0] - SIMPLEX_TOL or t.max() > uvals[-1] + SIMPLEX_TOL:
            raise TrackerError("sequence leaves conv(D)")
        if uvals.size == 1:
            A = np.zeros((len(t), k))
            A[:, order[first[0]]] = 1.0
            return A
        hi = np.clip(np.searchsorted(uvals, t, side="left"), 1, uvals.size - 1)
        lo = hi - 1
        w = np.clip((t - uvals[lo]) / (uvals[hi] - uvals[lo]), 0.0, 1.0)
        A = np.zeros((len(t), k))
        rows = np.arange(len(t))
        A[rows, order[first[lo]]] += 1.0 - w
        A[rows, order[first[hi]]] += w
        return A
    M = np.vstack([D.T, np.ones(k)])
    if k == n + 1 and np.linalg.matrix_rank(M) == k:
        A = np.linalg.solve(M, np.hstack([Z, np.ones((len(Z), 1))]).T).T
        if A.min() < -SIMPLEX_TOL:
            raise TrackerError("sequence leaves conv(D)")
        A = np.clip(A, 0.0, None)
        return A / A.sum(axis=1, keepdims=True)
    return np.array([decompose_to_simplex(z, D) for z in Z])


@dataclass
class TrackerState:
    """Drift vector S over the columns of X = [x_1 ... x_|D|].

    ``S_bar`` is the drift floor (>= 1). ``strategy`` is one of
    ``argmin_inf`` (default), ``max_element`` or ``first_eligible``.
    """

    X: Array
    S_bar: float = 1.0
    strategy: str = "argmin_inf"
    S: Array = None
    steps: int = 0

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.S_bar < 1.0:
            raise TrackerError("drift floor S_bar must be at least 1")
        if self.strategy not in STRATEGIES:
            raise TrackerError(f"unknown strategy {self.strategy!r}")
        if self.S is None:
            self.S = np.zeros(self.X.shape[1])

    @classmethod
    def from_actions(cls, D, **kw) -> "TrackerState":
        return cls(_as_actions(D).T, **kw)

    @property
    def actions(self) -> Array:
        return self.X.T

    @property
    def size(self) -> int:
        return self.X.shape[1]

    def bound(self) -> float:
        return (self.size - 1) * self.S_bar * action_matrix_norm(self.X)


def _choose(v: Array, S_bar: float, strategy: str) -> int:
    eligible = v >= 1.0 - S_bar
    if strategy == "first_eligible":
        return int(np.argmax(eligible))
    if strategy == "max_element":
        return int(np.argmax(v))
    absv = np.abs(v)
    top = int(np.argmax(absv))
    if absv.size > 1:
        rest = absv.copy()
        rest[top] = -1.0
        second = rest.max()
    else:
        second = 0.0
    others = np.full(absv.size, absv[top])
    others[top] = second
    cost = np.maximum(others, np.abs(v - 1.0))
    cost[~eligible] = np.inf
    return int(np.argmin(cost))


def _choose_list(v: list, floor: float, strategy: str) -> int:
    # scalar twin of _choose for the hot loop
    d = len(v)
    if strategy == "max_element":
        return max(range(d), key=v.__getitem__)
    if strategy == "first_eligible":
        for j in range(d):
            if v[j] >= floor:
                return j
    absv = [x if x >= 0.0 else -x for x in v]
    top = max(range(d), key=absv.__getitem__)
    second = max((absv[i] for i in range(d) if i != top), default=0.0)
    best, bj = float("inf"), 0
    for j in range(d):
        if v[j] < floor:
            continue
        o = second if j == top else absv[top]
        c = v[j] - 1.0
        c = c if c >= 0.0 else -c
        if o > c:
            c = o
        if c < best:
            best, bj = c, j
    return bj


def _track_loop(A: list, S: list, S_bar: float, strategy: str):
    floor = 1.0 - S_bar
    K = len(A)
    idx = np.empty(K, dtype=np.int64)
    min_drift = float("inf")
    zs_err = 0.0
    d = len(S)
    rng_d = range(d)
    for k in range(K):
        a = A[k]
        v = [S[i] + a[i] for i in rng_d]
        j = _choose_list(v, floor, strategy)
        v[j] -= 1.0
        S = v
        idx[k] = j
        lo = min(v)
        if lo < min_drift:
            min_drift = lo
        e = abs(sum(v))
        if e > zs_err:
            zs_err = e
    return idx, S, (min_drift if K else 0.0), zs_err


def select_action(state: TrackerState, a_next) -> tuple[Array, int]:
    """Pick column j with S + a - e_j >= -S_bar, then S <- S + a - e_j."""
    a = np.asarray(a_next, dtype=float)
    if a.shape != state.S.shape or a.min() < -SIMPLEX_TOL or abs(a.sum() - 1.0) > SIMPLEX_TOL:
        raise TrackerError("weights are not a point of the simplex")
    v = state.S + a
    j = _choose(v, state.S_bar, state.strategy)
    v[j] -= 1.0
    state.S = v
    state.steps += 1
    return state.X[:, j].copy(), j


@dataclass
class TrackReport:
    x: Array
    indices: Array
    deviation: Array
    max_deviation: float
    bound: float
    min_drift: float
    max_zero_sum_error: float

    @property
    def within_bound(self) -> bool:
        return self.max_deviation <= self.bound + 1e-9


def track_sequence(z_seq, state: TrackerState) -> TrackReport:
    """Emit x_k in D for each z_k; report prefix deviations |sum (z - x)|_inf."""
    D = state.actions
    Z = np.asarray(z_seq, dtype=float).reshape(-1, D.shape[1])
    A = decompose_batch(Z, D)
    K = len(Z)
    idx, S, min_drift, zs_err = _track_loop(A.tolist(), state.S.tolist(), state.S_bar, state.strategy)
    S = np.array(S)
    state.S = S
    state.steps += K
    X = D[idx]
    dev = np.abs(np.cumsum(Z - X, axis=0)).max(axis=1) if K else np.zeros(0)
    return TrackReport(X, idx, dev, float(dev.max()) if K else 0.0, state.bound(),
                       float(min_drift), float(zs_err))


def two_timescale_track(z_slow, hold: int, state: TrackerState) -> TrackReport:
    """Feed each slow decision ``hold`` times; actions are emitted every fast slot."""
    if hold < 1:
        raise TrackerError("hold must be at least 1")
    Z = np.asarray(z_slow, dtype=float).reshape(-1, state.X.shape[0])
    return track_sequence(np.repeat(Z, hold, axis=0), state)


@dataclass
class BlockTrackers:
    """Independent trackers, one per block of a product-form action set."""

    blocks: tuple[tuple[int, ...], ...]
    states: list[TrackerState] = field(default_factory=list)

    @classmethod
    def build(cls, block_actions: dict, S_bar: float = 1.0,
              strategy: str = "argmin_inf") -> "BlockTrackers":
        blocks = tuple(block_actions)
        states = [TrackerState.from_actions(block_actions[u], S_bar=S_bar, strategy=strategy)
                  for u in blocks]
        return cls(blocks, states)

    def step(self, z: Array) -> Array:
        x = np.empty_like(z, dtype=float)
        for u, st in zip(self.blocks, self.states):
            a = decompose_to_simplex(z[list(u)], st.actions)
            x[list(u)], _ = select_action(st, a)
        return x

    def bound(self) -> float:
        return max(st.bound() for st in self.states)
