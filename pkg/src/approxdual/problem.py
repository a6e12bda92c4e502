"""Convex problem model, Lagrangian and dual evaluation, action-set structure."""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import linprog, minimize, minimize_scalar

logger = logging.getLogger(__name__)

Array = np.ndarray
FD_STEP = 1e-6


class ProblemError(ValueError):
    """Raised for malformed problems or invalid arguments."""


class InnerSolverError(RuntimeError):
    """Inner minimisation did not reach its stationarity tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


@dataclass(frozen=True, eq=False)
class Box:
    lower: Array
    upper: Array

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ProblemError("box bounds must have equal shape with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.lower.size

    def project(self, z: Array) -> Array:
        return np.clip(z, self.lower, self.upper)

    def contains(self, z: Array, tol: float = 1e-9) -> bool:
        return bool(np.all(z >= self.lower - tol) and np.all(z <= self.upper + tol))

    def corners(self) -> Array:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    def sample(self, rng: np.random.Generator, size: int) -> Array:
        return rng.uniform(self.lower, self.upper, size=(size, self.n))


@dataclass(frozen=True)
class Curvature:
    """Quadratic upper-bound constants: f(z+d) - f(z) <= grad f(z).d + mu_f |d|^2."""

    mu_f: float
    mu_g: tuple[float, ...] = ()

    def lagrangian(self, lam_bar: float) -> float:
        return self.mu_f + lam_bar * float(sum(self.mu_g))


@dataclass(frozen=True)
class SeparableStructure:
    """Admissible update sets with optional per-block objective and constraint pieces.

    ``block_objectives[i]`` and ``block_constraints[i]`` belong to the i-th
    set of the partition (the full set, if present, carries no pieces).
    """

    update_sets: tuple[tuple[int, ...], ...]
    block_objectives: Optional[tuple[Callable[[Array], float], ...]] = None
    block_constraints: Optional[tuple[Callable[[Array], Array], ...]] = None

    def __post_init__(self):
        sets = tuple(tuple(sorted(int(i) for i in u)) for u in self.update_sets)
        object.__setattr__(self, "update_sets", sets)

    @property
    def partition(self) -> tuple[tuple[int, ...], ...]:
        full = tuple(range(self.n))
        parts = tuple(u for u in self.update_sets if u != full)
        return parts or (full,)

    @property
    def n(self) -> int:
        return max(max(u) for u in self.update_sets) + 1

    def validate(self, n: int) -> None:
        check_admissible(self.update_sets, n)


def check_admissible(update_sets: Sequence[Sequence[int]], n: int) -> None:
    """Raise unless the sets form a partition of range(n), optionally plus the full set."""
    full = tuple(range(n))
    sets = [tuple(sorted(u)) for u in update_sets]
    if not sets:
        raise ProblemError("update set collection is empty")
    parts = [u for u in sets if u != full]
    if len(sets) - len(parts) > 1:
        raise ProblemError("full index set listed more than once")
    if not parts:
        return
    seen: list[int] = []
    for u in parts:
        if not u:
            raise ProblemError("empty update set")
        seen.extend(u)
    if sorted(seen) != list(full):
        raise ProblemError(f"update sets {sets} do not partition indices 0..{n - 1}")


@dataclass(frozen=True, eq=False)
class ConvexProblem:
    """min f(z) s.t. g(z) <= 0 over a ground set C (a box or conv of the actions).

    Optional hooks let a problem supply analytic gradients, a Jacobian, an
    exact Lagrangian argmin over C, or a per-block argmin. ``linear`` holds
    ``(A, b)`` when g(z) = A z - b.
    """

    n: int
    m: int
    objective: Callable[[Array], float]
    constraints: Callable[[Array], Array]
    objective_grad: Optional[Callable[[Array], Array]] = None
    constraints_jac: Optional[Callable[[Array], Array]] = None
    box: Optional[Box] = None
    actions: Optional[Array] = None
    separability: Optional[SeparableStructure] = None
    curvature: Optional[Curvature] = None
    linear: Optional[tuple[Array, Array]] = None
    argmin: Optional[Callable[[Array], Array]] = None
    block_argmin: Optional[Callable[[tuple[int, ...], Array], Array]] = None
    name: str = "problem"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 1 or self.m < 0:
            raise ProblemError("need n >= 1 and m >= 0")
        if self.actions is not None:
            D = np.asarray(self.actions, dtype=float)
            if D.ndim == 1:
                D = D.reshape(-1, 1) if self.n == 1 else D.reshape(1, -1)
            if D.ndim != 2 or D.shape[1] != self.n or D.shape[0] == 0:
                raise ProblemError(f"action set must be a non-empty |D| x {self.n} array")
            object.__setattr__(self, "actions", D)
            if self.box is None:
                lo, hi = D.min(axis=0), D.max(axis=0)
                if self.n <= 12 and _contains_rows(D, Box(lo, hi).corners()):
                    object.__setattr__(self, "box", Box(lo, hi))
        elif self.box is None:
            raise ProblemError("either a box or an action set is required")
        if self.box is not None and self.box.n != self.n:
            raise ProblemError("box dimension mismatch")
        if self.linear is not None:
            A, b = (np.atleast_2d(np.asarray(self.linear[0], float)),
                    np.atleast_1d(np.asarray(self.linear[1], float)))
            if A.shape != (self.m, self.n) or b.shape != (self.m,):
                raise ProblemError("linear constraint data has wrong shape")
            object.__setattr__(self, "linear", (A, b))
        if self.separability is not None:
            self.separability.validate(self.n)

    # evaluation -------------------------------------------------------------
    def f(self, z: Array) -> float:
        return float(self.objective(np.asarray(z, dtype=float)))

    def g(self, z: Array) -> Array:
        return np.atleast_1d(np.asarray(self.constraints(np.asarray(z, dtype=float)), dtype=float))

    def grad_f(self, z: Array) -> Array:
        z = np.asarray(z, dtype=float)
        if self.objective_grad is not None:
            return np.asarray(self.objective_grad(z), dtype=float)
        return _central_diff(self.f, z)

    def jac_g(self, z: Array) -> Array:
        z = np.asarray(z, dtype=float)
        if self.linear is not None:
            return self.linear[0]
        if self.constraints_jac is not None:
            return np.atleast_2d(np.asarray(self.constraints_jac(z), dtype=float))
        cols = [_central_diff(lambda w, j=j: self.g(w)[j], z) for j in range(self.m)]
        return np.array(cols).reshape(self.m, self.n)

    def lagrangian_grad(self, z: Array, lam: Array) -> Array:
        return self.grad_f(z) + self.jac_g(z).T @ np.asarray(lam, dtype=float)

    # ground set ---------------------------------------------------------------
    @property
    def is_box(self) -> bool:
        return self.box is not None

    def vertices(self) -> Array:
        if self.actions is not None:
            return self.actions
        return self.box.corners()

    def contains(self, z: Array, tol: float = 1e-9) -> bool:
        if self.box is not None:
            return self.box.contains(np.asarray(z, float), tol)
        return in_convex_hull(self.actions, z, tol)

    def sample_ground(self, rng: np.random.Generator, size: int) -> Array:
        if self.box is not None:
            return self.box.sample(rng, size)
        w = rng.dirichlet(np.ones(len(self.actions)), size=size)
        return w @ self.actions

    def action_blocks(self) -> Optional[dict[tuple[int, ...], Array]]:
        """Per-block action values when D is the product of its block projections."""
        if "blocks" in self._cache:
            return self._cache["blocks"]
        out = None
        if self.actions is not None and self.separability is not None:
            parts = self.separability.partition
            proj = {u: np.unique(self.actions[:, list(u)], axis=0) for u in parts}
            size = int(np.prod([len(p) for p in proj.values()]))
            if size == len(np.unique(self.actions, axis=0)):
                out = proj
        self._cache["blocks"] = out
        return out

    def diameter(self) -> float:
        V = self.vertices()
        d = V[:, None, :] - V[None, :, :]
        return float(np.sqrt((d ** 2).sum(axis=2).max()))

    # constraint bounds --------------------------------------------------------
    def g_bar(self, ord: float = np.inf, samples: int = 1000, seed: int = 0) -> float:
        """Bound on max_C |g(z)| in the given norm.

        Affine constraints attain the max of any norm at a vertex, so the value
        is exact. Otherwise vertices plus interior samples, inflated by 5%.
        """
        key = ("g_bar", ord, samples, seed)
        if key in self._cache:
            return self._cache[key]
        V = self.vertices()
        vals = [np.linalg.norm(self.g(v), ord) for v in V]
        if self.linear is None:
            pts = self.sample_ground(np.random.default_rng(seed), samples)
            vals += [np.linalg.norm(self.g(p), ord) for p in pts]
        out = float(max(vals)) if vals else 0.0
        if self.linear is None:
            out *= 1.05
        self._cache[key] = out
        return out

    def Az_bar(self) -> float:
        """max_C |A z|_inf for linear constraints."""
        if self.linear is None:
            raise ProblemError("Az_bar needs linear constraints")
        A = self.linear[0]
        return float(np.abs(self.vertices() @ A.T).max())

    def jac_bar(self, samples: int = 200, seed: int = 0) -> float:
        """Bound on the induced inf-norm of the constraint Jacobian over C."""
        if self.linear is not None:
            return float(np.abs(self.linear[0]).sum(axis=1).max())
        pts = np.vstack([self.vertices(), self.sample_ground(np.random.default_rng(seed), samples)])
        return 1.05 * max(float(np.abs(self.jac_g(p)).sum(axis=1).max()) for p in pts)


def _central_diff(fun: Callable[[Array], float], z: Array, h: float = FD_STEP) -> Array:
    g = np.empty_like(z, dtype=float)
    for i in range(z.size):
        e = np.zeros_like(z, dtype=float)
        e[i] = h
        g[i] = (fun(z + e) - fun(z - e)) / (2 * h)
    return g


def _contains_rows(D: Array, rows: Array, tol: float = 1e-12) -> bool:
    return all(np.any(np.all(np.abs(D - r) <= tol, axis=1)) for r in rows)


@dataclass(frozen=True)
class SlaterCertificate:
    z_bar: Array
    upsilon: float
    f_bar: float

    @classmethod
    def from_point(cls, problem: ConvexProblem, z_bar: Sequence[float]) -> "SlaterCertificate":
        z = np.asarray(z_bar, dtype=float)
        gz = problem.g(z)
        ups = float(np.min(-gz)) if gz.size else np.inf
        if not ups > 0:
            raise ProblemError(f"Slater point not strictly feasible: g(z_bar)={gz}")
        return cls(z, ups, problem.f(z))


# operations -------------------------------------------------------------------

def _check_lambda(problem: ConvexProblem, lam) -> Array:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (problem.m,):
        raise ProblemError(f"multiplier has shape {lam.shape}, expected ({problem.m},)")
    if np.any(lam < 0):
        raise ProblemError("multiplier must be nonnegative")
    return lam


def lagrangian_eval(problem: ConvexProblem, z, lam) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.shape != (problem.n,):
        raise ProblemError(f"point has shape {z.shape}, expected ({problem.n},)")
    lam = _check_lambda(problem, lam)
    return problem.f(z) + float(lam @ problem.g(z))


def minimize_lagrangian(problem: ConvexProblem, lam, *, block: Optional[tuple[int, ...]] = None,
                        z0: Optional[Array] = None, tol: float = 1e-8,
                        max_iter: int = 10_000) -> tuple[Array, float]:
    """Approximate argmin over C of L(., lam); returns (z, residual).

    With ``block`` only those coordinates move; the rest stay at ``z0``.
    Analytic hooks are used when the problem provides them. Otherwise a
    bounded scalar search (one free coordinate on a box) or projected
    gradient with backtracking.
    """
    lam = np.asarray(lam, dtype=float)
    n = problem.n
    if block is not None and problem.block_argmin is not None:
        z = np.array(z0, dtype=float) if z0 is not None else _default_start(problem)
        z[list(block)] = problem.block_argmin(block, lam)
        return z, 0.0
    if block is None and problem.argmin is not None:
        return np.asarray(problem.argmin(lam), dtype=float), 0.0
    if problem.box is None:
        return _minimize_over_hull(problem, lam, tol, max_iter)

    box = problem.box
    z = np.array(z0 if z0 is not None else _default_start(problem), dtype=float)
    free = np.arange(n) if block is None else np.array(block)
    L = lambda w: problem.f(w) + float(lam @ problem.g(w))

    if free.size == 1:
        i = int(free[0])

        def line(t):
            w = z.copy()
            w[i] = t
            return L(w)

        lo, hi = box.lower[i], box.upper[i]
        if hi - lo <= 0:
            z[i] = lo
            return z, 0.0
        res = minimize_scalar(line, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 500})
        cands = [(line(lo), lo), (line(hi), hi), (line(res.x), float(res.x))]
        z[i] = min(cands)[1]
        return z, 0.0

    step = 1.0
    residual = np.inf
    for _ in range(max_iter):
        grad = problem.lagrangian_grad(z, lam)
        mask = np.zeros(n, dtype=bool)
        mask[free] = True
        gstep = np.where(mask, grad, 0.0)
        pg = z - box.project(z - gstep)
        residual = float(np.abs(pg).max())
        if residual <= tol:
            return z, residual
        fz = L(z)
        noise = 1e-13 * max(1.0, abs(fz))
        shrunk = False
        while True:
            cand = box.project(z - step * gstep)
            pred = float(gstep @ (z - cand))
            if pred * 1e-4 > noise:
                ok = L(cand) <= fz - 1e-4 * pred
            else:
                # decrease is below round-off in L; test the slope along the step instead
                slope = float(np.where(mask, problem.lagrangian_grad(cand, lam), 0.0) @ (cand - z))
                ok = abs(slope) <= 0.9 * pred
            if ok or step < 1e-14:
                break
            step *= 0.5
            shrunk = True
        z = cand
        if not shrunk:
            step = min(step * 2.0, 1e6)
    raise InnerSolverError("projected gradient hit iteration cap", residual)


def _default_start(problem: ConvexProblem) -> Array:
    if problem.box is not None:
        return 0.5 * (problem.box.lower + problem.box.upper)
    return problem.actions.mean(axis=0)


def _minimize_over_hull(problem, lam, tol, max_iter):
    # conv(D) is not a box: optimise simplex weights, report the Frank-Wolfe gap
    D = problem.actions
    k = len(D)
    L = lambda a: problem.f(a @ D) + float(lam @ problem.g(a @ D))
    jac = lambda a: D @ problem.lagrangian_grad(a @ D, lam)
    res = minimize(L, np.full(k, 1.0 / k), jac=jac, method="SLSQP", bounds=[(0, 1)] * k,
                   constraints=[{"type": "eq", "fun": lambda a: a.sum() - 1.0,
                                 "jac": lambda a: np.ones_like(a)}],
                   options={"ftol": 1e-14, "maxiter": max_iter})
    a = np.clip(res.x, 0.0, None)
    z = (a / a.sum()) @ D
    grad = problem.lagrangian_grad(z, lam)
    gap = float(grad @ z - (D @ grad).min())
    if gap > max(tol, 1e-6):
        raise InnerSolverError("weight-space solve over conv(D) did not converge", gap)
    return z, gap


def dual_eval(problem: ConvexProblem, lam, inner_solver: Optional[Callable] = None,
              tol: float = 1e-8) -> tuple[float, Array]:
    """q(lam) = min over C of L(z, lam).

    Parameters
    ----------
    inner_solver : callable, optional
        ``inner_solver(problem, lam) -> (z, residual)``. Defaults to
        :func:`minimize_lagrangian`.

    Returns
    -------
    (q_value, z_star)
    """
    lam = _check_lambda(problem, lam)
    solver = inner_solver or (lambda p, l: minimize_lagrangian(p, l, tol=tol))
    z, residual = solver(problem, lam)
    if residual > max(tol, 1e-6):
        raise InnerSolverError("inner solve above tolerance", residual)
    return lagrangian_eval(problem, z, lam), z


def slater_dual_bound(problem: ConvexProblem, cert: SlaterCertificate, f_star: float,
                      delta: float = 0.0) -> float:
    if not cert.upsilon > 0:
        raise ProblemError("Slater margin must be positive")
    if delta < 0:
        raise ProblemError("delta must be nonnegative")
    return (cert.f_bar - f_star + delta) / cert.upsilon


def caratheodory_descent_point(D, z, y=None) -> tuple[Array, int]:
    """Return (x, index) with x = argmin_{w in D} z.w, lowest index on ties.

    For any y in conv(D) this x satisfies z.(x - y) <= 0.
    """
    D = np.asarray(D, dtype=float)
    if D.size == 0:
        raise ProblemError("empty action set")
    if D.ndim == 1:
        D = D.reshape(-1, 1)
    scores = D @ np.atleast_1d(np.asarray(z, dtype=float))
    j = int(np.argmin(scores))
    return D[j].copy(), j


def in_convex_hull(D, z, tol: float = 1e-9) -> bool:
    """Exact simplex-weight feasibility test for z in conv(D)."""
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D.reshape(-1, 1)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    k = len(D)
    if k == 1:
        return bool(np.all(np.abs(D[0] - z) <= tol))
    # minimise the total slack s >= |D^T a - z|
    n = D.shape[1]
    c = np.concatenate([np.zeros(k), np.ones(n)])
    A_ub = np.block([[D.T, -np.eye(n)], [-D.T, -np.eye(n)]])
    b_ub = np.concatenate([z, -z])
    A_eq = np.concatenate([np.ones(k), np.zeros(n)])[None, :]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (k + n), method="highs")
    return bool(res.status == 0 and res.fun <= tol * n)


@dataclass(frozen=True)
class UFeasibility:
    ok: bool
    witness: Optional[tuple[Array, Array, tuple[int, ...]]] = None

    def __bool__(self) -> bool:
        return self.ok


def check_u_feasible(D, update_sets: Sequence[Sequence[int]], samples: int = 1000,
                     seed: int = 0) -> UFeasibility:
    """Is z + U_u (x - z) in conv(D) for z in conv(D), x in D, u in the update sets?

    Checked on vertices z, which is exact because the map is affine in z and
    conv(D) is convex. Product-form hulls use a per-block shortcut. A
    failure carries the witness ``(z, x, u)``.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D.reshape(-1, 1)
    n = D.shape[1]
    sets = [tuple(sorted(u)) for u in update_sets]
    blocks = [u for u in sets if len(u) < n]
    if not blocks:
        return UFeasibility(True)
    uniq = np.unique(D, axis=0)
    proj = [np.unique(uniq[:, list(u)], axis=0) for u in blocks]
    disjoint = sorted(i for u in blocks for i in u) == list(range(n))
    if disjoint and int(np.prod([len(p) for p in proj])) == len(uniq):
        return UFeasibility(True)
    verts = uniq if len(uniq) <= 64 else uniq[np.random.default_rng(seed).choice(len(uniq), 64, replace=False)]
    # reversed order so the last vertex is probed first; finds short witnesses
    for z in verts[::-1]:
        for x in D:
            for u in blocks:
                w = z.copy()
                w[list(u)] = x[list(u)]
                if not in_convex_hull(D, w):
                    return UFeasibility(False, (z.copy(), x.copy(), u))
    return UFeasibility(True)


def spot_check_convexity(problem: ConvexProblem, pairs: int = 200, seed: int = 0,
                         tol: float = 1e-9) -> bool:
    """Midpoint convexity on random pairs; warns rather than raising."""
    rng = np.random.default_rng(seed)
    P = problem.sample_ground(rng, 2 * pairs).reshape(pairs, 2, problem.n)
    ok = True
    for a, b in P:
        mid = 0.5 * (a + b)
        if problem.f(mid) > 0.5 * (problem.f(a) + problem.f(b)) + tol:
            ok = False
        if problem.m and np.any(problem.g(mid) > 0.5 * (problem.g(a) + problem.g(b)) + tol):
            ok = False
    if not ok:
        warnings.warn(f"{problem.name}: midpoint convexity violated on samples", RuntimeWarning)
    return ok


def check_curvature(problem: ConvexProblem, samples: int = 200, seed: int = 0,
                    tol: float = 1e-7) -> bool:
    if problem.curvature is None:
        return True
    rng = np.random.default_rng(seed)
    Z = problem.sample_ground(rng, samples)
    W = problem.sample_ground(rng, samples)
    mu = problem.curvature.mu_f
    for z, w in zip(Z, W):
        d = w - z
        if problem.f(w) - problem.f(z) > problem.grad_f(z) @ d + mu * float(d @ d) + tol:
            warnings.warn(f"{problem.name}: curvature bound mu_f={mu} violated", RuntimeWarning)
            return False
    return True
