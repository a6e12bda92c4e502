"""Built-in problems with analytic optima."""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .problem import Box, ConvexProblem, Curvature, SeparableStructure, SlaterCertificate


def quadratic_toy() -> ConvexProblem:
    """f(z) = z^2, g(z) = 1 - z on [0, 2]; f* = 1 at z* = 1, lambda* = 2."""

    def argmin(lam):
        return np.clip(np.atleast_1d(lam / 2.0), 0.0, 2.0)

    return ConvexProblem(
        n=1, m=1,
        objective=lambda z: float(z[0] ** 2),
        constraints=lambda z: np.array([1.0 - z[0]]),
        objective_grad=lambda z: 2.0 * z,
        box=Box([0.0], [2.0]),
        linear=(np.array([[-1.0]]), np.array([-1.0])),
        curvature=Curvature(1.0, (0.0,)),
        argmin=argmin,
        name="quadratic_toy",
    )


QUADRATIC_TOY_F_STAR = 1.0
QUADRATIC_TOY_LAMBDA = 2.0


# link example ------------------------------------------------------------------

def _fv(w: float) -> float:
    return max(math.exp(w), math.pi * w)


@lru_cache(maxsize=None)
def _crossing() -> float:
    # lower crossing of e^w and pi w in [0, 1]
    return brentq(lambda w: math.exp(w) - math.pi * w, 0.3, 0.8, xtol=1e-15)


def _argmin_v(mu2: float) -> float:
    """argmin over [0, 1] of max(e^w, pi w) - mu2 w (ties to the smaller w)."""
    w0 = _crossing()
    if mu2 <= 1.0:
        return 0.0
    if mu2 < math.exp(w0):
        return math.log(mu2)
    if mu2 <= math.pi:
        return w0
    return 1.0


def link_problem(b: float = 0.5) -> ConvexProblem:
    """Two nodes in tandem: arrivals b into node 1, node 1 forwards to node 2.

    Decision z = (z1, z2) is each node's transmit rate, D = {0, 1}^2.
    Cost f = z1 + max(e^z2, pi z2); constraints b - z1 <= 0 and z1 - z2 <= 0.
    """
    A = np.array([[-1.0, 0.0], [1.0, -1.0]])
    bvec = np.array([-b, 0.0])

    def block_argmin(u, mu):
        if u == (0,):
            return np.array([1.0 if 1.0 - mu[0] + mu[1] < 0 else 0.0])
        return np.array([_argmin_v(float(mu[1]))])

    def argmin(mu):
        return np.array([block_argmin((0,), mu)[0], block_argmin((1,), mu)[0]])

    return ConvexProblem(
        n=2, m=2,
        objective=lambda z: float(z[0] + _fv(z[1])),
        constraints=lambda z: A @ z - bvec,
        actions=np.array(list(itertools.product([0.0, 1.0], repeat=2))),
        separability=SeparableStructure(((0,), (1,)),
                                        (lambda w: float(w[0]), lambda w: _fv(float(w[0])))),
        linear=(A, bvec),
        argmin=argmin,
        block_argmin=block_argmin,
        name="link",
    )


def link_optimum(b: float = 0.5) -> dict:
    """f* = b + f_v(b); multipliers from the stationarity of each block at z = (b, b)."""
    w0 = _crossing()
    f_star = b + _fv(b)
    slope = math.exp(b) if b < w0 else math.pi
    return {"f_star": f_star, "z_star": np.array([b, b]), "lam_star": np.array([1.0 + slope, slope])}


def link_slater(problem: ConvexProblem, b: float = 0.5) -> SlaterCertificate:
    return SlaterCertificate.from_point(problem, [b + (1 - b) / 3, b + 2 * (1 - b) / 3])


# unsynchronised queues -------------------------------------------------------------

def unsync_queues(n: int = 2, d: int = 8, b=(0.5, 1.5)) -> ConvexProblem:
    """min sum z_i^2 s.t. b_i <= z_i, actions {0, ..., d}^n, one block per coordinate."""
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise ValueError("one arrival mean per coordinate is required")
    if np.any(b < 0) or np.any(b > d):
        raise ValueError(f"arrival means must lie in [0, {d}]")
    A = -np.eye(n)
    bvec = -b
    levels = np.arange(d + 1, dtype=float)
    D = np.array(list(itertools.product(levels, repeat=n)))

    def argmin(mu):
        return np.clip(np.asarray(mu) / 2.0, 0.0, float(d))

    def block_argmin(u, mu):
        return np.clip(np.asarray(mu)[list(u)] / 2.0, 0.0, float(d))

    return ConvexProblem(
        n=n, m=n,
        objective=lambda z: float(np.dot(z, z)),
        constraints=lambda z: b - z,
        objective_grad=lambda z: 2.0 * np.asarray(z),
        actions=D,
        separability=SeparableStructure(tuple((i,) for i in range(n))),
        curvature=Curvature(1.0, tuple(0.0 for _ in range(n))),
        linear=(A, bvec),
        argmin=argmin,
        block_argmin=block_argmin,
        name="unsync_queues",
    )


def unsync_optimum(b) -> dict:
    b = np.asarray(b, dtype=float)
    return {"f_star": float(b @ b), "z_star": b.copy(), "lam_star": 2.0 * b}


def unsync_slater(problem: ConvexProblem, b, d: int = 8) -> SlaterCertificate:
    b = np.asarray(b, dtype=float)
    return SlaterCertificate.from_point(problem, b + (d - b) / 2.0)


# two flows sharing one link -----------------------------------------------------------

def two_flow_num(weights=(1.0, 1.7), capacity: float = 1.2) -> ConvexProblem:
    """Utility maximisation: min -sum w_i log(0.1 + z_i) s.t. z1 + z2 <= capacity, D = {0,1}^2."""
    w = np.asarray(weights, dtype=float)
    A = np.array([[1.0, 1.0]])
    bvec = np.array([capacity])
    return ConvexProblem(
        n=2, m=1,
        objective=lambda z: float(-(w @ np.log(0.1 + np.asarray(z)))),
        constraints=lambda z: A @ z - bvec,
        objective_grad=lambda z: -w / (0.1 + np.asarray(z)),
        actions=np.array(list(itertools.product([0.0, 1.0], repeat=2))),
        linear=(A, bvec),
        name="two_flow_num",
    )


# one smooth nonlinear constraint --------------------------------------------------------

def disc_problem() -> ConvexProblem:
    """min (z1-1)^2 + (z2-1)^2 s.t. z1^2 + z2^2 <= 1 on [0,1]^2, D = {0,1}^2."""
    c = np.array([1.0, 1.0])
    return ConvexProblem(
        n=2, m=1,
        objective=lambda z: float(((np.asarray(z) - c) ** 2).sum()),
        constraints=lambda z: np.array([float(np.dot(z, z)) - 1.0]),
        objective_grad=lambda z: 2.0 * (np.asarray(z) - c),
        constraints_jac=lambda z: 2.0 * np.asarray(z)[None, :],
        actions=np.array(list(itertools.product([0.0, 1.0], repeat=2))),
        curvature=Curvature(1.0, (1.0,)),
        argmin=lambda lam: np.clip(c / (1.0 + float(np.asarray(lam)[0])), 0.0, 1.0),
        name="disc",
    )


DISC_F_STAR = (1.0 - 1.0 / math.sqrt(2.0)) ** 2 * 2.0
