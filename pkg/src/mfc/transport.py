"""Exact optimal transport between empirical measures.

Equal-weight problems reduce to an assignment problem (solved with
``scipy.optimize.linear_sum_assignment``, a shortest augmenting path
method).  Two uniform measures of different sizes ``n`` and ``m`` are
reduced to an ``lcm(n, m)`` assignment by replicating atoms.  Everything
else goes through a network simplex on integerised masses.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path as FsPath

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .paths import (
    EmpiricalPathMeasure,
    EmpiricalPointMeasure,
    GridMismatchError,
    TimeGrid,
    sup_distance_matrix,
)

__all__ = [
    "WassersteinResult",
    "PathPairMeasure",
    "distance_matrix",
    "solve_transport",
    "wasserstein",
    "w1_dual_1d",
    "relative_entropy",
    "talagrand_margin",
    "product_wasserstein",
    "pair_measure",
    "dump_transport_csv",
]

MASS_SCALE = 10**12
COST_SCALE = 2**44
LCM_CAP = 4096
PLAN_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class WassersteinResult:
    value: float
    plan: np.ndarray
    solver: str
    cost: np.ndarray
    p: float

    def recomputed(self) -> float:
        return float(np.sum(self.plan * self.cost) ** (1.0 / self.p))


@dataclass(frozen=True, eq=False)
class PathPairMeasure:
    """Weighted atoms ``(x_k, x'_k)`` on the product of two path spaces."""

    grid: TimeGrid
    first: np.ndarray
    second: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        first = np.asarray(self.first, dtype=float)
        second = np.asarray(self.second, dtype=float)
        if first.shape != second.shape or first.ndim != 3 or first.shape[0] == 0:
            raise ValueError("first and second must be matching nonempty (n, M + 1, d) arrays")
        if first.shape[1] != self.grid.steps + 1:
            raise ValueError("atom length does not match the grid")
        n = first.shape[0]
        w = np.full(n, 1.0 / n) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (n,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "first", first)
        object.__setattr__(self, "second", second)
        object.__setattr__(self, "weights", w / w.sum())

    @property
    def size(self) -> int:
        return self.first.shape[0]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def pair_measure(m: EmpiricalPathMeasure, pairs=None) -> PathPairMeasure:
    """Equal-weight measure on ordered pairs ``(X^i, X^j)``, ``i != j``.

    ``pairs`` optionally restricts to a given ``(k, 2)`` index array.
    """
    n = m.size
    if pairs is None:
        if n < 2:
            raise ValueError("pair measure needs at least two atoms")
        i, j = np.where(~np.eye(n, dtype=bool))
    else:
        pairs = np.asarray(pairs, dtype=int)
        i, j = pairs[:, 0], pairs[:, 1]
    return PathPairMeasure(m.grid, m.atoms[i], m.atoms[j])


def distance_matrix(mu, nu) -> np.ndarray:
    """Ground distances: uniform norm for paths, Euclidean for points."""
    if isinstance(mu, EmpiricalPathMeasure) and isinstance(nu, EmpiricalPathMeasure):
        if mu.grid != nu.grid:
            raise GridMismatchError("path measures live on different grids")
        return sup_distance_matrix(mu.atoms, nu.atoms)
    if isinstance(mu, EmpiricalPointMeasure) and isinstance(nu, EmpiricalPointMeasure):
        if mu.dim != nu.dim:
            raise ValueError("point measures have different dimensions")
        return cdist(mu.atoms, nu.atoms)
    if isinstance(mu, PathPairMeasure) and isinstance(nu, PathPairMeasure):
        if mu.grid != nu.grid:
            raise GridMismatchError("pair measures live on different grids")
        return sup_distance_matrix(mu.first, nu.first) + sup_distance_matrix(mu.second, nu.second)
    raise TypeError(f"cannot compare {type(mu).__name__} with {type(nu).__name__}")


def _integer_masses(w: np.ndarray) -> list:
    scaled = w * MASS_SCALE
    base = np.floor(scaled).astype(np.int64)
    short = MASS_SCALE - int(base.sum())
    # largest remainders first, lowest index on ties
    order = np.lexsort((np.arange(len(w)), -(scaled - base)))
    base[order[:short]] += 1
    return [int(v) for v in base]


def _network_simplex(cost: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, m = cost.shape
    supply, demand = _integer_masses(a), _integer_masses(b)
    top = cost.max()
    icost = np.rint(cost / top * COST_SCALE).astype(np.int64) if top > 0 else np.zeros_like(cost, dtype=np.int64)
    G = nx.DiGraph()
    for i in range(n):
        G.add_node(("s", i), demand=-supply[i])
    for j in range(m):
        G.add_node(("t", j), demand=demand[j])
    for i in range(n):
        if supply[i] == 0:
            continue
        for j in range(m):
            if demand[j]:
                G.add_edge(("s", i), ("t", j), weight=int(icost[i, j]))
    _, flow = nx.network_simplex(G)
    plan = np.zeros((n, m))
    for i in range(n):
        for (_, j), f in flow.get(("s", i), {}).items():
            plan[i, j] = f
    return plan / MASS_SCALE


def _lcm_assignment(cost: np.ndarray) -> np.ndarray:
    n, m = cost.shape
    L = math.lcm(n, m)
    ka, kb = L // n, L // m
    big = np.repeat(np.repeat(cost, ka, axis=0), kb, axis=1)
    rows, cols = linear_sum_assignment(big)
    plan = np.zeros((n, m))
    np.add.at(plan, (rows // ka, cols // kb), 1.0 / L)
    return plan


def solve_transport(cost: np.ndarray, a: np.ndarray, b: np.ndarray, *, lcm_cap: int = LCM_CAP):
    """Optimal plan for ``min sum plan * cost`` with marginals ``a`` and ``b``.

    Returns ``(plan, solver_tag)``.
    """
    n, m = cost.shape
    uniform = np.all(a == a[0]) and np.all(b == b[0])
    if uniform and n == m:
        rows, cols = linear_sum_assignment(cost)
        plan = np.zeros((n, m))
        plan[rows, cols] = 1.0 / n
        return plan, "assignment"
    if uniform and math.lcm(n, m) <= lcm_cap:
        return _lcm_assignment(cost), "assignment-replicated"
    return _network_simplex(cost, a, b), "network-simplex"


def wasserstein(mu, nu, p: float = 1.0, *, lcm_cap: int = LCM_CAP) -> WassersteinResult:
    """Exact ``W_p`` between two empirical measures of the same kind.

    Parameters
    ----------
    mu, nu : EmpiricalPathMeasure, EmpiricalPointMeasure or PathPairMeasure
        Path measures must share a grid.
    p : float
        Order, ``p >= 1``.

    Returns
    -------
    WassersteinResult
        Distance, optimal plan, solver tag and the ``d**p`` cost matrix.
    """
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    dist = distance_matrix(mu, nu)
    cost = dist if p == 1 else dist**p
    plan, solver = solve_transport(cost, mu.weights, nu.weights, lcm_cap=lcm_cap)
    total = max(float(np.sum(plan * cost)), 0.0)
    return WassersteinResult(total ** (1.0 / p), plan, solver, cost, float(p))


def w1_dual_1d(mu: EmpiricalPointMeasure, nu: EmpiricalPointMeasure) -> float:
    """``W_1`` on the line as ``integral |F_mu - F_nu|``, from the sorted atoms."""
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("w1_dual_1d requires one-dimensional measures")
    x = np.concatenate([mu.atoms[:, 0], nu.atoms[:, 0]])
    signed = np.concatenate([mu.weights, -nu.weights])
    order = np.argsort(x, kind="stable")
    x, signed = x[order], signed[order]
    cdf_gap = np.cumsum(signed)[:-1]
    return float(np.sum(np.abs(cdf_gap) * np.diff(x)))


def _weights_of(m):
    return m.weights if hasattr(m, "weights") else np.asarray(m, dtype=float)


def relative_entropy(nu, mu) -> float:
    """``H(nu | mu)`` for two measures on one atom list (or two weight vectors)."""
    if hasattr(nu, "atoms") and hasattr(mu, "atoms"):
        if nu.atoms.shape != mu.atoms.shape or not np.array_equal(nu.atoms, mu.atoms):
            raise ValueError("relative_entropy needs a shared atom list")
    q, w = _weights_of(nu), _weights_of(mu)
    if q.shape != w.shape:
        raise ValueError("weight vectors differ in length")
    support = q > 0
    if np.any(w[support] == 0):
        return math.inf
    return float(np.sum(q[support] * np.log(q[support] / w[support])))


def talagrand_margin(mu, nu, p: float, lam: float, *, entropy=None, distance=None) -> float:
    """``sqrt(2 H(nu|mu) / lam) - W_p(mu, nu)``; nonnegative when the inequality holds.

    ``entropy`` and ``distance`` override the computed quantities, e.g. with
    closed forms for continuous laws.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    H = relative_entropy(nu, mu) if entropy is None else float(entropy)
    if math.isinf(H):
        return math.inf
    Wp = wasserstein(mu, nu, p).value if distance is None else float(distance)
    return math.sqrt(2.0 * H / lam) - Wp


def product_wasserstein(mu2: PathPairMeasure, nu2: PathPairMeasure, p: float = 1.0) -> float:
    """``W_p`` on pairs of paths with the sum metric ``||x - y|| + ||x' - y'||``."""
    return wasserstein(mu2, nu2, p).value


def dump_transport_csv(result: WassersteinResult, directory, stem: str = "transport") -> list:
    directory = FsPath(directory)
    written = []
    for name, arr in (("cost", result.cost), ("plan", result.plan)):
        target = directory / f"{stem}_{name}.csv"
        np.savetxt(target, arr, delimiter=",", fmt="%.17g")
        written.append(target)
    return written
