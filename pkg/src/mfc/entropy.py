"""Covers, packings and covering-number bounds for Holder balls.

``B(d, T, R, alpha)`` is the set of ``f: [0, T] -> R^d`` with
``max(||f||_inf, [f]_alpha) <= R``, metrised by the uniform norm.  All
closed-form bounds are returned as natural logarithms since the raw values
overflow doubles for modest parameters.

The explicit constructions are one-dimensional.  Centers and packing
members are piecewise affine with nodes at ``t_j = (j - 1/2) T / J``; they
are materialised on a grid fine enough to contain every node, so uniform
distances between them are exact on that grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .paths import TimeGrid, holder_seminorms, sup_distance_matrix
from .rng import SAMPLER, CounterStream

__all__ = [
    "HolderBallSpec",
    "CoverConstruction",
    "PackingConstruction",
    "InvalidRegimeError",
    "EnumerationTooLargeError",
    "covering_upper_bound_log",
    "covering_lower_bound_log",
    "lower_bound_threshold",
    "cover_parameters",
    "cover_count",
    "build_cover",
    "nearest_center_distances",
    "packing_parameters",
    "build_packing",
    "measure_cover_bound_log",
    "measure_cover_bound_loglog",
    "holder_measure_cover_bound_log",
    "holder_measure_cover_bound_loglog",
    "sample_holder_ball",
]

DEFAULT_CAP = 10**6
_CEIL_RTOL = 1e-12
_LN2, _LN3 = math.log(2.0), math.log(3.0)


class InvalidRegimeError(ValueError):
    """A bound was requested outside the parameter range where it holds."""


class EnumerationTooLargeError(ValueError):
    """An explicit construction would exceed the configured size cap."""


@dataclass(frozen=True)
class HolderBallSpec:
    d: int
    T: float
    R: float
    alpha: float

    def __post_init__(self):
        if self.d < 1 or int(self.d) != self.d:
            raise ValueError("d must be a positive integer")
        if not self.T > 0 or not self.R > 0:
            raise ValueError("T and R must be positive")
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")


def _ceil(x: float) -> int:
    # absorbs representation error such as 4 / 0.1 -> 40.000000000000004
    return math.ceil(x * (1.0 - _CEIL_RTOL))


def _entropy_exponent(spec: HolderBallSpec, ratio: float, base: float) -> float:
    a = spec.alpha
    return base ** (1.0 / a) * spec.d ** (1.0 + 1.0 / (2.0 * a)) * spec.T * ratio ** (1.0 / a)


def covering_upper_bound_log(spec: HolderBallSpec, r: float) -> float:
    """Log of ``(10 sqrt(d) R/r)^d * 3^(5^(1/a) d^(1+1/(2a)) T (R/r)^(1/a))``; 0 when ``r >= R``."""
    if not r > 0:
        raise ValueError("r must be positive")
    if r >= spec.R:
        return 0.0
    ratio = spec.R / r
    return spec.d * math.log(10.0 * math.sqrt(spec.d) * ratio) + _entropy_exponent(spec, ratio, 5.0) * _LN3


def lower_bound_threshold(spec: HolderBallSpec) -> float:
    """Largest radius for which the lower bound is asserted: ``T^a R / (4 T^a + 4)``."""
    Ta = spec.T**spec.alpha
    return Ta / (4.0 * Ta + 4.0) * spec.R


def covering_lower_bound_log(spec: HolderBallSpec, r: float) -> float:
    """Log of ``(sqrt(d)/4 R/r)^d * 2^(2^(-1/a) d^(1+1/(2a)) T (R/r)^(1/a))``."""
    if not r > 0:
        raise ValueError("r must be positive")
    if r > lower_bound_threshold(spec):
        raise InvalidRegimeError(
            f"lower bound requires r <= {lower_bound_threshold(spec)!r}, got {r!r}"
        )
    ratio = spec.R / r
    return spec.d * math.log(math.sqrt(spec.d) / 4.0 * ratio) + _entropy_exponent(spec, ratio, 0.5) * _LN2


def measure_cover_bound_log(p: float, D: float, cover_count_log: float, delta: float) -> float:
    """Log of ``(8 e D / delta)^(p N)`` with ``ln N = cover_count_log``; 0 when ``delta >= D``.

    The result is ``inf`` only if the logarithm itself exceeds the double
    range; :func:`measure_cover_bound_loglog` is finite everywhere.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta >= D:
        return 0.0
    ll = measure_cover_bound_loglog(p, D, cover_count_log, delta)
    return math.exp(ll) if ll < 709.0 else math.inf


def measure_cover_bound_loglog(p: float, D: float, cover_count_log: float, delta: float) -> float:
    """``ln ln`` of the measure-cover bound; ``-inf`` when the bound is 1."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if p < 1:
        raise ValueError("p must be >= 1")
    if delta >= D:
        return -math.inf
    return math.log(p) + cover_count_log + math.log(math.log(8.0 * math.e * D / delta))


def holder_measure_cover_bound_loglog(spec: HolderBallSpec, p: float, delta: float) -> float:
    """``ln ln`` of the covering number of probability measures on the ball, order ``p``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    if delta >= 2.0 * spec.R:
        return -math.inf
    ratio = spec.R / delta
    count_log = spec.d * math.log(20.0 * math.sqrt(spec.d) * ratio) + _entropy_exponent(spec, ratio, 10.0) * _LN3
    return math.log(p) + count_log + math.log(math.log(16.0 * math.e * ratio))


def holder_measure_cover_bound_log(spec: HolderBallSpec, p: float, delta: float) -> float:
    """Log of ``(16 e R/delta)^(p (20 sqrt(d) R/delta)^d 3^(10^(1/a) d^(1+1/(2a)) T (R/delta)^(1/a)))``."""
    ll = holder_measure_cover_bound_loglog(spec, p, delta)
    if ll == -math.inf:
        return 0.0
    return math.exp(ll) if ll < 709.0 else math.inf


# ---------------------------------------------------------------- covers


@dataclass(frozen=True, eq=False)
class CoverConstruction:
    J: int
    K: int
    tau: float
    eta: float
    grid: TimeGrid
    node_indices: np.ndarray
    labels: np.ndarray
    centers: np.ndarray

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    @property
    def count_bound(self) -> int:
        return 2 * self.K * 3 ** (self.J - 1)


def cover_parameters(spec: HolderBallSpec, r: float) -> tuple:
    """Smallest integers ``J >= 5^(1/a) T (R/r)^(1/a)`` and ``K >= 4 R/r``."""
    a = spec.alpha
    ratio = spec.R / r
    J = max(1, _ceil(5.0 ** (1.0 / a) * spec.T * ratio ** (1.0 / a)))
    K = max(1, _ceil(4.0 * ratio))
    return J, K


def cover_count(J: int, K: int) -> int:
    """Number of label sequences ``k(1..J)`` in ``[-K+1, K]`` with steps of at most 1."""
    counts = [1] * (2 * K)
    for _ in range(J - 1):
        counts = [
            counts[i] + (counts[i - 1] if i > 0 else 0) + (counts[i + 1] if i + 1 < 2 * K else 0)
            for i in range(2 * K)
        ]
    return sum(counts)


def _node_grid(T: float, J: int, min_steps: int) -> tuple:
    per_half = max(1, math.ceil(min_steps / (2 * J)))
    grid = TimeGrid(T, 2 * J * per_half)
    nodes = (2 * np.arange(J) + 1) * per_half
    return grid, nodes


def _piecewise_affine(grid: TimeGrid, nodes: np.ndarray, node_values: np.ndarray) -> np.ndarray:
    """Evaluate functions affine between nodes and constant outside them.

    ``node_values`` has shape ``(n, J)``; result has shape ``(n, M + 1)``.
    """
    idx = np.arange(grid.steps + 1)
    out = np.empty((node_values.shape[0], grid.steps + 1))
    for row, vals in enumerate(node_values):
        out[row] = np.interp(idx, nodes, vals)
    return out


def _enumerate_labels(J: int, K: int) -> np.ndarray:
    labels = np.arange(-K + 1, K + 1)[:, None]
    for _ in range(J - 1):
        last = labels[:, -1]
        parts = []
        for step in (-1, 0, 1):
            nxt = last + step
            ok = (nxt >= -K + 1) & (nxt <= K)
            parts.append(np.column_stack([labels[ok], nxt[ok]]))
        labels = np.concatenate(parts)
        labels = labels[np.lexsort(labels.T[::-1])]
    return labels


def build_cover(spec: HolderBallSpec, r: float, *, cap: int = DEFAULT_CAP, min_steps: int = 200) -> CoverConstruction:
    """Enumerate the lattice cover of the one-dimensional ball at radius ``r``.

    Raises
    ------
    EnumerationTooLargeError
        If ``2 K 3^(J-1)`` exceeds ``cap``.
    """
    if spec.d != 1:
        raise ValueError("explicit covers are only built for d = 1")
    if not 0 < r < spec.R:
        raise ValueError("build_cover requires 0 < r < R")
    J, K = cover_parameters(spec, r)
    if K * spec.T**spec.alpha >= J**spec.alpha:
        raise RuntimeError("cover parameters violate K T^a < J^a")
    bound = 2 * K * 3 ** (J - 1)
    if bound > cap:
        raise EnumerationTooLargeError(f"cover would have up to {bound} centers (cap {cap})")
    tau, eta = spec.T / J, spec.R / K
    labels = _enumerate_labels(J, K)
    grid, nodes = _node_grid(spec.T, J, min_steps)
    centers = _piecewise_affine(grid, nodes, (labels - 0.5) * eta)
    return CoverConstruction(J, K, tau, eta, grid, nodes, labels, centers)


def nearest_center_distances(cover: CoverConstruction, samples: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Uniform distance from each sample ``(n, M + 1)`` to its closest center."""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 3:
        samples = samples[..., 0]
    best = np.full(samples.shape[0], np.inf)
    for start in range(0, cover.count, chunk):
        block = cover.centers[start : start + chunk]
        d = sup_distance_matrix(samples[:, :, None], block[:, :, None])
        np.minimum(best, d.min(axis=1), out=best)
    return best


# -------------------------------------------------------------- packings


@dataclass(frozen=True, eq=False)
class PackingConstruction:
    """Separated family ``f_{k,l} = f_k + l eta``.

    ``nominal_size`` is ``L 2^J``.  The constant labellings ``k = 0`` and
    ``k = 1`` give ``f_{1,l} = f_{0,l+1}``, so ``family`` holds the
    ``L 2^J - (L - 1)`` distinct members only.
    """

    J: int
    tau: float
    eta: float
    shifts: np.ndarray
    grid: TimeGrid
    family: np.ndarray
    separation: float
    min_distance: float

    @property
    def L(self) -> int:
        return len(self.shifts)

    @property
    def nominal_size(self) -> int:
        return self.L * 2**self.J

    @property
    def size(self) -> int:
        return self.family.shape[0]


def packing_parameters(spec: HolderBallSpec, r: float) -> tuple:
    """``(J, tau, eta, shifts)`` with ``J + 1`` the smallest integer ``>= 2^(-1/a) T (R/r)^(1/a)``.

    The shifts are the integers strictly between ``-tau^(-a) + 1/2`` and
    ``tau^(-a) - 1/2``.
    """
    a = spec.alpha
    if not 0 < r < min(spec.R, 0.5 * spec.T**a * spec.R):
        raise InvalidRegimeError("packing requires 0 < r < min(R, T^a R / 2)")
    J = _ceil(2.0 ** (-1.0 / a) * spec.T * (spec.R / r) ** (1.0 / a)) - 1
    tau = spec.T / J
    eta = tau**a * spec.R
    top = tau**-a - 0.5
    lo, hi = math.floor(-top) + 1, math.ceil(top) - 1
    return J, tau, eta, np.arange(lo, hi + 1)


def build_packing(spec: HolderBallSpec, r: float, *, cap: int = 20_000, min_steps: int = 200) -> PackingConstruction:
    """Build the separated family and check it exhaustively.

    Raises ``RuntimeError`` if two distinct members are not more than
    ``2 r`` apart or a member leaves the ball; either would be a
    construction bug.
    """
    if spec.d != 1:
        raise ValueError("explicit packings are only built for d = 1")
    J, tau, eta, shifts = packing_parameters(spec, r)
    size = len(shifts) * 2**J
    if size > cap:
        raise EnumerationTooLargeError(f"packing would have {size} members (cap {cap})")
    bits = (np.arange(2**J)[:, None] >> np.arange(J)[::-1]) & 1
    # node values in units of eta/2 are odd integers, so deduplication is exact
    half_units = (2 * bits[None, :, :] - 1) + 2 * shifts[:, None, None]
    half_units = np.unique(half_units.reshape(-1, J), axis=0)
    grid, nodes = _node_grid(spec.T, J, min_steps)
    family = _piecewise_affine(grid, nodes, half_units * (eta / 2.0))

    dist = sup_distance_matrix(family[:, :, None], family[:, :, None])
    np.fill_diagonal(dist, np.inf)
    min_distance = float(dist.min()) if len(family) > 1 else math.inf
    if min_distance <= 2 * r:
        raise RuntimeError(f"packing separation {min_distance} does not exceed {2 * r}")
    norms = np.maximum(np.abs(family).max(axis=1), holder_seminorms(family[:, :, None], grid.dt, spec.alpha))
    if np.any(norms > spec.R * (1 + 1e-12)):
        raise RuntimeError("packing member outside the Holder ball")
    return PackingConstruction(J, tau, eta, shifts, grid, family, 2 * r, min_distance)


# --------------------------------------------------------------- sampling


def sample_holder_ball(
    spec: HolderBallSpec,
    count: int,
    grid: TimeGrid | None = None,
    *,
    seed: int = 0,
    amplitude: float = 1.0,
    max_attempts_factor: int = 100,
) -> np.ndarray:
    """Random piecewise-linear members of the one-dimensional ball.

    Each draw is a clipped random walk on a random sub-grid of nodes: node
    increments are clipped to ``+/- amplitude R h^a`` and values to
    ``[-amplitude R, amplitude R]``; draws whose grid Holder norm exceeds
    ``R`` are rejected.  Returns an array of shape ``(count, M + 1)``.
    """
    if spec.d != 1:
        raise ValueError("sampling is implemented for d = 1")
    if not 0 <= amplitude <= 1:
        raise ValueError("amplitude must lie in [0, 1]")
    grid = grid or TimeGrid(spec.T, 256)
    if abs(grid.horizon - spec.T) > 1e-12 * spec.T:
        raise ValueError("grid horizon must equal T")
    if amplitude == 0 or count == 0:
        return np.zeros((count, grid.steps + 1))

    stream = CounterStream(seed, SAMPLER)
    M, R, a = grid.steps, spec.R * amplitude, spec.alpha
    strides = [s for s in (1, 2, 4, 8, 16, 32, 64) if s <= M]
    idx = np.arange(M + 1)
    accepted = []
    attempts = 0
    batch = max(16, min(count, 512))
    while len(accepted) < count:
        if attempts >= max_attempts_factor * count:
            raise ValueError(
                f"rejection rate above {1 - 1 / max_attempts_factor:.0%}; "
                "parameters too extreme for the sampler"
            )
        candidates = np.empty((batch, M + 1))
        for row in range(batch):
            u = stream.uniforms(attempts + row, M + 4)
            stride = strides[min(int(u[0] * len(strides)), len(strides) - 1)]
            h = stride * grid.dt
            node_idx = np.arange(0, M + 1, stride)
            if node_idx[-1] != M:
                node_idx = np.append(node_idx, M)
            steps = (2.0 * u[3 : 3 + len(node_idx) - 1] - 1.0) * R * h**a * u[1]
            steps = np.clip(steps, -R * h**a, R * h**a)
            vals = np.clip((2.0 * u[2] - 1.0) * R + np.concatenate([[0.0], np.cumsum(steps)]), -R, R)
            candidates[row] = np.interp(idx, node_idx, vals)
        attempts += batch
        norms = np.maximum(np.abs(candidates).max(axis=1), holder_seminorms(candidates[:, :, None], grid.dt, a))
        accepted.extend(candidates[norms <= spec.R])
    return np.array(accepted[:count])
