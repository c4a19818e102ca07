"""Paths on a uniform time grid and empirical measures built from them.

A path is stored as an ``(M + 1, d)`` array of values at the grid points
``t_m = m * dt``.  Empirical measures keep their atoms stacked in a single
array so that distance computations stay vectorised.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

__all__ = [
    "TimeGrid",
    "Path",
    "EmpiricalPathMeasure",
    "EmpiricalPointMeasure",
    "GridMismatchError",
    "uniform_norm",
    "holder_seminorm",
    "holder_norm",
    "holder_seminorms",
    "project",
    "restrict",
    "restrict_measure",
    "sup_distance_matrix",
    "write_path_csv",
    "read_path_csv",
]

_WEIGHT_TOL = 1e-12


class GridMismatchError(ValueError):
    """Raised when objects living on different time grids are combined."""


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon < 0:
            raise ValueError(f"horizon must be finite and >= 0, got {self.horizon}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be an integer >= 1, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def truncated(self, u_index: int) -> "TimeGrid":
        """Grid on ``[0, t_u]`` with the same spacing."""
        return TimeGrid(u_index * self.dt, u_index)


def _as_values(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("path values must have shape (M + 1,) or (M + 1, d)")
    return arr


@dataclass(frozen=True, eq=False)
class Path:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = _as_values(self.values)
        if values.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"expected {self.grid.steps + 1} grid values, got {values.shape[0]}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("path values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_function(cls, grid: TimeGrid, func) -> "Path":
        return cls(grid, np.array([np.atleast_1d(func(t)) for t in grid.times]))


def _normalise_weights(weights, n: int) -> np.ndarray:
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != (n,):
            raise ValueError(f"expected {n} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"weights must sum to 1, got {total!r}")
    w = w / w.sum()
    w.setflags(write=False)
    return w


@dataclass(frozen=True, eq=False)
class EmpiricalPathMeasure:
    """Weighted atoms on a shared grid; ``atoms`` has shape ``(n, M + 1, d)``.

    Omitting ``weights`` gives the equal-weight measure ``(1/n) sum delta``.
    """

    grid: TimeGrid
    atoms: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 2:
            atoms = atoms[:, :, None]
        if atoms.ndim != 3 or atoms.shape[0] == 0:
            raise ValueError("atoms must be a nonempty (n, M + 1, d) array")
        if atoms.shape[1] != self.grid.steps + 1:
            raise ValueError("atom length does not match the grid")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atom values must be finite")
        atoms = atoms.copy()
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", _normalise_weights(self.weights, atoms.shape[0]))

    @classmethod
    def from_paths(cls, paths, weights=None) -> "EmpiricalPathMeasure":
        paths = list(paths)
        if not paths:
            raise ValueError("at least one path is required")
        grid = paths[0].grid
        if any(p.grid != grid for p in paths):
            raise GridMismatchError("all paths must share one grid")
        return cls(grid, np.stack([p.values for p in paths]), weights)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[2]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def path(self, i: int) -> Path:
        return Path(self.grid, self.atoms[i])

    @property
    def paths(self) -> list:
        return [self.path(i) for i in range(self.size)]


@dataclass(frozen=True, eq=False)
class EmpiricalPointMeasure:
    atoms: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0:
            raise ValueError("atoms must be a nonempty (n, d) array")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        atoms = atoms.copy()
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", _normalise_weights(self.weights, atoms.shape[0]))

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))


def uniform_norm(p: Path) -> float:
    return float(np.linalg.norm(p.values, axis=1).max())


def _check_alpha(alpha: float):
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")


def holder_seminorms(values: np.ndarray, dt: float, alpha: float) -> np.ndarray:
    """Grid Holder seminorms of a batch of paths.

    Parameters
    ----------
    values : ndarray of shape (n, M + 1, d)
    dt : float
        Grid spacing.
    alpha : float
        Exponent in (0, 1].

    Returns
    -------
    ndarray of shape (n,)
        ``max_{s != t} |f(t) - f(s)| / |t - s|**alpha`` over grid pairs.
    """
    _check_alpha(alpha)
    values = np.asarray(values, dtype=float)
    n, m1, _ = values.shape
    out = np.zeros(n)
    for lag in range(1, m1):
        incr = np.linalg.norm(values[:, lag:] - values[:, :-lag], axis=2).max(axis=1)
        np.maximum(out, incr / (lag * dt) ** alpha, out=out)
    return out


def holder_seminorm(p: Path, alpha: float) -> float:
    _check_alpha(alpha)
    if p.grid.dt == 0:
        return 0.0
    return float(holder_seminorms(p.values[None], p.grid.dt, alpha)[0])


def holder_norm(p: Path, alpha: float) -> float:
    return max(uniform_norm(p), holder_seminorm(p, alpha))


def project(m: EmpiricalPathMeasure, t_index: int) -> EmpiricalPointMeasure:
    """Image of ``m`` under evaluation at grid point ``t_index``."""
    if not 0 <= t_index <= m.grid.steps:
        raise IndexError(f"t_index {t_index} outside 0..{m.grid.steps}")
    return EmpiricalPointMeasure(m.atoms[:, t_index, :], m.weights)


def restrict(p: Path, u_index: int) -> Path:
    if not 1 <= u_index <= p.grid.steps:
        raise IndexError(f"u_index {u_index} outside 1..{p.grid.steps}")
    return Path(p.grid.truncated(u_index), p.values[: u_index + 1])


def restrict_measure(m: EmpiricalPathMeasure, u_index: int) -> EmpiricalPathMeasure:
    if not 1 <= u_index <= m.grid.steps:
        raise IndexError(f"u_index {u_index} outside 1..{m.grid.steps}")
    return EmpiricalPathMeasure(m.grid.truncated(u_index), m.atoms[:, : u_index + 1], m.weights)


def sup_distance_matrix(a: np.ndarray, b: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Pairwise uniform distances between stacks of paths ``(n, L, d)`` and ``(k, L, d)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[1:] != b.shape[1:]:
        raise GridMismatchError(f"path shapes differ: {a.shape[1:]} vs {b.shape[1:]}")
    out = np.empty((a.shape[0], b.shape[0]))
    # chunked to keep the (chunk, k, L) temporary bounded
    for start in range(0, a.shape[0], chunk):
        block = a[start : start + chunk, None, :, :] - b[None, :, :, :]
        if block.shape[-1] == 1:
            out[start : start + chunk] = np.abs(block[..., 0]).max(axis=2)
        else:
            out[start : start + chunk] = np.sqrt((block**2).sum(axis=3)).max(axis=2)
    return out


def write_path_csv(p: Path, target) -> None:
    target = FsPath(target)
    header = ["t"] + [f"x{k + 1}" for k in range(p.dim)]
    with target.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, row in zip(p.grid.times, p.values):
            writer.writerow([f"{t:.17g}"] + [f"{v:.17g}" for v in row])


def read_path_csv(source) -> Path:
    with FsPath(source).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t" or len(header) < 2:
            raise ValueError(f"unexpected path CSV header: {header}")
        rows = np.array([[float(x) for x in row] for row in reader])
    times, values = rows[:, 0], rows[:, 1:]
    steps = len(times) - 1
    grid = TimeGrid(times[-1], steps)
    if not np.allclose(times, grid.times, rtol=0, atol=1e-12 * max(1.0, times[-1])):
        raise ValueError("path CSV times are not a uniform grid starting at 0")
    return Path(grid, values)
