"""Euler-Maruyama simulation of the mean-field particle system.

The particle system is

    dX^i = sqrt(2) dB^i - grad V(X^i) dt - (1/N) sum_j grad W(X^i - X^j) dt,

and the limit process replaces the empirical interaction by ``grad W * mu_t``.
The law ``mu_t`` is not available in closed form; a large, independently
driven reference ensemble stands in for it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .paths import EmpiricalPathMeasure, GridMismatchError, TimeGrid
from .potentials import ConfinementPotential, InteractionPotential
from .rng import REFERENCE, SYSTEM, CounterStream

__all__ = [
    "SQRT2",
    "InitialLaw",
    "BrownianDriver",
    "SimulationConfig",
    "CouplingRun",
    "SimulationDivergenceError",
    "simulate_interacting",
    "simulate_reference_ensemble",
    "simulate_coupled",
]

SQRT2 = np.sqrt(2.0)
_INITIAL_OFFSET = 0x100
_PAIR_CHUNK = 512


class SimulationDivergenceError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state at step {step}")
        self.step = step


@dataclass(frozen=True)
class InitialLaw:
    """Initial distribution: ``gaussian`` (mean, std), ``uniform`` box or ``point`` mass.

    All three have a finite square-exponential moment; ``a0`` is one
    admissible exponent.
    """

    kind: str = "point"
    mean: float = 0.0
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "uniform", "point"):
            raise ValueError(f"unknown initial law {self.kind!r}")
        if self.scale < 0 or (self.kind == "gaussian" and self.scale == 0):
            raise ValueError("scale must be positive for gaussian and nonnegative otherwise")

    @property
    def a0(self) -> float:
        if self.kind == "gaussian":
            return 1.0 / (4.0 * self.scale**2)
        return 1.0

    def sample(self, stream: CounterStream, n: int, dim: int) -> np.ndarray:
        if self.kind == "point":
            return np.full((n, dim), float(self.mean))
        out = np.empty((n, dim))
        for i in range(n):
            if self.kind == "gaussian":
                out[i] = self.mean + self.scale * stream.normals(i, dim)
            else:
                out[i] = self.mean + self.scale * (2.0 * stream.uniforms(i, dim) - 1.0)
        return out


@dataclass(frozen=True)
class BrownianDriver:
    """Brownian increments for ``n_particles`` over ``n_steps`` steps of size ``dt``.

    Increment ``(i, m)`` depends only on ``(master_seed, purpose, replica, i, m)``.
    """

    master_seed: int
    n_particles: int
    n_steps: int
    dim: int
    dt: float
    purpose: int = SYSTEM
    replica: int = 0

    @property
    def stream(self) -> CounterStream:
        return CounterStream(self.master_seed, self.purpose, self.replica)

    @property
    def initial_stream(self) -> CounterStream:
        return CounterStream(self.master_seed, self.purpose | _INITIAL_OFFSET, self.replica)

    def particle_increments(self, i: int) -> np.ndarray:
        z = self.stream.normals(i, self.n_steps * self.dim)
        return z.reshape(self.n_steps, self.dim) * np.sqrt(self.dt)

    def increments(self) -> np.ndarray:
        """Array of shape ``(n_particles, n_steps, dim)``."""
        return np.stack([self.particle_increments(i) for i in range(self.n_particles)])

    def initial_positions(self, law: InitialLaw) -> np.ndarray:
        return law.sample(self.initial_stream, self.n_particles, self.dim)


@dataclass(frozen=True)
class SimulationConfig:
    n_particles: int
    grid: TimeGrid
    V: ConfinementPotential
    W: InteractionPotential
    initial_law: InitialLaw = field(default_factory=InitialLaw)
    dim: int = 1

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def driver(self, seed: int, replica: int = 0, purpose: int = SYSTEM, n_particles=None) -> BrownianDriver:
        n = self.n_particles if n_particles is None else n_particles
        return BrownianDriver(seed, n, self.grid.steps, self.dim, self.grid.dt, purpose, replica)


@dataclass(frozen=True, eq=False)
class CouplingRun:
    X: EmpiricalPathMeasure
    Y: EmpiricalPathMeasure
    driver: BrownianDriver
    reference: EmpiricalPathMeasure

    def sup_differences(self) -> np.ndarray:
        """``||X^i - Y^i||_inf`` for each particle."""
        diff = self.X.atoms - self.Y.atoms
        return np.linalg.norm(diff, axis=2).max(axis=1)


def _mean_interaction(W: InteractionPotential, x: np.ndarray, others: np.ndarray) -> np.ndarray:
    """``(1/K) sum_k grad W(x_i - z_k)`` for every row of ``x``."""
    out = np.empty_like(x)
    for start in range(0, x.shape[0], _PAIR_CHUNK):
        diffs = x[start : start + _PAIR_CHUNK, None, :] - others[None, :, :]
        out[start : start + _PAIR_CHUNK] = W.gradient(diffs).mean(axis=1)
    return out


def _check_driver(config: SimulationConfig, driver: BrownianDriver, n: int):
    if (driver.n_particles, driver.n_steps, driver.dim) != (n, config.grid.steps, config.dim):
        raise ValueError(
            "driver layout "
            f"{(driver.n_particles, driver.n_steps, driver.dim)} does not match "
            f"{(n, config.grid.steps, config.dim)}"
        )
    if driver.dt != config.grid.dt:
        raise ValueError("driver dt does not match the grid")


def _euler(config: SimulationConfig, x0: np.ndarray, dB: np.ndarray, interaction) -> np.ndarray:
    n, steps, d = dB.shape
    dt = config.grid.dt
    out = np.empty((n, steps + 1, d))
    out[:, 0] = x0
    x = x0.copy()
    # overflow is detected below and reported with its step
    with np.errstate(over="ignore", invalid="ignore"):
        for m in range(steps):
            drift = config.V.gradient(x)
            if not config.W.is_zero:
                drift = drift + interaction(x, m)
            x = x + SQRT2 * dB[:, m] - drift * dt
            if not np.all(np.isfinite(x)):
                raise SimulationDivergenceError(m + 1)
            out[:, m + 1] = x
    return out


def _simulate_self_interacting(config, driver, n) -> EmpiricalPathMeasure:
    _check_driver(config, driver, n)
    x0 = driver.initial_positions(config.initial_law)
    atoms = _euler(config, x0, driver.increments(), lambda x, m: _mean_interaction(config.W, x, x))
    return EmpiricalPathMeasure(config.grid, atoms)


def simulate_interacting(config: SimulationConfig, driver: BrownianDriver) -> EmpiricalPathMeasure:
    """Simulate the N-particle system; returns the equal-weight path measure.

    The ``j = i`` term of the interaction sum is included and vanishes since
    ``grad W(0) = 0``.
    """
    return _simulate_self_interacting(config, driver, config.n_particles)


def simulate_reference_ensemble(
    config: SimulationConfig, m_ref: int, driver: BrownianDriver | None = None, seed: int = 0
) -> EmpiricalPathMeasure:
    """Simulate an ``m_ref``-particle system used as a proxy for the limit law.

    Without an explicit driver, a ``REFERENCE``-purpose stream of ``seed`` is
    used, which is independent of every ``SYSTEM`` stream.
    """
    if m_ref < 1:
        raise ValueError("m_ref must be >= 1")
    if driver is None:
        driver = config.driver(seed, purpose=REFERENCE, n_particles=m_ref)
    return _simulate_self_interacting(config, driver, m_ref)


def simulate_coupled(
    config: SimulationConfig, driver: BrownianDriver, reference: EmpiricalPathMeasure
) -> CouplingRun:
    """Synchronous coupling of the particle system with independent limit copies.

    Each ``Y^i`` starts at ``X^i_0``, consumes the increments of ``X^i`` and
    feels the frozen reference ensemble instead of the other particles.
    """
    if reference.grid != config.grid:
        raise GridMismatchError("reference ensemble must share the simulation grid")
    if reference.dim != config.dim:
        raise ValueError("reference dimension does not match the config")
    _check_driver(config, driver, config.n_particles)
    x0 = driver.initial_positions(config.initial_law)
    dB = driver.increments()
    ref = reference.atoms
    X = _euler(config, x0, dB, lambda x, m: _mean_interaction(config.W, x, x))
    if reference.is_uniform:
        Y = _euler(config, x0, dB, lambda y, m: _mean_interaction(config.W, y, ref[:, m]))
    else:
        w = reference.weights

        def weighted(y, m):
            diffs = y[:, None, :] - ref[None, :, m]
            return np.einsum("k,ikd->id", w, config.W.gradient(diffs))

        Y = _euler(config, x0, dB, weighted)
    return CouplingRun(
        EmpiricalPathMeasure(config.grid, X), EmpiricalPathMeasure(config.grid, Y), driver, reference
    )
