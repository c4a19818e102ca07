"""Monte Carlo checks of path-space concentration for the particle system.

The limit law of the paths is unknown in closed form, so every statistic
here is measured against a reference ensemble (a large, independently
driven particle system).  Tail probabilities are plain Monte Carlo
frequencies with Wilson score intervals.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .paths import EmpiricalPathMeasure, EmpiricalPointMeasure, Path, holder_seminorms
from .potentials import LipschitzConstants
from .rng import SUBSAMPLE, CounterStream
from .sde import (
    CouplingRun,
    SimulationConfig,
    SimulationDivergenceError,
    simulate_interacting,
    simulate_reference_ensemble,
)
from .transport import PathPairMeasure, pair_measure, product_wasserstein, w1_dual_1d, wasserstein

__all__ = [
    "TheoremParameters",
    "BoundResult",
    "bound_calculator",
    "wilson_interval",
    "TailRow",
    "TailTable",
    "RateFit",
    "sample_distances",
    "estimate_tail",
    "fit_rate",
    "CouplingAudit",
    "coupling_audit",
    "HolderMoment",
    "holder_exp_moment",
    "ChaosRow",
    "chaos_experiment",
    "parallel_map",
]

WILSON_Z = 1.959963984540054


def parallel_map(func, items, workers: int = 1):
    """Ordered map; a process pool when ``workers > 1``.

    Results depend only on the items, never on the pool size.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=max(1, len(items) // (4 * workers))))


# ------------------------------------------------------------------ bounds


@dataclass(frozen=True)
class TheoremParameters:
    """Constants of the i.i.d. path-space deviation bound.

    ``p`` in [1, 2], ``lam`` the transport-inequality constant, ``a`` and
    ``alpha`` the Holder square-exponential moment, and the primed values
    their strictly smaller counterparts.
    """

    p: float
    lam: float
    lam_prime: float
    a: float
    alpha: float
    alpha_prime: float
    n0: float

    def __post_init__(self):
        if not 1 <= self.p <= 2:
            raise ValueError("p must lie in [1, 2]")
        if not 0 < self.lam_prime < self.lam:
            raise ValueError("need 0 < lam_prime < lam")
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not 0 < self.alpha_prime < self.alpha <= 1:
            raise ValueError("need 0 < alpha_prime < alpha <= 1")
        if not self.n0 > 0:
            raise ValueError("n0 must be positive")

    @property
    def beta_p(self) -> float:
        if self.p < 2:
            return 1.0
        return (1.0 + math.sqrt(self.lam / self.a)) ** -2


@dataclass(frozen=True)
class BoundResult:
    log_rhs: float
    condition_met: bool
    log_required_n: float

    @property
    def rhs(self) -> float:
        return math.exp(self.log_rhs)


def bound_calculator(params: TheoremParameters, epsilon: float, N: int) -> BoundResult:
    """Right-hand side ``exp(-beta_p lam'/2 N eps^2)`` and the sample-size condition.

    The condition is ``N >= n0 eps^-2 exp(n0 eps^(-1/alpha'))``, compared in
    log space.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    log_rhs = -params.beta_p * params.lam_prime / 2.0 * N * epsilon**2
    log_required = (
        math.log(params.n0) - 2.0 * math.log(epsilon) + params.n0 * epsilon ** (-1.0 / params.alpha_prime)
    )
    met = N > 0 and math.log(N) >= log_required
    return BoundResult(log_rhs, met, log_required)


def wilson_interval(hits: int, n: int, z: float = WILSON_Z) -> tuple:
    if n < 1:
        raise ValueError("need at least one trial")
    phat = hits / n
    denom = 1.0 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == n else min(1.0, centre + half)
    return lo, hi


# -------------------------------------------------------------------- tails


@dataclass(frozen=True)
class TailRow:
    N: int
    eps: float
    replicas: int
    hits: int
    failed: int = 0

    @property
    def p_hat(self) -> float:
        return self.hits / self.replicas

    @property
    def interval(self) -> tuple:
        return wilson_interval(self.hits, self.replicas)


@dataclass
class TailTable:
    rows: list
    distances: dict = field(default_factory=dict)

    def p_hat(self, N: int, eps: float) -> float:
        for row in self.rows:
            if row.N == N and row.eps == eps:
                return row.p_hat
        raise KeyError((N, eps))

    def to_records(self) -> list:
        out = []
        for row in self.rows:
            lo, hi = row.interval
            out.append(
                {"N": row.N, "eps": row.eps, "replicas": row.replicas, "hits": row.hits,
                 "p_hat": row.p_hat, "lo": lo, "hi": hi, "failed": row.failed}
            )
        return out


@dataclass(frozen=True)
class RateFit:
    K_hat: float
    intercept: float
    residuals: np.ndarray
    rows_used: int


def _replica_id(n: int, r: int) -> int:
    return (int(n) << 24) | int(r)


def _distance_job(job):
    config, reference, seed, replica = job
    try:
        mu = simulate_interacting(config, config.driver(seed, replica=replica))
    except SimulationDivergenceError:
        return math.nan
    return wasserstein(reference, mu, 1).value


def sample_distances(
    config: SimulationConfig,
    reference: EmpiricalPathMeasure,
    N: int,
    replicas: int,
    seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Path-space ``W_1`` between the reference and ``replicas`` independent N-particle systems.

    Diverged replicas yield ``nan``.
    """
    cfg = replace(config, n_particles=int(N))
    jobs = [(cfg, reference, seed, _replica_id(N, r)) for r in range(replicas)]
    return np.array(parallel_map(_distance_job, jobs, workers))


def estimate_tail(
    config: SimulationConfig,
    m_ref: int,
    n_grid,
    eps_grid,
    replicas: int,
    seed: int,
    workers: int = 1,
    reference: EmpiricalPathMeasure | None = None,
) -> TailTable:
    """Exceedance frequencies of ``W_1(reference, empirical) > eps`` on an (N, eps) grid.

    One reference ensemble of ``m_ref`` paths is simulated per table.  The
    same replica distances are compared with every ``eps``, so frequencies
    are exactly nonincreasing in ``eps``.
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    if reference is None:
        reference = simulate_reference_ensemble(config, m_ref, seed=seed)
    rows, dists = [], {}
    for N in n_grid:
        d = sample_distances(config, reference, N, replicas, seed, workers)
        ok = d[np.isfinite(d)]
        dists[int(N)] = d
        for eps in eps_grid:
            hits = int(np.sum(ok > eps))
            rows.append(TailRow(int(N), float(eps), len(ok), hits, len(d) - len(ok)))
    return TailTable(rows, dists)


def fit_rate(table: TailTable) -> RateFit:
    """Least-squares fit of ``-ln p_hat = K N eps^2 + c`` on unsaturated rows."""
    usable = [row for row in table.rows if 0 < row.hits < row.replicas]
    if len(usable) < 3:
        raise ValueError(f"need at least 3 rows with 0 < p_hat < 1, got {len(usable)}")
    x = np.array([row.N * row.eps**2 for row in usable])
    y = np.array([-math.log(row.p_hat) for row in usable])
    A = np.column_stack([x, np.ones_like(x)])
    (K, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    return RateFit(float(K), float(c), y - A @ np.array([K, c]), len(usable))


# ----------------------------------------------------------------- coupling


@dataclass
class CouplingAudit:
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    marginal_distance: np.ndarray
    slack: float
    constant_C: float | None = None
    ratio: float | None = None

    @property
    def violated(self) -> np.ndarray:
        return self.lhs > self.rhs + self.slack

    @property
    def violation_fraction(self) -> float:
        return float(np.mean(self.violated))

    @property
    def ratio_within_C(self) -> bool | None:
        if self.constant_C is None or self.ratio is None:
            return None
        return self.ratio <= self.constant_C


def _point_w1(a: np.ndarray, b: np.ndarray) -> float:
    mu, nu = EmpiricalPointMeasure(a), EmpiricalPointMeasure(b)
    if mu.dim == 1:
        return w1_dual_1d(mu, nu)
    return wasserstein(mu, nu, 1).value


def coupling_audit(
    run: CouplingRun,
    constants: LipschitzConstants,
    beta: float,
    gamma: float,
    slack: float = 0.05,
) -> CouplingAudit:
    """Compare ``W_1`` on ``[0, t]`` between the coupled systems with the Gronwall bound.

    For each grid time the left side is ``W_{1,[0,t]}(X, Y)`` and the right
    side is ``Gamma e^{|beta+gamma| T} sum_{u < t} W_1(X_u, ref_u) dt``, a
    left Riemann sum.  When ``beta + gamma > Gamma`` the audit also reports
    ``W_1(ref, X) / W_1(ref, Y)`` next to ``(beta+gamma)/(beta+gamma-Gamma)``.
    """
    X, Y, ref = run.X.atoms, run.Y.atoms, run.reference.atoms
    grid = run.X.grid
    steps, dt, T = grid.steps, grid.dt, grid.horizon
    n = X.shape[0]
    lhs = np.zeros(steps + 1)
    running = np.zeros((n, n))
    for m in range(steps + 1):
        diff = X[:, None, m, :] - Y[None, :, m, :]
        np.maximum(running, np.sqrt((diff**2).sum(axis=-1)), out=running)
        rows, cols = linear_sum_assignment(running)
        lhs[m] = running[rows, cols].sum() / n
    marginal = np.array([_point_w1(X[:, m], ref[:, m]) for m in range(steps + 1)])
    integral = np.concatenate([[0.0], np.cumsum(marginal[:-1]) * dt])
    Gamma = constants.Gamma
    rhs = Gamma * math.exp(abs(beta + gamma) * T) * integral

    C = ratio = None
    if beta + gamma > Gamma:
        C = (beta + gamma) / (beta + gamma - Gamma)
        num = wasserstein(run.reference, run.X, 1).value
        den = wasserstein(run.reference, run.Y, 1).value
        ratio = num / den if den > 0 else math.inf
    return CouplingAudit(grid.times, lhs, rhs, marginal, slack, C, ratio)


# ---------------------------------------------------------- Holder moments


@dataclass(frozen=True)
class HolderMoment:
    estimate: float
    standard_error: float
    overflowed: int


def holder_exp_moment(paths, a: float, alpha: float, dt: float | None = None) -> HolderMoment:
    """Sample mean and standard error of ``exp(a ||path||_alpha^2)``.

    ``paths`` is an :class:`EmpiricalPathMeasure`, a list of :class:`Path`,
    or an ``(n, M + 1, d)`` array together with ``dt``.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    if isinstance(paths, EmpiricalPathMeasure):
        values, dt = paths.atoms, paths.grid.dt
    elif isinstance(paths, (list, tuple)) and paths and isinstance(paths[0], Path):
        values, dt = np.stack([p.values for p in paths]), paths[0].grid.dt
    else:
        values = np.asarray(paths, dtype=float)
        if values.ndim == 2:
            values = values[:, :, None]
        if dt is None:
            raise ValueError("dt is required for raw arrays")
    sup = np.linalg.norm(values, axis=2).max(axis=1)
    norms = np.maximum(sup, holder_seminorms(values, dt, alpha))
    with np.errstate(over="ignore"):
        terms = np.exp(a * norms**2)
    overflowed = int(np.sum(~np.isfinite(terms)))
    if overflowed:
        return HolderMoment(math.inf, math.inf, overflowed)
    n = len(terms)
    se = float(terms.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return HolderMoment(float(terms.mean()), se, 0)


# --------------------------------------------------------------------- chaos


@dataclass(frozen=True)
class ChaosRow:
    N: int
    replicas: int
    median: float
    mean: float
    pair_atoms: int
    proxy_atoms: int
    subsampled: bool
    subsample_seed: int


def _product_proxy(reference: EmpiricalPathMeasure, size: int, seed: int) -> PathPairMeasure:
    half = reference.size // 2
    A, B = reference.atoms[:half], reference.atoms[half : 2 * half]
    total = half * half
    if size >= total:
        idx = np.arange(total)
    else:
        idx = np.sort(CounterStream(seed, SUBSAMPLE, 0).generator().choice(total, size, replace=False))
    return PathPairMeasure(reference.grid, A[idx // half], B[idx % half])


def _chaos_job(job):
    config, proxy, seed, replica, pair_cap = job
    mu = simulate_interacting(config, config.driver(seed, replica=replica))
    n = mu.size
    total = n * (n - 1)
    if total > pair_cap:
        gen = CounterStream(seed, SUBSAMPLE, replica).generator()
        flat = np.sort(gen.choice(total, pair_cap, replace=False))
        i = flat // (n - 1)
        j = flat % (n - 1)
        j = j + (j >= i)
        pairs = pair_measure(mu, np.column_stack([i, j]))
    else:
        pairs = pair_measure(mu)
    return product_wasserstein(pairs, proxy)


def chaos_experiment(
    config: SimulationConfig,
    m_ref: int,
    n_grid,
    replicas: int,
    seed: int,
    pair_cap: int = 512,
    workers: int = 1,
    reference: EmpiricalPathMeasure | None = None,
) -> list:
    """Distance between the pair empirical measure and a product proxy, per N.

    The proxy is the product of the two halves of the reference ensemble,
    subsampled to a multiple of the pair-measure size not above
    ``pair_cap`` (so the transport problem stays an assignment).  Pair
    measures with more than ``pair_cap`` atoms are subsampled; the seed
    used is recorded in the row.
    """
    if reference is None:
        reference = simulate_reference_ensemble(config, m_ref, seed=seed)
    if reference.size < 2:
        raise ValueError("reference ensemble needs at least two paths")
    rows = []
    for N in n_grid:
        N = int(N)
        if N < 2:
            raise ValueError("chaos experiment needs N >= 2")
        pair_atoms = min(N * (N - 1), pair_cap)
        proxy_size = pair_atoms * max(1, pair_cap // pair_atoms)
        proxy = _product_proxy(reference, proxy_size, seed)
        cfg = replace(config, n_particles=N)
        jobs = [(cfg, proxy, seed, _replica_id(N, r), pair_cap) for r in range(replicas)]
        d = np.array(parallel_map(_chaos_job, jobs, workers))
        rows.append(
            ChaosRow(N, replicas, float(np.median(d)), float(d.mean()), pair_atoms, proxy.size,
                     N * (N - 1) > pair_cap, int(seed))
        )
    return rows
