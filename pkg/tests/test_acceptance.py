"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines are repeated in
the terminal summary.  ``python tests/test_acceptance.py`` runs the same
checks without pytest.
"""
import itertools
import math
import os
import sys
import time

import numpy as np
import pytest

from mfc import cli
from mfc.concentration import (
    TailTable,
    TheoremParameters,
    bound_calculator,
    coupling_audit,
    estimate_tail,
    fit_rate,
    holder_exp_moment,
    sample_distances,
)
from mfc.entropy import (
    HolderBallSpec,
    build_cover,
    build_packing,
    covering_lower_bound_log,
    covering_upper_bound_log,
    holder_measure_cover_bound_log,
    holder_measure_cover_bound_loglog,
    lower_bound_threshold,
    measure_cover_bound_log,
    measure_cover_bound_loglog,
    nearest_center_distances,
    sample_holder_ball,
)
from mfc.paths import (
    EmpiricalPathMeasure,
    EmpiricalPointMeasure,
    TimeGrid,
    holder_seminorms,
    project,
    sup_distance_matrix,
)
from mfc.potentials import (
    lipschitz_constants,
    make_quadratic_confinement,
    make_quadratic_interaction,
    make_zero_confinement,
)
from mfc.sde import InitialLaw, SimulationConfig, simulate_coupled, simulate_reference_ensemble
from mfc.transport import talagrand_margin, w1_dual_1d, wasserstein

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []

WORKERS = os.cpu_count() or 1


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def brute_force_assignment(cost):
    n = cost.shape[0]
    return min(sum(cost[i, s[i]] for i in range(n)) for s in itertools.permutations(range(n))) / n


def test_criterion_01_ot_exactness():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst = 0.0
    for k in range(200):
        n = int(rng.integers(1, 7))
        if k % 2:
            d = int(rng.integers(1, 4))
            mu, nu = EmpiricalPointMeasure(rng.normal(size=(n, d))), EmpiricalPointMeasure(rng.normal(size=(n, d)))
        else:
            steps, d = int(rng.integers(2, 7)), int(rng.integers(1, 3))
            g = TimeGrid(1.0, steps)
            mu = EmpiricalPathMeasure(g, rng.normal(size=(n, steps + 1, d)))
            nu = EmpiricalPathMeasure(g, rng.normal(size=(n, steps + 1, d)))
        # cost rebuilt independently of the solver: Euclidean norm, then sup over time
        gaps = np.linalg.norm(mu.atoms[:, None] - nu.atoms[None, :], axis=-1)
        cost = gaps.max(axis=-1) if gaps.ndim == 3 else gaps
        worst = max(worst, abs(wasserstein(mu, nu).value - brute_force_assignment(cost)))
    elapsed = time.perf_counter() - start
    report(1, worst <= 1e-9 and elapsed < 10, f"200 instances, max |assignment - brute force| = {worst:.2e}, {elapsed:.2f}s")


def test_criterion_02_one_dimensional_duality():
    rng = np.random.default_rng(202)
    worst = 0.0
    solvers = set()
    for k in range(200):
        n, m = int(rng.integers(1, 10)), int(rng.integers(1, 10))
        if k % 3 == 0:
            m = n
        wa = rng.dirichlet(np.ones(n)) if k % 4 == 3 else None
        wb = rng.dirichlet(np.ones(m)) if k % 4 == 3 else None
        mu = EmpiricalPointMeasure(rng.normal(size=(n, 1)) * rng.uniform(0.1, 5), wa)
        nu = EmpiricalPointMeasure(rng.normal(size=(m, 1)) + rng.normal(), wb)
        res = wasserstein(mu, nu)
        solvers.add(res.solver)
        worst = max(worst, abs(res.value - w1_dual_1d(mu, nu)))
    report(2, worst <= 1e-8, f"200 clouds via {sorted(solvers)}, max |primal - CDF form| = {worst:.2e}")


def test_criterion_03_projection_inequality():
    rng = np.random.default_rng(303)
    worst = -math.inf
    for k in range(200):
        n, m = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        steps, d = int(rng.integers(2, 9)), int(rng.integers(1, 3))
        g = TimeGrid(float(rng.uniform(0.5, 2)), steps)
        mu = EmpiricalPathMeasure(g, np.cumsum(rng.normal(size=(n, steps + 1, d)), axis=1))
        nu = EmpiricalPathMeasure(g, np.cumsum(rng.normal(size=(m, steps + 1, d)), axis=1))
        for p in (1.0, 2.0):
            full = wasserstein(mu, nu, p).value
            for t in range(steps + 1):
                worst = max(worst, wasserstein(project(mu, t), project(nu, t), p).value - full)
    report(3, worst <= 1e-9, f"200 pairs, p in {{1,2}}, all grid times, max(projected - path) = {worst:.2e}")


def test_criterion_04_gaussian_talagrand():
    worst = 0.0
    for m in np.linspace(-3, 3, 13):
        for sigma in (0.1, 0.5, 1.0, 2.0, 7.5):
            margin = talagrand_margin(None, None, 2, 1 / sigma**2, entropy=m**2 / (2 * sigma**2), distance=abs(m))
            worst = max(worst, abs(margin))
    report(4, worst <= 1e-9, f"13 x 5 (m, sigma) grid, max |margin| = {worst:.2e}")


def test_criterion_05_degenerate_coupling():
    V, W = make_quadratic_confinement(2.0), make_quadratic_interaction(0.0)
    cfg = SimulationConfig(32, TimeGrid(1.0, 256), V, W, InitialLaw("gaussian", 0.0, 1.0))
    seeds = range(10)
    exact = []
    for seed in seeds:
        ref = simulate_reference_ensemble(cfg, 64, seed=seed)
        run = simulate_coupled(cfg, cfg.driver(seed), ref)
        exact.append(bool(np.all(run.sup_differences() == 0.0)) and np.array_equal(run.X.atoms, run.Y.atoms))
    report(5, all(exact), f"W = 0, {sum(exact)}/{len(exact)} seeds with X == Y bitwise")


def test_criterion_06_coupling_audit():
    V, W = make_quadratic_confinement(2.0), make_quadratic_interaction(0.5)
    consts = lipschitz_constants(V, W)
    start = time.perf_counter()
    medians, ratios_ok, total, C = {}, 0, 0, None
    for steps in (256, 512):
        cfg = SimulationConfig(64, TimeGrid(1.0, steps), V, W, InitialLaw("gaussian", 0.0, 1.0))
        for m_ref in (256, 512, 1024):
            fractions = []
            for seed in range(5):
                ref = simulate_reference_ensemble(cfg, m_ref, seed=seed)
                audit = coupling_audit(simulate_coupled(cfg, cfg.driver(seed), ref), consts, 2.0, 0.5, slack=0.05)
                fractions.append(audit.violation_fraction)
                ratios_ok += bool(audit.ratio_within_C)
                C = audit.constant_C
                total += 1
            medians[(steps, m_ref)] = float(np.median(fractions))
    elapsed = time.perf_counter() - start
    monotone = all(
        medians[(s, 256)] >= medians[(s, 512)] >= medians[(s, 1024)] for s in (256, 512)
    )
    table = ", ".join(f"dt=1/{s} M_ref={m}: {v:.3f}" for (s, m), v in medians.items())
    report(6, monotone and elapsed < 300,
           f"median violation fraction nonincreasing in M_ref [{table}]; "
           f"ratio <= C={C:.3g} in {ratios_ok}/{total} runs; {elapsed:.0f}s")


def concentration_config(n=8):
    # a wide initial law keeps the tail probability of the largest N observable with 500 replicas
    return SimulationConfig(n, TimeGrid(0.5, 32), make_zero_confinement(), make_quadratic_interaction(0.0),
                            InitialLaw("gaussian", 0.0, 8.0))


def test_criterion_07_concentration_trend():
    start = time.perf_counter()
    cfg = concentration_config()
    n_grid = [8, 16, 32, 64]
    # epsilon is fixed once from an independent pilot run at N = 8
    pilot_ref = simulate_reference_ensemble(cfg, 512, seed=1000)
    eps = float(np.quantile(sample_distances(cfg, pilot_ref, 8, 300, 1000, WORKERS), 0.1))
    tables = [estimate_tail(cfg, 512, n_grid, [eps], 500, seed, workers=WORKERS) for seed in (0, 1, 2)]
    p = np.array([[t.p_hat(N, eps) for N in n_grid] for t in tables])
    with np.errstate(divide="ignore"):
        neg_log = np.median(-np.log(p), axis=0)
    increasing = bool(np.all(np.diff(neg_log) > 0))
    p8 = float(np.median(p[:, 0]))
    pooled = TailTable([row for t in tables for row in t.rows])
    try:
        K = fit_rate(pooled).K_hat
    except ValueError:
        K = math.nan
    elapsed = time.perf_counter() - start
    ok = 0.05 < p8 < 0.95 and increasing and K > 0 and elapsed < 600
    report(7, ok, f"eps = {eps:.3f}, median p_hat(N=8) = {p8:.3f}, median -ln p_hat = "
                  f"{np.round(neg_log, 3).tolist()}, K_hat = {K:.4g}, {elapsed:.0f}s")


def test_criterion_08_cover():
    start = time.perf_counter()
    spec = HolderBallSpec(1, 0.1, 1.0, 1.0)
    cover = build_cover(spec, 0.9)
    samples = sample_holder_ball(spec, 1000, cover.grid, seed=8)
    far = float(nearest_center_distances(cover, samples).max())
    upper = covering_upper_bound_log(spec, 0.9)
    elapsed = time.perf_counter() - start
    ok = (cover.J, cover.K, cover.count) == (1, 5, 10) and far <= 0.45 and math.log(10) <= upper and elapsed < 30
    report(8, ok, f"J={cover.J}, K={cover.K}, {cover.count} centers, max distance of 1000 samples = {far:.4f} "
                  f"(r/2 = 0.45), ln 10 = {math.log(10):.4f} <= {upper:.4f}, {elapsed:.1f}s")


def test_criterion_09_packing():
    spec = HolderBallSpec(1, 1.0, 1.0, 1.0)
    pk = build_packing(spec, 0.1)
    fam = pk.family[:, :, None]
    dist = sup_distance_matrix(fam, fam)
    iu = np.triu_indices(pk.size, 1)
    violations = int(np.sum(dist[iu] <= 0.2))
    norms = np.maximum(np.abs(pk.family).max(axis=1), holder_seminorms(fam, pk.grid.dt, 1.0))
    ok = violations == 0 and norms.max() <= 1.0 + 1e-12
    report(9, ok, f"{pk.size} distinct members (L 2^J = {pk.nominal_size}), {len(iu[0])} pairs, "
                  f"{violations} at distance <= 0.2, max Holder norm = {norms.max():.12f}")


def _monotone(values, increasing):
    # neighbour comparison rather than np.diff so that runs of inf compare equal
    v = np.asarray(values, dtype=float)
    return bool(np.all(v[1:] >= v[:-1]) if increasing else np.all(v[1:] <= v[:-1]))


def test_criterion_10_bound_calculators():
    checks = {}
    base = dict(p=1.0, lam=1.0, lam_prime=0.5, a=1.0, alpha=0.5, alpha_prime=0.25, n0=0.5)

    def tp(**kw):
        return TheoremParameters(**{**base, **kw})

    checks["beta_p(p=1) = 1"] = tp().beta_p == 1.0
    checks["beta_p(p=2, lam=a) = 1/4"] = tp(p=2.0, lam=2.0, lam_prime=1.0, a=2.0).beta_p == 0.25
    checks["delta >= D gives 0"] = (measure_cover_bound_log(1, 2.0, 3.0, 2.0) == 0.0
                                    and holder_measure_cover_bound_log(HolderBallSpec(1, 1, 1, 1), 1, 2.0) == 0.0)
    eps_sweep, n_sweep = np.linspace(0.05, 3, 40), np.arange(1, 400, 7)
    checks["rhs vs N"] = _monotone([bound_calculator(tp(), 0.5, int(n)).log_rhs for n in n_sweep], False)
    checks["rhs vs eps"] = _monotone([bound_calculator(tp(), e, 50).log_rhs for e in eps_sweep], False)
    checks["rhs vs lam'"] = _monotone([bound_calculator(tp(lam_prime=l), 0.5, 50).log_rhs for l in np.linspace(0.05, 0.95, 30)], False)
    checks["rhs vs a (beta_p up)"] = _monotone(
        [bound_calculator(tp(p=2.0, a=a), 0.5, 50).log_rhs for a in np.linspace(0.1, 10, 30)], False)
    checks["rhs vs lam (beta_p down)"] = _monotone(
        [bound_calculator(tp(p=2.0, lam=l, lam_prime=0.05), 0.5, 50).log_rhs for l in np.linspace(0.1, 10, 30)], True)
    checks["required N vs eps"] = _monotone([bound_calculator(tp(), e, 50).log_required_n for e in eps_sweep], False)
    checks["required N vs n0"] = _monotone([bound_calculator(tp(n0=n0), 0.5, 50).log_required_n for n0 in np.linspace(0.1, 3, 30)], True)

    def spec(d=1, T=1.0, R=1.0, alpha=0.7):
        return HolderBallSpec(d, T, R, alpha)

    r = 0.01
    rs = np.linspace(0.001, 0.12, 40)
    for name, f in (("upper", covering_upper_bound_log), ("lower", covering_lower_bound_log)):
        checks[f"{name} vs r"] = _monotone([f(spec(), x) for x in rs], False)
        checks[f"{name} vs R"] = _monotone([f(spec(R=R), r) for R in np.linspace(0.5, 5, 30)], True)
        checks[f"{name} vs T"] = _monotone([f(spec(T=T), r) for T in np.linspace(0.5, 5, 30)], True)
        checks[f"{name} vs d"] = _monotone([f(spec(d=d), r) for d in range(1, 6)], True)
        checks[f"{name} vs alpha"] = _monotone([f(spec(alpha=a), r) for a in np.linspace(0.2, 1, 30)], False)
    assert all(r <= lower_bound_threshold(spec(T=0.5, R=0.5, alpha=a)) for a in np.linspace(0.2, 1, 30))
    checks["measure vs p"] = _monotone([measure_cover_bound_log(p, 2.0, 3.0, 0.5) for p in np.linspace(1, 2, 20)], True)
    checks["measure vs D"] = _monotone([measure_cover_bound_log(1, D, 3.0, 0.5) for D in np.linspace(0.1, 5, 40)], True)
    checks["measure vs N"] = _monotone([measure_cover_bound_log(1, 2.0, c, 0.5) for c in np.linspace(0, 50, 40)], True)
    checks["measure vs delta"] = _monotone([measure_cover_bound_log(1, 2.0, 3.0, x) for x in np.linspace(0.01, 3, 40)], False)
    hm = holder_measure_cover_bound_log
    checks["ball measure vs delta"] = _monotone([hm(spec(), 1, x) for x in np.linspace(0.2, 2.5, 40)], False)
    checks["ball measure vs p"] = _monotone([hm(spec(), p, 0.5) for p in np.linspace(1, 2, 20)], True)
    checks["ball measure vs R"] = _monotone([hm(spec(R=R), 1, 0.5) for R in np.linspace(0.3, 2, 30)], True)
    checks["ball measure vs T"] = _monotone([hm(spec(T=T), 1, 0.5) for T in np.linspace(0.1, 2, 30)], True)
    checks["ball measure vs alpha"] = _monotone([hm(spec(alpha=a), 1, 0.5) for a in np.linspace(0.4, 1, 30)], False)
    checks["ball measure loglog vs alpha"] = _monotone(
        [holder_measure_cover_bound_loglog(spec(alpha=a), 1, 0.5) for a in np.linspace(0.1, 1, 30)], False)
    checks["measure loglog vs N"] = _monotone(
        [measure_cover_bound_loglog(1, 2.0, c, 0.5) for c in np.linspace(0, 5000, 40)], True)
    failed = [k for k, v in checks.items() if not v]
    report(10, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f"; failed: {failed}" if failed else ""))


def test_criterion_11_holder_moment():
    T = 1.0
    sizes = (1000, 2000, 4000)

    def estimates(alpha, steps):
        cfg = SimulationConfig(1, TimeGrid(T, steps), make_zero_confinement(), make_quadratic_interaction(0.0),
                               InitialLaw("point"))
        a = 0.05 / T ** (2 * alpha)
        return [holder_exp_moment(simulate_reference_ensemble(cfg, n, seed=n), a, alpha).estimate for n in sizes]

    def spread(v):
        return (max(v) - min(v)) / np.mean(v)

    stable = estimates(0.4, 256)
    rough = estimates(0.6, 256)
    # the same statistic under grid refinement at the largest sample size
    g04 = estimates(0.4, 512)[-1] / estimates(0.4, 128)[-1]
    g06 = estimates(0.6, 512)[-1] / estimates(0.6, 128)[-1]
    ok = spread(stable) <= 0.2 and g06 > 2.0 and g04 < 1.2
    report(11, ok, f"alpha=0.4 estimates {np.round(stable, 3).tolist()} spread {spread(stable):.1%}; "
                   f"alpha=0.6 estimates {np.round(rough, 2).tolist()} spread {spread(rough):.1%} across sizes, "
                   f"grows x{g06:.1f} from dt=1/128 to 1/512 (alpha=0.4: x{g04:.2f})")


DETERMINISM_CONFIG = """
[run]
seed = 5
[grid]
horizon = 0.5
steps = 32
[confinement]
kind = quadratic_perturbed
kappa = 2.0
amplitude = 0.1
[interaction]
kind = quadratic
kappa = 0.5
[initial]
kind = uniform
scale = 1.0
[simulate]
n_particles = 6
[coupling]
n_particles = 16
m_ref = 64
[concentration]
m_ref = 64
n_grid = 4, 8, 16
eps_grid = 0.4, 0.6, 0.8
replicas = 24
[covering]
r_grid = 0.9, 0.6, 0.4, 0.05
[chaos]
m_ref = 64
n_grid = 3, 6
replicas = 8
pair_cap = 20
[bounds]
p = 1.5
lam = 2.0
lam_prime = 1.0
a = 0.5
alpha = 0.45
alpha_prime = 0.4
n0 = 2.0
eps = 0.7
N = 1000
"""


def test_criterion_12_determinism(tmp_path):
    config = tmp_path / "run.ini"
    config.write_text(DETERMINISM_CONFIG)
    mismatched = []
    for sub in cli.SUBCOMMANDS:
        hashes = []
        for w in (1, 2, 8):
            for rep in range(2):
                cfg = cli.load_config(sub, config, tmp_path / f"{sub}-{w}-{rep}", w, env={})
                hashes.append(cli.run(cfg)["files"])
        if any(h != hashes[0] for h in hashes):
            mismatched.append(sub)
    report(12, not mismatched, f"{len(cli.SUBCOMMANDS)} subcommands x workers (1, 2, 8) x 2 reruns, "
                               f"mismatched: {mismatched or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
