"""Config-driven experiment runner.

    mfc <subcommand> --config <path> [--workers k] [--out dir]

The config is an INI file (``key = value`` lines grouped in sections); see
``configs/`` in the source tree for a commented template.  Each run
writes its CSV and SVG artifacts plus ``manifest.json`` into a temporary
directory next to ``--out`` and renames it into place only on success.

Exit codes: 0 success, 1 runtime failure, 2 invalid config.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import io
import json
import math
import os
import shutil
import sys
import tempfile
import time
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import numpy as np

from . import __version__
from .concentration import (
    TheoremParameters,
    bound_calculator,
    chaos_experiment,
    coupling_audit,
    estimate_tail,
    fit_rate,
)
from .entropy import (
    EnumerationTooLargeError,
    HolderBallSpec,
    build_cover,
    cover_parameters,
    covering_lower_bound_log,
    covering_upper_bound_log,
    lower_bound_threshold,
)
from .paths import TimeGrid, write_path_csv
from .potentials import (
    check_interaction_symmetry,
    lipschitz_constants,
    make_perturbed_confinement,
    make_perturbed_interaction,
    make_quadratic_confinement,
    make_quadratic_interaction,
    make_zero_confinement,
    verify_hessian_bounds,
)
from .sde import InitialLaw, SimulationConfig, simulate_coupled, simulate_interacting, simulate_reference_ensemble

SUBCOMMANDS = ("simulate", "coupling", "concentration", "covering", "chaos", "bounds")
SEED_ENV = "MFC_SEED"
EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


# ------------------------------------------------------------------ schema

def _int(s):
    return int(s)


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _str(s):
    return s.strip()


def _ints(s):
    return [int(x) for x in s.replace(",", " ").split()]


def _floats(s):
    return [_float(x) for x in s.replace(",", " ").split()]


# section -> key -> (parser, default); a default of None means required
# when the section is used, and the sentinel ``_OPT`` means optional.
_OPT = object()
SCHEMA = {
    "run": {"seed": (_int, 0), "dim": (_int, 1)},
    "grid": {"horizon": (_float, 1.0), "steps": (_int, 512)},
    "confinement": {
        "kind": (_str, "quadratic"), "kappa": (_float, 1.0), "center": (_float, 0.0),
        "amplitude": (_float, 0.1), "frequency": (_float, 1.0),
        "hessian_lower": (_float, _OPT), "hessian_upper": (_float, _OPT),
    },
    "interaction": {
        "kind": (_str, "quadratic"), "kappa": (_float, 0.0),
        "amplitude": (_float, 0.1), "frequency": (_float, 1.0),
        "hessian_lower": (_float, _OPT), "hessian_upper": (_float, _OPT),
    },
    "initial": {"kind": (_str, "gaussian"), "mean": (_float, 0.0), "scale": (_float, 1.0)},
    "simulate": {"n_particles": (_int, 16)},
    "coupling": {
        "n_particles": (_int, 64), "m_ref": (_int, 512), "slack": (_float, 0.05),
        "beta": (_float, _OPT), "gamma": (_float, _OPT),
    },
    "concentration": {
        "m_ref": (_int, 512), "n_grid": (_ints, [8, 16, 32, 64]), "eps_grid": (_floats, None),
        "replicas": (_int, 100),
    },
    "covering": {
        "alpha": (_float, 1.0), "horizon": (_float, 0.1), "radius": (_float, 1.0),
        "r_grid": (_floats, [0.9, 0.5, 0.3]), "enumeration_cap": (_int, 100_000),
    },
    "chaos": {
        "m_ref": (_int, 512), "n_grid": (_ints, [4, 8, 16]), "replicas": (_int, 20), "pair_cap": (_int, 256),
    },
    "bounds": {
        "p": (_float, 1.0), "lam": (_float, None), "lam_prime": (_float, None), "a": (_float, None),
        "alpha": (_float, None), "alpha_prime": (_float, None), "n0": (_float, None),
        "eps": (_float, None), "N": (_int, None),
    },
}
# sections each subcommand reads, besides [run]
USES = {
    "simulate": ("grid", "confinement", "interaction", "initial", "simulate"),
    "coupling": ("grid", "confinement", "interaction", "initial", "coupling"),
    "concentration": ("grid", "confinement", "interaction", "initial", "concentration"),
    "covering": ("covering",),
    "chaos": ("grid", "confinement", "interaction", "initial", "chaos"),
    "bounds": ("bounds",),
}


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    sections: dict
    out: FsPath
    workers: int = 1
    echo: dict = field(default_factory=dict)

    def __getitem__(self, section):
        return self.sections[section]


def _parse_section(parser, name):
    raw = dict(parser[name]) if parser.has_section(name) else {}
    schema = SCHEMA[name]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"[{name}] unknown keys: {', '.join(unknown)}")
    out = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                out[key] = conv(raw[key])
            except ValueError as exc:
                raise ConfigError(f"[{name}] {key} = {raw[key]!r}: {exc}") from None
        elif default is None:
            raise ConfigError(f"[{name}] missing required key {key!r}")
        elif default is not _OPT:
            out[key] = default
    return out


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _validate(sub, s):
    if "grid" in s:
        _check(s["grid"]["horizon"] > 0, "[grid] horizon must be positive")
        _check(s["grid"]["steps"] >= 1, "[grid] steps must be >= 1")
    if "initial" in s:
        _check(s["initial"]["kind"] in ("gaussian", "uniform", "point"), "[initial] kind must be gaussian, uniform or point")
        _check(s["initial"]["scale"] >= 0, "[initial] scale must be nonnegative")
        _check(s["initial"]["kind"] != "gaussian" or s["initial"]["scale"] > 0, "[initial] gaussian scale must be positive")
    if "confinement" in s:
        _check(s["confinement"]["kind"] in ("zero", "quadratic", "quadratic_perturbed"),
               "[confinement] kind must be zero, quadratic or quadratic_perturbed")
        _check(s["confinement"]["kind"] == "zero" or s["confinement"]["kappa"] > 0, "[confinement] kappa must be positive")
    if "interaction" in s:
        _check(s["interaction"]["kind"] in ("quadratic", "quadratic_perturbed"),
               "[interaction] kind must be quadratic or quadratic_perturbed")
    for name in ("simulate", "coupling"):
        if name in s:
            _check(s[name]["n_particles"] >= 1, f"[{name}] n_particles must be >= 1")
    for name in ("coupling", "concentration", "chaos"):
        if name in s:
            _check(s[name]["m_ref"] >= 2, f"[{name}] m_ref must be >= 2")
    if "concentration" in s:
        c = s["concentration"]
        _check(c["replicas"] >= 1, "[concentration] replicas must be >= 1")
        _check(c["n_grid"] and min(c["n_grid"]) >= 1, "[concentration] n_grid must be nonempty positive")
        _check(c["eps_grid"] and min(c["eps_grid"]) >= 0, "[concentration] eps_grid must be nonempty nonnegative")
    if "chaos" in s:
        c = s["chaos"]
        _check(c["replicas"] >= 1, "[chaos] replicas must be >= 1")
        _check(c["n_grid"] and min(c["n_grid"]) >= 2, "[chaos] n_grid entries must be >= 2")
        _check(c["pair_cap"] >= 2, "[chaos] pair_cap must be >= 2")
    if "covering" in s:
        c = s["covering"]
        _check(0 < c["alpha"] <= 1, "[covering] alpha must lie in (0, 1]")
        _check(c["horizon"] > 0 and c["radius"] > 0, "[covering] horizon and radius must be positive")
        _check(c["r_grid"] and min(c["r_grid"]) > 0, "[covering] r_grid must be nonempty positive")
    _check(s["run"]["dim"] >= 1, "[run] dim must be >= 1")


def load_config(subcommand: str, path, out=None, workers=None, env=None) -> RunConfig:
    """Parse and validate a run config; raises :class:`ConfigError`."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    unknown = sorted(set(parser.sections()) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown sections: {', '.join(unknown)}")
    sections = {"run": _parse_section(parser, "run")}
    for name in USES[subcommand]:
        sections[name] = _parse_section(parser, name)
    env = os.environ if env is None else env
    if env.get(SEED_ENV):
        try:
            sections["run"]["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer") from None
    _validate(subcommand, sections)
    if workers is None:
        workers = os.cpu_count() or 1
    _check(workers >= 1, "--workers must be >= 1")
    out = FsPath(out) if out is not None else FsPath(f"mfc-{subcommand}")
    echo = {name: {k: v for k, v in vals.items()} for name, vals in sections.items()}
    return RunConfig(subcommand, sections["run"]["seed"], sections, out, workers, echo)


# ------------------------------------------------------------- builders

def _potential(section, interaction: bool):
    kind = section["kind"]
    if interaction:
        if kind == "quadratic":
            pot = make_quadratic_interaction(section["kappa"])
        else:
            pot = make_perturbed_interaction(section["kappa"], section["amplitude"], section["frequency"])
    elif kind == "zero":
        pot = make_zero_confinement()
    elif kind == "quadratic":
        pot = make_quadratic_confinement(section["kappa"], section["center"])
    else:
        pot = make_perturbed_confinement(section["kappa"], section["center"], section["amplitude"], section["frequency"])
    lo = section.get("hessian_lower", pot.hessian_lower)
    hi = section.get("hessian_upper", pot.hessian_upper)
    _check(lo <= hi, "declared hessian_lower exceeds hessian_upper")
    if (lo, hi) != (pot.hessian_lower, pot.hessian_upper):
        pot = replace(pot, hessian_lower=lo, hessian_upper=hi)
    return pot


def build_simulation(cfg: RunConfig, n_particles: int) -> SimulationConfig:
    s = cfg.sections
    dim = s["run"]["dim"]
    V = _potential(s["confinement"], interaction=False)
    W = _potential(s["interaction"], interaction=True)
    for name, pot in (("confinement", V), ("interaction", W)):
        report = verify_hessian_bounds(pot, 32, 5.0, dim=dim, seed=cfg.seed)
        _check(report.passed, f"[{name}] declared Hessian bounds fail a numerical spot check")
    _check(check_interaction_symmetry(W, dim=dim), "[interaction] gradient is not odd")
    grid = TimeGrid(s["grid"]["horizon"], s["grid"]["steps"])
    init = InitialLaw(s["initial"]["kind"], s["initial"]["mean"], s["initial"]["scale"])
    return SimulationConfig(n_particles, grid, V, W, init, dim)


# --------------------------------------------------------------- output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if v is None:
        return ""
    return str(v)


def write_csv(target, header, rows):
    with open(target, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def svg_line_chart(series, xlabel, ylabel, title="", width=480, height=320) -> str:
    """Minimal SVG line chart; ``series`` is a list of ``(label, xs, ys)``."""
    pts = [(x, y) for _, xs, ys in series for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
    xs = [p[0] for p in pts] or [0.0, 1.0]
    ys = [p[1] for p in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    ml, mr, mt, mb = 60, 110, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return mt + ph - (y - y0) / (y1 - y0) * ph

    colours = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
    out = io.StringIO()
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">\n')
    out.write(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>\n')
    if title:
        out.write(f'<text x="{ml}" y="18">{title}</text>\n')
    out.write(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{xlabel}</text>\n')
    out.write(f'<text x="14" y="{mt + ph / 2:.1f}" transform="rotate(-90 14 {mt + ph / 2:.1f})" text-anchor="middle">{ylabel}</text>\n')
    for v, anchor in ((x0, "start"), (x1, "end")):
        out.write(f'<text x="{sx(v):.1f}" y="{mt + ph + 14}" text-anchor="{anchor}">{v:.4g}</text>\n')
    for v in (y0, y1):
        out.write(f'<text x="{ml - 4}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.4g}</text>\n')
    for k, (label, sxs, sys_) in enumerate(series):
        c = colours[k % len(colours)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(sxs, sys_) if math.isfinite(x) and math.isfinite(y))
        if coords:
            out.write(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>\n')
        out.write(f'<text x="{ml + pw + 8}" y="{mt + 12 + 14 * k}" fill="{c}">{label}</text>\n')
    out.write("</svg>\n")
    return out.getvalue()


def git_blob_sha1(data: bytes) -> str:
    """Content hash in the format ``git hash-object`` prints."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


# ------------------------------------------------------------ pipelines

def run_simulate(cfg, out):
    sim = build_simulation(cfg, cfg["simulate"]["n_particles"])
    mu = simulate_interacting(sim, sim.driver(cfg.seed))
    (out / "paths").mkdir()
    rows = []
    for i, p in enumerate(mu.paths):
        write_path_csv(p, out / "paths" / f"particle_{i:04d}.csv")
        rows.append((i, float(np.linalg.norm(p.values, axis=1).max()), *p.values[-1]))
    header = ["particle", "sup_norm"] + [f"x{k + 1}_final" for k in range(sim.dim)]
    write_csv(out / "summary.csv", header, rows)
    t = sim.grid.times
    shown = [(f"X{i}", t, mu.atoms[i, :, 0]) for i in range(min(6, mu.size))]
    (out / "paths.svg").write_text(svg_line_chart(shown, "t", "x1", "sample paths"))


def run_coupling(cfg, out):
    c = cfg["coupling"]
    sim = build_simulation(cfg, c["n_particles"])
    reference = simulate_reference_ensemble(sim, c["m_ref"], seed=cfg.seed)
    run = simulate_coupled(sim, sim.driver(cfg.seed), reference)
    beta = c.get("beta", sim.V.hessian_lower)
    gamma = c.get("gamma", sim.W.hessian_lower)
    audit = coupling_audit(run, lipschitz_constants(sim.V, sim.W), beta, gamma, c["slack"])
    write_csv(
        out / "coupling_audit.csv", ["t", "lhs", "rhs", "marginal_w1", "violated"],
        zip(audit.times, audit.lhs, audit.rhs, audit.marginal_distance, audit.violated),
    )
    write_csv(
        out / "coupling_summary.csv",
        ["beta", "gamma", "Gamma", "slack", "violation_fraction", "C", "ratio", "ratio_within_C", "max_sup_diff"],
        [(beta, gamma, lipschitz_constants(sim.V, sim.W).Gamma, c["slack"], audit.violation_fraction,
          audit.constant_C, audit.ratio, audit.ratio_within_C, float(run.sup_differences().max()))],
    )
    chart = svg_line_chart([("lhs", audit.times, audit.lhs), ("rhs", audit.times, audit.rhs)], "t", "W1 on [0,t]", "coupling audit")
    (out / "coupling.svg").write_text(chart)


def run_concentration(cfg, out):
    c = cfg["concentration"]
    sim = build_simulation(cfg, max(c["n_grid"]))
    table = estimate_tail(sim, c["m_ref"], c["n_grid"], c["eps_grid"], c["replicas"], cfg.seed, workers=cfg.workers)
    recs = table.to_records()
    keys = ["N", "eps", "replicas", "hits", "p_hat", "lo", "hi", "failed"]
    write_csv(out / "tail.csv", keys, [[r[k] for k in keys] for r in recs])
    try:
        fit = fit_rate(table)
        fit_row = (fit.K_hat, fit.intercept, fit.rows_used, float(np.sqrt(np.mean(fit.residuals**2))), "")
    except ValueError as exc:
        fit_row = (None, None, 0, None, str(exc))
    write_csv(out / "rate_fit.csv", ["K_hat", "intercept", "rows_used", "rms_residual", "note"], [fit_row])
    series = []
    for eps in c["eps_grid"]:
        rows = [r for r in table.rows if r.eps == eps and 0 < r.hits]
        series.append((f"eps={eps:.3g}", [r.N * eps**2 for r in rows], [-math.log(r.p_hat) for r in rows]))
    (out / "tail.svg").write_text(svg_line_chart(series, "N eps^2", "-ln p_hat", "tail decay"))


def run_covering(cfg, out):
    c = cfg["covering"]
    spec = HolderBallSpec(cfg["run"]["dim"], c["horizon"], c["radius"], c["alpha"])
    threshold = lower_bound_threshold(spec)
    rows = []
    for r in c["r_grid"]:
        upper = covering_upper_bound_log(spec, r)
        lower = covering_lower_bound_log(spec, r) if r <= threshold else None
        count = J = K = None
        if spec.d == 1 and r < spec.R:
            J, K = cover_parameters(spec, r)
            try:
                count = build_cover(spec, r, cap=c["enumeration_cap"]).count
            except EnumerationTooLargeError:
                count = None
        rows.append((r, lower, upper, count, J, K))
    write_csv(out / "covering.csv", ["r", "log_lower", "log_upper", "count", "J", "K"], rows)
    rs = [row[0] for row in rows]
    series = [("log upper", rs, [row[2] for row in rows])]
    low = [(row[0], row[1]) for row in rows if row[1] is not None]
    if low:
        series.append(("log lower", [p[0] for p in low], [p[1] for p in low]))
    (out / "covering.svg").write_text(svg_line_chart(series, "r", "log N(r)", "covering bounds"))


def run_chaos(cfg, out):
    c = cfg["chaos"]
    sim = build_simulation(cfg, max(c["n_grid"]))
    rows = chaos_experiment(sim, c["m_ref"], c["n_grid"], c["replicas"], cfg.seed, c["pair_cap"], workers=cfg.workers)
    header = ["N", "replicas", "median", "mean", "pair_atoms", "proxy_atoms", "subsampled", "subsample_seed"]
    write_csv(out / "chaos.csv", header, [[getattr(r, k) for k in header] for r in rows])
    chart = svg_line_chart([("median", [r.N for r in rows], [r.median for r in rows])], "N", "W1 pairs vs product", "chaos")
    (out / "chaos.svg").write_text(chart)


def run_bounds(cfg, out):
    b = cfg["bounds"]
    try:
        params = TheoremParameters(b["p"], b["lam"], b["lam_prime"], b["a"], b["alpha"], b["alpha_prime"], b["n0"])
    except ValueError as exc:
        raise ConfigError(f"[bounds] {exc}") from None
    _check(b["eps"] > 0 and b["N"] >= 1, "[bounds] eps must be positive and N >= 1")
    res = bound_calculator(params, b["eps"], b["N"])
    header = ["p", "lam", "lam_prime", "a", "alpha", "alpha_prime", "n0", "eps", "N",
              "beta_p", "log_rhs", "rhs", "condition_met", "log_required_n"]
    write_csv(out / "bounds.csv", header, [(
        b["p"], b["lam"], b["lam_prime"], b["a"], b["alpha"], b["alpha_prime"], b["n0"], b["eps"], b["N"],
        params.beta_p, res.log_rhs, res.rhs, res.condition_met, res.log_required_n,
    )])


PIPELINES = {
    "simulate": run_simulate,
    "coupling": run_coupling,
    "concentration": run_concentration,
    "covering": run_covering,
    "chaos": run_chaos,
    "bounds": run_bounds,
}


def _prepare_target(out: FsPath):
    if out.exists():
        if not out.is_dir() or (any(out.iterdir()) and not (out / "manifest.json").exists()):
            raise ConfigError(f"output {out} exists and is not a previous run directory")


def run(cfg: RunConfig) -> dict:
    """Execute one pipeline and return its manifest.

    Artifacts appear in ``cfg.out`` only if the whole pipeline succeeds.
    """
    _prepare_target(cfg.out)
    cfg.out.parent.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    tmp = FsPath(tempfile.mkdtemp(prefix=f".{cfg.out.name}-", dir=cfg.out.parent))
    try:
        PIPELINES[cfg.subcommand](cfg, tmp)
        files = {}
        for f in sorted(p for p in tmp.rglob("*") if p.is_file()):
            files[f.relative_to(tmp).as_posix()] = git_blob_sha1(f.read_bytes())
        manifest = {
            "subcommand": cfg.subcommand,
            "master_seed": cfg.seed,
            "version": __version__,
            "config": cfg.echo,
            "files": files,
            "duration_seconds": round(time.perf_counter() - start, 3),
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        if cfg.out.exists():
            shutil.rmtree(cfg.out)
        os.replace(tmp, cfg.out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def build_parser():
    ap = argparse.ArgumentParser(prog="mfc", description="Mean-field path-space concentration experiments.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="INI run config")
    ap.add_argument("--workers", type=int, default=None, help="process pool size (default: CPU count)")
    ap.add_argument("--out", default=None, help="output directory (default: ./mfc-<subcommand>)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.subcommand, args.config, args.out, args.workers)
        manifest = run(cfg)
    except ConfigError as exc:
        print(f"mfc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any pipeline failure maps to exit 1
        print(f"mfc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"mfc: wrote {len(manifest['files'])} files to {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
