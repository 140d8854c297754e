"""Run one configured experiment and write report.json, CSVs and a manifest."""
from __future__ import annotations

import datetime as _dt
import json
import math
import platform
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import KINDS, ExperimentConfig, load_config
from .ensemble import EnsembleSpec, Problem
from .frequency import (calibrate_allowance, check_dH_identity, check_monotonicity,
                        frequency_trace, scaled_frequency, write_trace_csv)
from .hum import (ControlProblem, gramian_apply, hum_summary, solve_hum,
                  verify_duality_identity, write_control_csv)
from .lattice import Grid, cube_tiling, make_grid
from .observability import (TimeSet, alpha_from_theta, choose_kappa, density_sequence,
                            observability_report, write_telescoping_csv)
from .sde import constant_coefficients, gaussian_bump, random_coefficients
from .verifiers import (InequalityReport, calibrate_c1, check_caccioppoli, check_energy,
                        check_global_interpolation, check_gradient_estimate,
                        check_h0_lower_bound, check_two_ball_one_cylinder, observation_set,
                        random_bumps)
from .weights import WeightParams, frequency_cutoff

EXPERIMENTS = {
    "energy": "energy estimate: E|phi(T)|^2 <= exp((2|a|+|b|^2)T) E|phi0|^2",
    "caccioppoli": "local energy (Caccioppoli-type) bound with constant C1",
    "gradient": "local gradient bound with constant C2",
    "h0": "explicit h0 and the lower bound on the small-ball mass near T",
    "dh-identity": "time-derivative identity for the weighted mass H",
    "monotonicity": "growth bound for the parabolic frequency N = 2D/H",
    "two-ball": "two-ball and one-cylinder interpolation inequality",
    "interpolation": "global interpolation inequality over a cube tiling",
    "observability": "observability from omega x E, E a positive-measure time set",
    "hum": "null controllability of the backward equation by duality (b1 = 0)",
}


def list_experiments() -> list[tuple[str, str]]:
    return [(k, EXPERIMENTS[k]) for k in KINDS]


def bundled_name(kind: str) -> str:
    return kind.replace("-", "_") + "_check"


# ---- builders ----------------------------------------------------------------

def build_grid(cfg: ExperimentConfig) -> Grid:
    g = cfg.grid
    return make_grid(g.dim, g.extent, g.points)


def build_coefficients(cfg: ExperimentConfig, grid: Grid):
    c = cfg.coefficients
    if c.type == "constant":
        return constant_coefficients(c.a, c.b)
    return random_coefficients(grid, c.seed, c.a_max, c.b_max)


def center(cfg: ExperimentConfig, values) -> tuple:
    return tuple(np.broadcast_to(np.asarray(values, float), (cfg.grid.dim,)))


def build_data(cfg: ExperimentConfig, grid: Grid) -> list[np.ndarray]:
    d = cfg.data
    if d.type == "bump":
        return [gaussian_bump(grid, center(cfg, d.center), d.width, d.amplitude)
                for _ in range(d.count)][:1] * d.count
    spread = d.spread if d.spread > 0 else None
    return [random_bumps(grid, (d.seed, i), spread=spread) for i in range(d.count)]


def build_spec(cfg: ExperimentConfig) -> EnsembleSpec:
    e = cfg.ensemble
    return EnsembleSpec(e.paths, e.seed, e.workers)


def _C1(cfg):
    return cfg.tolerances.C1 if cfg.tolerances.C1 > 0 else calibrate_c1()


# ---- experiments ---------------------------------------------------------------

def _problems(cfg, grid):
    co = build_coefficients(cfg, grid)
    return [Problem(grid, phi0, co, cfg.time.T, cfg.time.steps) for phi0 in build_data(cfg, grid)]


def run_energy(cfg, grid, spec, out):
    tol = cfg.tolerances
    return [check_energy(p, spec, tol.n_se, tol.allowance) for p in _problems(cfg, grid)], []


def run_caccioppoli(cfg, grid, spec, out):
    g, t = cfg.geometry, cfg.time
    C1 = _C1(cfg)
    return [check_caccioppoli(p, spec, center(cfg, g.x0), g.r, g.R, t.tau1, t.tau2, C1)
            for p in _problems(cfg, grid)], []


def run_gradient(cfg, grid, spec, out):
    g = cfg.geometry
    return [check_gradient_estimate(p, spec, center(cfg, g.x0), g.R, cfg.time.tau)
            for p in _problems(cfg, grid)], []


def run_h0(cfg, grid, spec, out):
    g, t = cfg.geometry, cfg.time
    C1 = _C1(cfg)
    return [check_h0_lower_bound(p, spec, center(cfg, g.x0), g.r, g.R, g.delta, t.tau1, t.tau2, C1)
            for p in _problems(cfg, grid)], []


def _frequency_setup(cfg, grid):
    g = cfg.geometry
    x0 = center(cfg, g.x0)
    chi = frequency_cutoff(grid, x0, g.R, g.delta)
    params = WeightParams(g.lam, x0, cfg.time.T, grid.dim)
    return chi, params


def run_dh_identity(cfg, grid, spec, out):
    chi, params = _frequency_setup(cfg, grid)
    problem = _problems(cfg, grid)[0]
    allow = calibrate_allowance(problem, chi, params, cfg.tolerances.safety)
    trace = frequency_trace(problem, spec, chi, params)
    rep = check_dH_identity(trace)
    tol = cfg.tolerances.n_se * rep.se + allow.dH
    frac = np.abs(rep.residual) / np.where(tol > 0, tol, np.inf)
    k = int(np.argmax(frac)) if frac.size else 0
    fine = check_dH_identity(frequency_trace(problem.with_steps(2 * problem.steps), spec, chi, params))
    refinement = rep.max_residual / fine.max_residual if fine.max_residual > 0 else float("nan")
    worst = float(np.max(frac)) if frac.size else 0.0
    details = {"allowance": allow.dH, "C_H": allow.C_H, "max_residual": rep.max_residual,
               "max_residual_half_dt": fine.max_residual, "refinement_ratio": refinement,
               "nodes": int(rep.residual.size), "nodes_beyond_tolerance": int(np.sum(frac > 1)),
               "worst_time": float(rep.times[k]) if frac.size else None,
               "rhs_scale": rep.scale}
    r = InequalityReport("dh-identity", float(abs(rep.residual[k])), float(tol[k]), worst, None,
                         {"residual_at_worst": float(rep.se[k])}, float(tol[k]),
                         bool(np.all(frac <= 1)), "", details)
    writer = lambda path: write_trace_csv(path, trace)  # noqa: E731
    return [r], [("frequency_trace.csv", writer)]


def run_monotonicity(cfg, grid, spec, out):
    chi, params = _frequency_setup(cfg, grid)
    problem = _problems(cfg, grid)[0]
    allow = calibrate_allowance(problem, chi, params, cfg.tolerances.safety)
    trace = frequency_trace(problem, spec, chi, params)
    rep = check_monotonicity(trace, allow.margin, cfg.tolerances.n_se)
    k = int(np.argmin(rep.margin + rep.tolerance))
    details = {"allowance": allow.margin, "C_N": allow.C_N, "min_margin": rep.min_margin,
               "violations": rep.violations, "nodes": int(rep.margin.size),
               "b_ball_norm": trace.b_ball_norm}
    verdict = rep.violations == 0
    if problem.coeffs.noise_free:
        q = scaled_frequency(trace)
        inc = float(np.max(np.diff(q)))
        s_max = params.T + params.lam
        q_tol = allow.margin * problem.dt * s_max
        details.update(scaled_frequency_max_increase=inc, scaled_frequency_tolerance=q_tol)
    r = InequalityReport("monotonicity", float(rep.dN[k]), float(rep.rhs[k]),
                         float(rep.dN[k] / rep.rhs[k]) if rep.rhs[k] != 0 else float("nan"),
                         None, {"margin_at_worst": float(rep.se[k])}, float(rep.tolerance[k]),
                         bool(verdict), "", details)
    writer = lambda path: write_trace_csv(path, trace, rep.margin)  # noqa: E731
    return [r], [("frequency_trace.csv", writer)]


def run_two_ball(cfg, grid, spec, out):
    g, tol = cfg.geometry, cfg.tolerances
    r = check_two_ball_one_cylinder(_problems(cfg, grid), spec, center(cfg, g.x0), g.r, g.R,
                                    g.delta, _C1(cfg), (tol.exponent_low, tol.exponent_high))
    return [r], []


def _omega(cfg, grid):
    return observation_set(cube_tiling(grid, cfg.geometry.R), cfg.geometry.r)


def run_interpolation(cfg, grid, spec, out):
    tol = cfg.tolerances
    r = check_global_interpolation(_problems(cfg, grid), spec, _omega(cfg, grid),
                                   (tol.exponent_low, tol.exponent_high))
    r.details["tiles"] = len(cube_tiling(grid, cfg.geometry.R))
    return [r], []


def run_observability(cfg, grid, spec, out):
    tol = cfg.tolerances
    omega = _omega(cfg, grid)
    problems = _problems(cfg, grid)
    interp = check_global_interpolation(problems, spec, omega, (tol.exponent_low, tol.exponent_high))
    reports = [interp]
    theta = interp.exponent
    if theta is None or not 0 < theta < 1:
        interp.note = "no admissible exponent; observability step skipped"
        return reports, []
    E = TimeSet(cfg.observation.intervals, cfg.time.T)
    seq = density_sequence(E, choose_kappa(alpha_from_theta(theta)))
    for i, p in enumerate(problems):
        rep = observability_report(p, spec, omega, E, theta, seq, seed=i)
        rep.details["datum"] = i
        reports.append(rep)
    writer = lambda path: write_telescoping_csv(path, seq)  # noqa: E731
    return reports, [("telescoping.csv", writer)]


def run_hum(cfg, grid, spec, out):
    co = build_coefficients(cfg, grid)
    yT = build_data(cfg, grid)[0]
    E = TimeSet(cfg.observation.intervals, cfg.time.T)
    problem = ControlProblem(grid, yT, _omega(cfg, grid), E, cfg.time.T, cfg.time.steps, co,
                             cfg.hum.tol, cfg.hum.max_iter)
    control = solve_hum(problem)
    rng = np.random.default_rng(cfg.ensemble.seed)
    sym = 0.0
    for _ in range(cfg.hum.pairs):
        x, y = rng.standard_normal((2,) + grid.shape)
        lx, ly = gramian_apply(x, problem), gramian_apply(y, problem)
        a, b = problem.inner(lx, y), problem.inner(x, ly)
        sym = max(sym, abs(a - b) / max(abs(a), abs(b), 1e-300))
    dual = verify_duality_identity(control.yh0, control.values, yT, problem)
    summary = hum_summary(control)
    summary.update(gramian_symmetry=sym, duality_residual=dual.relative,
                   support_ok=control.support_ok())
    verdict = (control.y0_norm_ratio <= cfg.hum.tol and sym <= 1e-8 and dual.relative <= 1e-8
               and control.support_ok())
    r = InequalityReport("hum", control.y0_norm, cfg.hum.tol * control.yT_norm,
                         control.y0_norm_ratio / cfg.hum.tol if cfg.hum.tol > 0 else float("nan"),
                         None, {}, cfg.hum.tol, bool(verdict), "", summary)
    arts = [("control.csv", lambda path: write_control_csv(path, control)),
            ("hum_report.json", lambda path: _write_json(path, summary))]
    return [r], arts


RUNNERS = {
    "energy": run_energy, "caccioppoli": run_caccioppoli, "gradient": run_gradient,
    "h0": run_h0, "dh-identity": run_dh_identity, "monotonicity": run_monotonicity,
    "two-ball": run_two_ball, "interpolation": run_interpolation,
    "observability": run_observability, "hum": run_hum,
}


# ---- serialisation ---------------------------------------------------------------

def jsonable(x):
    """Plain JSON types; non-finite floats become the strings 'nan', 'inf', '-inf'."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def apply_overrides(cfg: ExperimentConfig, seed=None, paths=None, workers=None, output_dir=None):
    cfg = replace(cfg, ensemble=replace(cfg.ensemble), output=replace(cfg.output))
    if seed is not None:
        cfg.ensemble.seed = int(seed)
    if paths is not None:
        cfg.ensemble.paths = int(paths)
    if workers is not None:
        cfg.ensemble.workers = int(workers)
    if output_dir is not None:
        cfg.output.dir = str(output_dir)
    return cfg


def run_config(cfg: ExperimentConfig, output_dir: str | Path | None = None) -> dict:
    """Execute the configured experiment(s); returns the report dictionary."""
    out = Path(output_dir or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg.experiment.kind
    digest = cfg.digest()
    if kind == "all":
        sub = []
        for k in KINDS:
            child = load_config(bundled_name(k))
            child = apply_overrides(child, seed=cfg.ensemble.seed if cfg.ensemble.seed else None,
                                    workers=cfg.ensemble.workers)
            sub.append(run_config(child, out / k))
        reports = [r for s in sub for r in s["reports"]]
        result = {"experiment": "all", "inputs_digest": digest,
                  "verdict": "pass" if all(s["verdict"] == "pass" for s in sub) else "fail",
                  "reports": reports}
    else:
        grid = build_grid(cfg)
        spec = build_spec(cfg)
        reports, artifacts = RUNNERS[kind](cfg, grid, spec, out)
        rows = []
        for r in reports:
            d = r.to_dict()
            d["inputs_digest"] = digest
            rows.append(d)
        for name, writer in artifacts:
            writer(out / name)
        result = {"experiment": kind, "name": cfg.experiment.name, "inputs_digest": digest,
                  "verdict": "pass" if all(r.verdict for r in reports) else "fail",
                  "reports": rows}
    _write_json(out / "report.json", result)
    manifest = {
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config": cfg.source, "config_digest": digest, "experiment": kind,
        "ensemble_seed": cfg.ensemble.seed, "paths": cfg.ensemble.paths,
        "workers": cfg.ensemble.workers, "coefficient_seed": cfg.coefficients.seed,
        "data_seed": cfg.data.seed, "package_version": __version__,
        "python": platform.python_version(), "numpy": np.__version__,
    }
    _write_json(out / "manifest.json", manifest)
    return jsonable(result)
