"""Run orchestration: subcommand pipelines, deterministic artifacts, manifests.

Every subcommand reads a validated RunConfig, writes its declared outputs
(field snapshots, CSV time series, JSON manifest) into the output directory,
and returns exit status 0 on success, 2 on validation failure, 3 on solver
failure. Identical config + seed reproduce byte-identical CSV and snapshot
outputs; the manifest lists every file written.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .adjoint import dual_bound_report, solve_adjoint
from .config import ConfigError, RunConfig, load_config
from .forward import SolverError, check_separation, solve_forward, stability_norms
from .grid import Field, l2_norm_values, write_field
from .linearized import taylor_test
from .reduced import (OptimizationError, Problem, cost_eval,
                      directional_derivative, gradient_pairing, optimize,
                      smooth_cost, smooth_gradient, sparsity_map)

SUBCOMMANDS = ("forward", "adjoint", "taylor-test", "grad-check", "optimize",
               "sparsity-map", "adjoint-test", "report")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _problem(cfg: RunConfig) -> Problem:
    return Problem(cfg.grid, cfg.tg, cfg.params, cfg.pot, cfg.nl, cfg.init)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.17g}" if isinstance(v, float) else v
                             for v in row])


def _jsonable(value):
    """Strict-JSON-safe copy: numpy scalars unboxed, non-finite as strings."""
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return repr(value)
    return value


def _write_manifest(out: Path, subcommand: str, cfg: RunConfig, seed: int,
                    metrics: dict, files: list, started: float) -> dict:
    manifest = {
        "subcommand": subcommand,
        "config": str(cfg.path),
        "config_sha256": cfg.sha256,
        "code_version": __version__,
        "seed": seed,
        "wall_time_s": round(time.monotonic() - started, 3),
        "metrics": _jsonable(metrics),
        "files": sorted(files),
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _seeded_directions(cfg: RunConfig, seed: int, count: int):
    """Raw control-shaped probe directions, uniform in [-1, 1], box-projected."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        first = None
        if cfg.control.first_raw is not None:
            first = rng.uniform(-1.0, 1.0, cfg.control.first_raw.shape)
            first = np.clip(first, *cfg.box.bounds(1))
        h2 = np.clip(rng.uniform(-1.0, 1.0, cfg.control.u2.shape),
                     *cfg.box.bounds(2))
        out.append((first, h2))
    return out


def _shifted(control, h, t):
    first = None
    if control.first_raw is not None:
        first = control.first_raw + t * h[0]
    return control.with_raw(first, control.u2 + t * h[1])


def run_forward(cfg: RunConfig, out: Path, seed: int, started: float):
    traj = solve_forward(cfg.init, cfg.control, cfg.params, cfg.pot, cfg.nl,
                         cfg.tg)
    grid = cfg.grid
    rows = []
    for k, t in enumerate(cfg.tg.times()):
        rows.append((float(t),
                     l2_norm_values(grid, traj.mu[k]),
                     l2_norm_values(grid, traj.mu_t[k]),
                     float(np.min(traj.phi[k])),
                     float(np.max(traj.phi[k])),
                     l2_norm_values(grid, traj.sigma[k])))
    _write_csv(out / "norms.csv",
               ("t", "norm_mu", "norm_mu_t", "min_phi", "max_phi",
                "norm_sigma"), rows)
    files = ["norms.csv"]
    for k in sorted({0, cfg.tg.steps // 2, cfg.tg.steps}):
        for name in ("mu", "mu_t", "phi", "sigma"):
            fname = f"{name}_t{k:05d}.fld"
            write_field(out / fname, traj.field(name, k))
            files.append(fname)

    sep = check_separation(traj, cfg.pot)
    norms = stability_norms(traj)
    metrics = {
        "steps": cfg.tg.steps,
        "newton_iterations_max": traj.newton_iterations_max,
        "phi_min": sep.r_star_observed,
        "phi_max": sep.r_upper_observed,
        "separation_margin": sep.margin_to_domain,
        "sup_norm_mu_t": norms.sup_mu_t,
        "sup_norm_mu_h1": norms.sup_mu_v,
        "sup_norm_phi_inf": norms.sup_phi_inf,
        "sup_norm_sigma_h1": norms.sup_sigma_v,
    }
    return metrics, files


def run_adjoint(cfg: RunConfig, out: Path, seed: int, started: float):
    base = solve_forward(cfg.init, cfg.control, cfg.params, cfg.pot, cfg.nl,
                         cfg.tg)
    adj = solve_adjoint(base, cfg.control, cfg.cost, cfg.params, cfg.pot,
                        cfg.nl, cfg.tg)
    files = []
    for k in sorted({0, cfg.tg.steps // 2}):
        for name in ("p", "q", "r"):
            fname = f"{name}_t{k:05d}.fld"
            write_field(out / fname,
                        Field(cfg.grid, getattr(adj, name)[k].copy()))
            files.append(fname)
    bounds = dual_bound_report(adj, base, cfg.nl)
    lines = [f"p_sup: {bounds.p_sup:.17g}",
             f"r_sup: {bounds.r_sup:.17g}",
             f"weighted_p_sup: {bounds.weighted_p_sup:.17g}"]
    (out / "dual_bounds.txt").write_text("\n".join(lines) + "\n")
    files.append("dual_bounds.txt")
    metrics = {"p_sup": bounds.p_sup, "r_sup": bounds.r_sup,
               "weighted_p_sup": bounds.weighted_p_sup}
    return metrics, files


def run_taylor_test(cfg: RunConfig, out: Path, seed: int, started: float):
    h = _seeded_directions(cfg, seed, 1)[0]
    result = taylor_test(cfg.init, cfg.control, h, cfg.params, cfg.pot,
                         cfg.nl, cfg.tg)
    rows = []
    prev = None
    for t, r in zip(result.t_values, result.remainders):
        local = ""
        if prev is not None and r > 0 and prev[1] > 0:
            local = float((np.log(r) - np.log(prev[1]))
                          / (np.log(t) - np.log(prev[0])))
        rows.append((float(t), float(r), local))
        prev = (t, r)
    _write_csv(out / "taylor.csv", ("t", "remainder", "local_slope"), rows)
    metrics = {"slope": result.slope, "exact": result.exact}
    return metrics, ["taylor.csv"]


def run_grad_check(cfg: RunConfig, out: Path, seed: int, started: float,
                   count: int = 5, probe: float = 1e-5):
    problem = _problem(cfg)
    u = cfg.control
    base = problem.solve_state(u)
    adj = problem.solve_adjoint(base, u, cfg.cost)
    grad = smooth_gradient(adj, base, u, cfg.cost, cfg.nl, cfg.tg, cfg.grid)
    rows = []
    worst_lin = worst_adj = 0.0
    for i, h in enumerate(_seeded_directions(cfg, seed, count)):
        dj_lin = directional_derivative(problem, u, h, cfg.cost, base=base)
        dj_adj = gradient_pairing(grad, h, cfg.tg, cfg.grid)
        jp = smooth_cost(problem, _shifted(u, h, probe), cfg.cost)
        jm = smooth_cost(problem, _shifted(u, h, -probe), cfg.cost)
        fd = (jp - jm) / (2 * probe)
        rel_lin = abs(dj_lin - fd) / max(abs(fd), 1e-300)
        rel_adj = abs(dj_adj - dj_lin) / max(abs(dj_lin), 1e-300)
        worst_lin = max(worst_lin, rel_lin)
        worst_adj = max(worst_adj, rel_adj)
        rows.append((i, float(probe), fd, dj_lin, dj_adj, rel_lin, rel_adj))
    _write_csv(out / "gradcheck.csv",
               ("direction", "probe_step", "fd_value", "linearized_value",
                "adjoint_value", "rel_err_lin_vs_fd", "rel_err_adj_vs_lin"),
               rows)
    metrics = {"max_rel_err_lin_vs_fd": worst_lin,
               "max_rel_err_adj_vs_lin": worst_adj,
               "directions": count, "probe_step": probe}
    return metrics, ["gradcheck.csv"]


def run_adjoint_test(cfg: RunConfig, out: Path, seed: int, started: float,
                     count: int = 3):
    problem = _problem(cfg)
    u = cfg.control
    base = problem.solve_state(u)
    adj = problem.solve_adjoint(base, u, cfg.cost)
    grad = smooth_gradient(adj, base, u, cfg.cost, cfg.nl, cfg.tg, cfg.grid)
    rows = []
    worst = 0.0
    signs_ok = True
    for i, h in enumerate(_seeded_directions(cfg, seed, count)):
        dj_lin = directional_derivative(problem, u, h, cfg.cost, base=base)
        dj_adj = gradient_pairing(grad, h, cfg.tg, cfg.grid)
        gap = abs(dj_adj - dj_lin) / max(abs(dj_lin), 1e-300)
        agree = bool(np.sign(dj_adj) == np.sign(dj_lin))
        signs_ok = signs_ok and agree
        worst = max(worst, gap)
        rows.append((i, dj_lin, dj_adj, gap, int(agree)))
    _write_csv(out / "adjoint_test.csv",
               ("direction", "dj_linearized", "dj_adjoint", "rel_gap",
                "sign_agree"), rows)
    metrics = {"max_rel_gap": worst, "signs_agree": signs_ok}
    return metrics, ["adjoint_test.csv"]


def _optimize_pipeline(cfg: RunConfig, out: Path):
    problem = _problem(cfg)
    result = optimize(problem, cfg.control, cfg.cost, cfg.box, cfg.opt)
    report = sparsity_map(result.trajectory, result.dual, result.control,
                          cfg.cost, cfg.nl, cfg.tg, cfg.grid)
    return problem, result, report


def _snapshot_slices(tg):
    mid = tg.steps // 2
    return sorted({0, mid, tg.steps - 1})


def _write_mask_snapshots(cfg: RunConfig, out: Path, report):
    files = []
    masks = (("predicted_zero_u1", report.predicted_zero_1),
             ("actual_zero_u1", report.actual_zero_1),
             ("predicted_zero_u2", report.predicted_zero_2),
             ("actual_zero_u2", report.actual_zero_2))
    for k in _snapshot_slices(cfg.tg):
        for name, mask in masks:
            if mask is None or mask.ndim != 2:
                continue
            fname = f"{name}_slice{k:05d}.fld"
            write_field(out / fname, Field(cfg.grid, mask[k].astype(float)))
            files.append(fname)
    return files


def run_optimize(cfg: RunConfig, out: Path, seed: int, started: float):
    problem, result, report = _optimize_pipeline(cfg, out)
    rows = []
    for i, total in enumerate(result.cost_history):
        resid = (result.residual_history[i]
                 if i < len(result.residual_history) else "")
        rows.append((i, total, resid))
    _write_csv(out / "cost_history.csv",
               ("iteration", "total_cost", "stationarity_residual"), rows)
    files = ["cost_history.csv"]
    u1_q, u2_q = result.control.expand(cfg.tg, cfg.grid)
    for k in _snapshot_slices(cfg.tg):
        for name, arr in (("u1", u1_q), ("u2", u2_q)):
            fname = f"{name}_slice{k:05d}.fld"
            write_field(out / fname, Field(cfg.grid, arr[k].copy()))
            files.append(fname)
    files.extend(_write_mask_snapshots(cfg, out, report))
    final_cost = cost_eval(result.trajectory, result.control, cfg.cost,
                           cfg.tg, cfg.grid)
    metrics = {
        "iterates": result.iterates,
        "converged": result.converged,
        "stationarity_residual": result.stationarity_residual,
        "cost_total": final_cost.total,
        "cost_smooth": final_cost.smooth,
        "cost_sparsity": final_cost.sparsity,
        "sparsity_fraction": list(result.sparsity_fraction),
        "mask_agreement": [report.agreement_1, report.agreement_2],
    }
    return metrics, files


def run_sparsity_map(cfg: RunConfig, out: Path, seed: int, started: float):
    problem, result, report = _optimize_pipeline(cfg, out)
    files = _write_mask_snapshots(cfg, out, report)
    metrics = {
        "iterates": result.iterates,
        "converged": result.converged,
        "stationarity_residual": result.stationarity_residual,
        "sparsity_fraction": list(result.sparsity_fraction),
        "agreement_u1": report.agreement_1,
        "agreement_u2": report.agreement_2,
        "excluded_cells": [None if report.excluded_1 is None
                           else int(np.sum(report.excluded_1)),
                           int(np.sum(report.excluded_2))],
    }
    return metrics, files


def run(subcommand: str, config_path, out_dir=None, seed=None) -> tuple[int, dict]:
    """Execute one subcommand; returns (exit status, manifest dict)."""
    started = time.monotonic()
    if subcommand == "report":
        from .report import render_report
        out = Path(out_dir if out_dir is not None else ".")
        figures = render_report(out)
        return EXIT_OK, {"subcommand": "report", "files": figures}

    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    try:
        cfg = load_config(config_path)
    except ConfigError as err:
        for violation in err.violations:
            print(f"config violation {violation}")
        return EXIT_CONFIG, {"violations": [str(v) for v in err.violations]}

    if seed is None:
        seed = cfg.seed
    out = Path(out_dir if out_dir is not None else Path("runs") / subcommand)
    out.mkdir(parents=True, exist_ok=True)

    handler = {
        "forward": run_forward,
        "adjoint": run_adjoint,
        "taylor-test": run_taylor_test,
        "grad-check": run_grad_check,
        "adjoint-test": run_adjoint_test,
        "optimize": run_optimize,
        "sparsity-map": run_sparsity_map,
    }[subcommand]
    try:
        metrics, files = handler(cfg, out, seed, started)
    except (SolverError, OptimizationError) as err:
        print(f"solver failure: {err}")
        manifest = _write_manifest(out, subcommand, cfg, seed,
                                   {"error": str(err)}, [], started)
        return EXIT_SOLVER, manifest
    files.append("manifest.json")
    manifest = _write_manifest(out, subcommand, cfg, seed, metrics, files,
                               started)
    return EXIT_OK, manifest
