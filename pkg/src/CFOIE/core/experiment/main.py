"""
Experiment drivers: convergence, low-frequency and frequency sweeps, a single
full-output run and the verification suite. Each driver returns (table, ok) where
`ok` is False when any requested solve did not converge or a check failed.
"""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path
import time
import numpy as np
import pandas as pd
from CFOIE import __version__
from CFOIE.core.errors import (
    ConvergenceError, CoincidentPointsError, InvalidParameterError, NearSurfaceError, QuadratureError,
    SingularOperatorError,
)
from CFOIE.core.experiment.config import RunConfig
from CFOIE.core.experiment.problem import ScatteringProblem, build_grid, solve_and_evaluate
from CFOIE.core.geometry.surfaces import export_nodes
from CFOIE.core.operators.formulations import Formulation
from CFOIE.core.post.fields import surface_current
from CFOIE.oracle.identities import PROBE_RADIUS, greens_identity_check, row_sum_checks
from CFOIE.oracle.mie import MieConfig, pec_residual
import util.file as fs
from util.io import IOManager

io_manager = IOManager("[Experiment]")

# Failures that mark one solve as unconverged; anything else propagates.
SOLVE_FAILURES = (ConvergenceError, SingularOperatorError, QuadratureError, InvalidParameterError,
                  NearSurfaceError, CoincidentPointsError, np.linalg.LinAlgError)

CONVERGENCE_COLUMNS = ["config_hash", "surface", "formulation", "refinement", "p", "N", "h", "lambda_over_h",
                       "k", "eta", "xi", "e_F", "e_F_corrected", "e_divF", "q_max", "iterations", "converged"]
SWEEP_COLUMNS = ["config_hash", "surface", "formulation", "lambda_over_d", "k_over_pi", "k", "eta", "xi", "N",
                 "e_F", "e_divF", "q_max", "q", "iterations", "converged"]
VERIFY_COLUMNS = ["config_hash", "check", "value", "threshold", "passed"]


def _surface_label(cfg: RunConfig):
    s = cfg.surface
    return f"two_tori-{s.configuration}" if s.kind == "two_tori" else s.kind


def _workers(cfg: RunConfig, threads, points):
    """(pool size over sweep points, assembly workers per point)."""
    total = threads or cfg.threads or 1
    outer = max(1, min(total, points))
    return outer, max(1, total // outer)


def _point_rows(problem: ScatteringProblem, cfg: RunConfig, common: dict):
    """Solve every requested formulation (and xi) at one sweep point."""
    rows, reports = [], []
    for name in cfg.formulations:
        for xi in cfg.xi_for(name):
            start = time.perf_counter()
            try:
                solution, report, converged = solve_and_evaluate(problem, name, xi)
                eta = problem.params(name, xi).eta
            except SOLVE_FAILURES as e:
                io_manager.write_error(f"{name} (xi={xi:g}) failed at {common}: {e}")
                solution, report, converged, eta = None, None, False, cfg.eta
            row = dict(common, formulation=name, xi=float(xi), eta=eta, converged=converged)
            if report is not None:
                row.update(e_F=report.e_F, e_F_corrected=report.e_field_corrected, e_divF=report.e_divF,
                           q_max=report.q_max, q=";".join(f"{abs(v):.5e}" for v in report.q),
                           iterations=report.iterations)
            rows.append(row)
            reports.append({
                **{key: row[key] for key in row if key != "q"},
                "report": report.to_dict() if report is not None else None,
                "solve": solution.report.to_dict() if solution is not None else None,
                "wall_time": time.perf_counter() - start,
            })
    return rows, reports


def _run_points(tasks, outer):
    """Run (key, fn) tasks in a thread pool; rows come back sorted by key."""
    results = []
    with ThreadPoolExecutor(max_workers=outer) as executor:
        futures = {executor.submit(fn): key for key, fn in tasks}
        for future in as_completed(futures):
            results.append((futures[future], *future.result()))
    results.sort(key=lambda item: item[0])
    rows = [row for _, point_rows, _ in results for row in point_rows]
    reports = [rep for _, _, point_reports in results for rep in point_reports]
    return rows, reports


def _table(rows, columns, cfg: RunConfig, sort_by):
    """Rows in a deterministic order; "_f" in sort_by stands for the configured formulation order."""
    order = {name: i for i, name in enumerate(cfg.formulations)}
    table = pd.DataFrame(rows).reindex(columns=columns)
    table["config_hash"] = cfg.hash
    table["_f"] = table["formulation"].map(order)
    table = table.sort_values(sort_by, kind="stable").drop(columns="_f")
    return table.reset_index(drop=True)


def _finish(table, reports, cfg: RunConfig, out_dir, name, started, extra=None):
    fs.write_table(table, Path(out_dir) / f"{name}.tsv")
    metadata = {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash,
        "wall_time": time.perf_counter() - started,
        "points": reports,
    }
    metadata.update(extra or {})
    fs.write_json(metadata, Path(out_dir) / "metadata.json")
    ok = bool(table["converged"].all()) if "converged" in table else bool(table["passed"].all())
    if not ok:
        io_manager.write_warning(f"{name}: at least one solve did not converge or check failed")
    return table, ok


def run_convergence(cfg: RunConfig, out_dir, threads=None):
    """Solve every formulation for each (refinement, p) at fixed k."""
    started = time.perf_counter()
    points = [(n, p) for n in cfg.refinements for p in cfg.orders]
    outer, inner = _workers(cfg, threads, len(points))
    io_manager.write_debug(f"Convergence sweep: {len(points)} grid(s), {outer} worker(s), k={cfg.k:.6g}")

    def point(n, p):
        problem = ScatteringProblem.build(cfg, n, p, cfg.k, inner)
        grid = problem.grid
        common = {"surface": _surface_label(cfg), "refinement": n, "p": p, "N": grid.size, "h": grid.h,
                  "lambda_over_h": 2.0 * np.pi / cfg.k / grid.h, "k": cfg.k}
        return _point_rows(problem, cfg, common)

    rows, reports = _run_points([((n, p), lambda n=n, p=p: point(n, p)) for n, p in points], outer)
    table = _table(rows, CONVERGENCE_COLUMNS, cfg, ["refinement", "p", "_f", "xi"])
    return _finish(table, reports, cfg, out_dir, "convergence", started)


def _fixed_grid_sweep(cfg: RunConfig, out_dir, threads, name, column, values, wavenumber):
    """One grid, one kernel set per sweep value; k = wavenumber(value, grid)."""
    started = time.perf_counter()
    grid = build_grid(cfg, *cfg.resolution)
    outer, inner = _workers(cfg, threads, len(values))
    io_manager.write_debug(f"{name} sweep on N={grid.size}: {len(values)} point(s), {outer} worker(s)")

    def point(value):
        k = wavenumber(value, grid)
        common = {column: value, "surface": _surface_label(cfg), "k": k, "N": grid.size}
        return _point_rows(ScatteringProblem(cfg, grid, k, inner), cfg, common)

    rows, reports = _run_points([(i, lambda v=v: point(v)) for i, v in enumerate(values)], outer)
    table = _table(rows, SWEEP_COLUMNS, cfg, [column, "_f", "xi"])
    return _finish(table, reports, cfg, out_dir, name, started, {"diameter": grid.diameter})


def run_lowfreq(cfg: RunConfig, out_dir, threads=None):
    """
    Fixed grid, k = 2 pi / (lambda/d * d) with d the surface diameter, for each
    lambda/d of the sweep, every formulation and every xi.
    """
    return _fixed_grid_sweep(cfg, out_dir, threads, "lowfreq", "lambda_over_d", cfg.lambda_over_d,
                             lambda ratio, grid: 2.0 * np.pi / (ratio * grid.diameter))


def run_frequency(cfg: RunConfig, out_dir, threads=None):
    """Fixed grid, k = pi * (k/pi) for each entry of the sweep."""
    return _fixed_grid_sweep(cfg, out_dir, threads, "frequency", "k_over_pi", cfg.k_over_pi,
                             lambda ratio, grid: np.pi * ratio)


def _node_table(grid, columns):
    data = {"x": grid.points[:, 0], "y": grid.points[:, 1], "z": grid.points[:, 2]}
    for name, field in columns.items():
        for c, axis in enumerate("xyz"):
            data[f"{name}{axis}_re"] = field[c].real
            data[f"{name}{axis}_im"] = field[c].imag
    return pd.DataFrame(data)


def run_single(cfg: RunConfig, out_dir, threads=None):
    """
    One grid, one k, every formulation: slice fields, traces, currents (magnetic)
    and node exports per formulation in its own sub-directory.
    """
    started = time.perf_counter()
    refinement, order = cfg.resolution
    problem = ScatteringProblem.build(cfg, refinement, order, cfg.k, threads or cfg.threads or 1)
    out_dir = Path(out_dir)
    if cfg.output.dump_matrices:
        problem.dump_matrices(out_dir / "matrices")

    common = {"surface": _surface_label(cfg), "refinement": refinement, "p": order, "N": problem.grid.size,
              "h": problem.grid.h, "lambda_over_h": 2.0 * np.pi / cfg.k / problem.grid.h, "k": cfg.k}
    rows, reports, extra = [], [], {}
    for name in cfg.formulations:
        xi = cfg.xi_for(name)[-1]
        target = out_dir / name
        target.mkdir(parents=True, exist_ok=True)
        start = time.perf_counter()
        try:
            solution = problem.solve(name, xi)
        except ConvergenceError as e:
            io_manager.write_error(f"{name} did not converge: {e}")
            rows.append(dict(common, formulation=name, xi=xi, eta=problem.params(name, xi).eta, converged=False,
                             iterations=e.report.iterations if e.report is not None else 0))
            continue
        report = problem.evaluate(solution)

        slice_ds = problem.slice_dataset(solution, cfg.slice)
        fs.write_table(slice_ds.to_dataframe().reset_index(), target / "slice.tsv")
        fs.write_table(_node_table(problem.grid, {"gamma": solution.gamma, "dn": solution.dn}), target / "traces.tsv")
        export_nodes(problem.grid, target / "nodes.tsv")
        if solution.family == "magnetic":
            J = surface_current(solution.density, problem.grid)
            fs.write_table(_node_table(problem.grid, {"J": J}), target / "currents.tsv")
            if solution.regular:
                extra[f"strattonchu_{name}"] = problem.strattonchu_check(solution)

        row = dict(common, formulation=name, xi=float(xi), eta=solution.params.eta, converged=True,
                   e_F=report.e_F, e_F_corrected=report.e_field_corrected, e_divF=report.e_divF,
                   q_max=report.q_max, iterations=report.iterations)
        rows.append(row)
        reports.append({**row, "report": report.to_dict(), "solve": solution.report.to_dict(),
                        "wall_time": time.perf_counter() - start})
        fs.write_json({"version": __version__, "config": cfg.to_dict(), "config_hash": cfg.hash, **reports[-1]},
                      target / "metadata.json")

    table = _table(rows, CONVERGENCE_COLUMNS, cfg, ["_f"])
    return _finish(table, reports, cfg, out_dir, "single", started, extra)


def run_verify(cfg: RunConfig, out_dir, threads=None):
    """
    Oracle suite on the configured surface at the finest configured resolution:
    quadrature row sums, Green's identity and Calderon residuals, the Mie PEC
    self-residual (spheres) and one manufactured dipole solve per formulation.
    """
    started = time.perf_counter()
    refinement, order = cfg.resolution
    workers = threads or cfg.threads or 1
    checks = cfg.checks
    spec = cfg.surface.spec()
    grid = build_grid(cfg, refinement, order)
    rows = []

    def record(name, value, threshold):
        passed = bool(np.isfinite(value) and value <= threshold)
        level = io_manager.write_debug if passed else io_manager.write_error
        level(f"{name}: {value:.3e} (threshold {threshold:.1e})")
        rows.append({"check": name, "value": float(value), "threshold": threshold, "passed": passed})

    sums = row_sum_checks(grid, cfg.quadrature, workers)
    record("k0_rowsum", sums["k0_rowsum"], checks.k0_rowsum)
    if spec.kind == "sphere":
        record("s0_rowsum", sums["s0_rowsum"], checks.s0_rowsum)

    dipole_cfg = replace(cfg, incident=replace(cfg.incident, type="dipole"))
    problem = ScatteringProblem(dipole_cfg, grid, cfg.k, workers)
    rng = np.random.default_rng(cfg.seed)
    directions = rng.normal(size=(cfg.targets.count, 3))
    probes = PROBE_RADIUS * directions / np.linalg.norm(directions, axis=-1, keepdims=True)
    identity = greens_identity_check(grid, spec.interior_points()[0], cfg.k, problem.mats, probes)
    record("greens_exterior", identity.exterior, checks.greens_exterior)
    record("greens_interior", identity.interior, checks.greens_interior)
    record("calderon", identity.calderon, checks.calderon)

    if spec.kind == "sphere":
        wave = replace(cfg.incident, type="planewave").build(cfg.k, spec)
        record("mie_pec", pec_residual(MieConfig(spec.radius, wave)), checks.mie_pec)

    for name in cfg.formulations:
        kind = Formulation(name).family
        variant = problem.with_config(replace(dipole_cfg, incident=replace(dipole_cfg.incident, dipole=kind)))
        _, report, converged = solve_and_evaluate(variant, name)
        record(f"dipole_{name}", report.e_F if converged else float("nan"), checks.dipole_error)

    table = pd.DataFrame(rows).reindex(columns=VERIFY_COLUMNS)
    table["config_hash"] = cfg.hash
    return _finish(table, [], cfg, out_dir, "verify", started, {"N": grid.size})


DRIVERS = {
    "convergence": run_convergence,
    "lowfreq": run_lowfreq,
    "frequency": run_frequency,
    "single": run_single,
    "verify": run_verify,
}
