"""Command line entry point: ``cr-infinity run | identities | sweep``.

Exit codes: 0 all verification entries pass, 1 a verification entry fails,
2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import copy
import csv
import json
import logging
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .boundary import compute_boundary_point, jacobi_task, verification_entries
from .radial_ode import NumericalFailure, RiccatiBlowUp, make_grid
from .scenarios import ConfigError, ConfigWarning, Scenario, load_scenario, parse_scenario
from .tensor_core import verify_appendix_identities

log = logging.getLogger("cr_infinity")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
IDENTITY_TOL = 1e-12

# sweepable parameters and their TOML section
PARAM_SECTIONS = {
    "a": "decay", "b": "decay", "C0": "decay", "C1": "decay", "margin": "decay",
    "r_max": "integration", "tol": "integration", "grid": "integration",
    "n": "scenario", "seed": "scenario", "epsilon": "scenario", "points": "scenario",
}
INT_PARAMS = {"n", "seed", "points"}


# ---------------------------------------------------------------- serialization


def _clean(obj):
    """Make numpy containers JSON-ready; non-finite floats become strings."""
    if hasattr(obj, "to_dict"):
        return _clean(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _dump_json(path: Path, obj) -> None:
    # repr of a Python float is the shortest string that round-trips exactly
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _write_series(path: Path, grid: np.ndarray, quantities: dict) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "quantity", "value"])
        for name, values in quantities.items():
            for r, v in zip(grid, np.asarray(values, dtype=float)):
                w.writerow([f"{r:.17g}", name, f"{v:.17g}"])


# ---------------------------------------------------------------- pipeline


def apply_overrides(sc: Scenario, changes: dict) -> Scenario:
    """Re-validate a scenario with some parameters replaced."""
    doc = copy.deepcopy(sc.to_document())
    for key, value in changes.items():
        if value is None:
            continue
        if key not in PARAM_SECTIONS:
            raise ConfigError(f"unknown parameter {key!r}; choose from {sorted(PARAM_SECTIONS)}")
        doc[PARAM_SECTIONS[key]][key] = value
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConfigWarning)
        return parse_scenario(doc)


def run_scenario(sc: Scenario, jobs: int = 1) -> tuple[list, list]:
    """Compute every point of a scenario; returns (point results, entries)."""
    grid = make_grid(sc.r_max, sc.grid)
    S0, B = sc.S0(), sc.basis_matrix()
    m = 2 * sc.n + 1
    profiles = [sc.make_profile(p) for p in range(sc.points)]
    tasks = [(B[:, i], S0, prof, sc.r_max, sc.tol, grid) for prof in profiles for i in range(m)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            pairs = list(ex.map(jacobi_task, tasks, chunksize=1))
    else:
        pairs = [jacobi_task(t) for t in tasks]
    results, entries = [], []
    for p, prof in enumerate(profiles):
        res = compute_boundary_point(
            prof, S0, B, sc.r_max, sc.tol, sc.grid, sc.epsilon, extract=sc.extract, point=p,
            jacobi=pairs[p * m:(p + 1) * m],
        )
        results.append(res)
        entries.extend(verification_entries(res))
    return results, entries


def write_outputs(out: Path, sc: Scenario, results, entries, overrides: dict,
                  timing: dict) -> bool:
    out.mkdir(parents=True, exist_ok=True)
    passed = all(e.passed for e in entries)
    failed = [e.name for e in entries if not e.passed]
    _dump_json(out / "verification.json", {
        "passed": passed, "n_entries": len(entries), "failed": failed,
        "entries": [e.to_dict() for e in entries],
    })
    _dump_json(out / "report.json", {
        "tool": {"name": "cr-infinity", "version": __version__},
        "scenario": sc.to_dict(),
        "overrides": overrides,
        "points": [r.summary() for r in results],
        "verification": {"passed": passed, "n_entries": len(entries), "failed": failed},
        "timing": timing | {"points": [r.timing for r in results]},
    })
    sdir = out / "series"
    sdir.mkdir(exist_ok=True)
    for name in sc.series:
        quantities = {}
        for r in results:
            for q, v in r.series.get(name, {}).items():
                quantities[q if len(results) == 1 else f"p{r.point}:{q}"] = v
        if quantities:
            _write_series(sdir / f"{name}.csv", results[0].grid, quantities)
    return passed


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Map configuration and numerical exceptions to exit codes."""
    try:
        return fn()
    except (ConfigError, RiccatiBlowUp) as exc:
        _fail(EXIT_CONFIG, str(exc))
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        _fail(EXIT_NUMERIC, f"numerical failure: {exc}")


# ---------------------------------------------------------------- commands


@click.group()
@click.version_option(__version__, prog_name="cr-infinity")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose: bool):
    """Boundary CR structure of asymptotically complex hyperbolic manifolds."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")


@main.command("run")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(dir_okay=False),
              help="Scenario TOML file.")
@click.option("--out", "out_dir", default=None, help="Output directory (default from scenario).")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1),
              help="Worker processes for the per-geodesic tasks.")
@click.option("--seed-override", type=int, default=None)
@click.option("--r-max-override", type=float, default=None)
@click.option("--tol-override", type=float, default=None)
def cmd_run(scenario_path, out_dir, jobs, seed_override, r_max_override, tol_override):
    """Integrate, extract and verify one scenario."""
    overrides = {"seed": seed_override, "r_max": r_max_override, "tol": tol_override}

    def go():
        sc = load_scenario(scenario_path)
        for w in sc.warnings:
            click.echo(f"warning: {w}", err=True)
        sc2 = apply_overrides(sc, overrides)
        t0 = time.perf_counter()
        results, entries = run_scenario(sc2, jobs)
        elapsed = time.perf_counter() - t0
        out = Path(out_dir if out_dir is not None else sc2.out_dir)
        passed = write_outputs(out, sc2, results, entries,
                               {k: v for k, v in overrides.items() if v is not None},
                               {"total_s": elapsed, "jobs": jobs})
        nfail = sum(not e.passed for e in entries)
        click.echo(f"{len(entries)} checks, {nfail} failed -> {out}")
        for e in entries:
            if not e.passed:
                click.echo(f"  FAIL {e.name}: {e.statement} (margin {e.margin}) {e.annotation}")
        return passed

    sys.exit(EXIT_OK if _guarded(go) else EXIT_VERIFY)


@main.command("identities")
@click.option("--n", "ns", type=int, multiple=True, default=(1,), show_default=True,
              help="Complex dimension parameter; repeatable.")
@click.option("--trials", default=1000, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--scale", default=1.0, show_default=True, type=float)
@click.option("--out", "out_file", default=None, help="Optional JSON report path.")
def cmd_identities(ns, trials, seed, scale, out_file):
    """Check the eight curvature identities on random samples."""
    def go():
        if trials < 1:
            raise ConfigError("trials must be >= 1")
        if any(n < 1 for n in ns):
            raise ConfigError("n must be >= 1")
        reports = []
        t0 = time.perf_counter()
        for n in ns:
            reports.append(verify_appendix_identities(n, trials, seed, scale=scale))
        elapsed = time.perf_counter() - t0
        limit = IDENTITY_TOL * max(1.0, abs(scale)) ** 4
        ok = all(r["max_residual"] <= limit for r in reports)
        for r in reports:
            click.echo(f"n={r['n']} trials={r['trials']} max residual {r['max_residual']:.3e}")
        if out_file:
            _dump_json(Path(out_file), {"passed": ok, "threshold": limit, "reports": reports,
                                        "timing": {"total_s": elapsed}})
        return ok

    sys.exit(EXIT_OK if _guarded(go) else EXIT_VERIFY)


SWEEP_COLUMNS = (
    "fit_eta", "fit_eta_j", "fit_y_minus_z", "fit_metric_remainder",
)


@main.command("sweep")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(dir_okay=False))
@click.option("--param", required=True, help=f"One of {', '.join(PARAM_SECTIONS)}.")
@click.option("--values", required=True, help="Comma-separated parameter values.")
@click.option("--out", "out_dir", default=None)
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
def cmd_sweep(scenario_path, param, values, out_dir, jobs):
    """Repeat a run over values of one parameter and tabulate fitted exponents."""
    def go():
        sc = load_scenario(scenario_path)
        if param not in PARAM_SECTIONS:
            raise ConfigError(f"unknown parameter {param!r}; choose from {sorted(PARAM_SECTIONS)}")
        raw = [v.strip() for v in values.split(",") if v.strip()]
        if not raw:
            raise ConfigError("--values: empty value list")
        try:
            vals = [int(v) if param in INT_PARAMS else float(v) for v in raw]
        except ValueError as exc:
            raise ConfigError(f"--values: {exc}") from exc
        out = Path(out_dir if out_dir is not None else sc.out_dir)
        rows, all_ok = [], True
        for v in vals:
            sc_v = apply_overrides(sc, {param: v})
            results, entries = run_scenario(sc_v, jobs)
            ok = write_outputs(out / f"{param}={v}", sc_v, results, entries, {param: v},
                               {"jobs": jobs})
            all_ok &= ok
            for r in results:
                row = {"param": param, "value": v, "point": r.point, "passed": ok}
                for col in SWEEP_COLUMNS:
                    fit = r.data.get(col)
                    row[col] = fit.exponent if fit is not None else math.nan
                row["nijenhuis_residual"] = r.data.get("nijenhuis_residual", math.nan)
                row["type11_residual"] = r.data.get("type11_residual", math.nan)
                rows.append(row)
            click.echo(f"{param}={v}: {'pass' if ok else 'FAIL'}")
        out.mkdir(parents=True, exist_ok=True)
        with (out / "sweep.csv").open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: (f"{x:.17g}" if isinstance(x, float) else x)
                            for k, x in row.items()})
        _dump_json(out / "sweep.json", {"param": param, "values": vals, "rows": rows})
        return all_ok

    sys.exit(EXIT_OK if _guarded(go) else EXIT_VERIFY)


if __name__ == "__main__":  # pragma: no cover
    main()
