"""Acceptance criteria 1-9.

Each test records one PASS/FAIL line; the lines are printed together at the
end of the pytest session (see ``conftest.py``). Tolerances are the pinned
acceptance values and must not be loosened.
"""
from __future__ import annotations

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from cr_infinity.boundary import verification_entries
from cr_infinity.radial_ode import (
    integrate_jacobi,
    integrate_riccati,
    integrate_scalar_limits,
    integrate_volume,
    jacobi_initial_data,
    make_grid,
)
from cr_infinity.scenarios import model_profile, model_sphere_shape
from cr_infinity.tensor_core import verify_appendix_identities
from cr_infinity.verify import fit_decay

from conftest import ACCEPTANCE_LINES, boundary_point

EXPONENT_TOL = 0.1
SWEEP_A = (0.8, 1.2, 2.0, 3.0)
BORDER_A = 1.5
CR_TOL = 1e-3


def record(k: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k}: {title} :: {detail}"
    ACCEPTANCE_LINES[k] = line
    print(line)


def matrix_points():
    """Every boundary point computed by the acceptance scenarios."""
    pts = [boundary_point("model")]
    pts += [boundary_point("random", a) for a in SWEEP_A + (BORDER_A,)]
    pts += [boundary_point("random", 2.0, n, r) for n in (1, 2) for r in (20.0, 25.0, 30.0)]
    pts.append(boundary_point("warped", 2.0))
    return pts


# ---------------------------------------------------------------- 1


def test_criterion_1_curvature_identities_exact():
    t0 = time.perf_counter()
    worst = {n: verify_appendix_identities(n, 1000, seed=0)["max_residual"] for n in (1, 2, 3)}
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-12 and elapsed < 5.0
    record(1, "curvature identities", ok,
           f"max residual {max(worst.values()):.2e} (<= 1e-12), {elapsed:.2f} s (< 5 s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_model_closed_forms():
    n, r0, R = 1, 1.0, 20.0
    prof = model_profile(n)
    S0 = model_sphere_shape(n, r0)
    grid = make_grid(R)
    m = 2 * n + 1
    c = np.array([2.0] + [1.0] * (2 * n))
    errs = {"riccati": 0.0, "jacobi": 0.0, "volume": 0.0}
    per_geodesic = []
    # analytic oracles at r = R
    S_exact = np.diag([1 / math.tanh(R + r0)] + [0.5 / math.tanh((R + r0) / 2)] * (2 * n))
    lam_exact = (math.sinh(R + r0) / math.sinh(r0)) * (
        math.sinh((R + r0) / 2) / math.sinh(r0 / 2)) ** (2 * n)
    for v in np.eye(m):
        t0 = time.perf_counter()
        sp = integrate_riccati(S0, prof, R, 1e-10, grid)
        vol = integrate_volume(sp)
        jp = integrate_jacobi(v, S0, prof, R, 1e-10, grid)
        per_geodesic.append(time.perf_counter() - t0)
        e0, de0 = jacobi_initial_data(v, S0)
        eta_exact = e0 + de0 * (1 - np.exp(-c * R)) / c
        errs["riccati"] = max(errs["riccati"],
                              np.max(np.abs(sp.S[-1] - S_exact)) / np.max(np.abs(S_exact)))
        errs["jacobi"] = max(errs["jacobi"],
                             np.linalg.norm(jp.eta[-1] - eta_exact) / np.linalg.norm(eta_exact))
        errs["volume"] = max(errs["volume"], abs(vol.lam[-1] / lam_exact - 1))
    ok = max(errs.values()) <= 1e-8 and max(per_geodesic) < 1.0
    record(2, "model closed forms at r = 20", ok,
           ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
           + f" (<= 1e-8); {max(per_geodesic):.2f} s per geodesic (< 1 s)")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_decay_regimes_of_coframe():
    parts, ok = [], True
    for a in SWEEP_A:
        d = boundary_point("random", a).data
        fe, fj = d["fit_eta"].exponent, d["fit_eta_j"].exponent
        ee, ej = min(a, 1.5), min(a - 0.5, 1.0)
        good_e = abs(fe - ee) <= EXPONENT_TOL and d["fit_eta"].converged
        good_j = abs(fj - ej) <= EXPONENT_TOL and d["fit_eta_j"].converged
        ok &= good_e and good_j
        parts.append(f"a={a}: eta {fe:.3f} vs {ee:.2f}{'' if good_e else ' X'}, "
                     f"eta^j {fj:.3f} vs {ej:.2f}{'' if good_j else ' X'}")
    d = boundary_point("random", BORDER_A).data
    fe, fj = d["fit_eta"].exponent, d["fit_eta_j"].exponent
    good_b = fe >= 1.5 - EXPONENT_TOL and fj >= 1.0 - EXPONENT_TOL
    ok &= good_b
    parts.append(f"a=1.5 one-sided: eta {fe:.3f} >= 1.4, eta^j {fj:.3f} >= 0.9"
                 f"{'' if good_b else ' X'}")
    record(3, "coframe decay regimes", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_4_metric_expansion_remainder():
    parts, ok = [], True
    for a in SWEEP_A:
        fit = boundary_point("random", a).data["fit_metric_remainder"]
        growth = -fit.exponent
        if 1.0 < a < 1.5:
            good = abs(growth - (2 - a)) <= EXPONENT_TOL and fit.converged
            parts.append(f"a={a}: {growth:.3f} vs {2 - a:.2f}")
        elif a > 1.5:
            good = growth <= 0.5 + EXPONENT_TOL and fit.converged
            parts.append(f"a={a}: {growth:.3f} <= 0.6")
        else:
            parts.append(f"a={a}: {growth:.3f} (no expansion claim for a <= 1)")
            continue
        ok &= good
        if not good:
            parts[-1] += " X"
    record(4, "metric expansion remainder growth", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_direct_and_integral_solvers_agree():
    diffs = [p.duhamel_diff for p in matrix_points()]
    ok = max(diffs) <= 1e-7
    record(5, "direct vs integral-form Jacobi", ok,
           f"max sup-norm difference {max(diffs):.2e} over {len(diffs)} scenarios (<= 1e-7)")
    assert ok


# ---------------------------------------------------------------- 6

ENVELOPE_PREFIXES = ("envelope.", "sandwich.")


def test_criterion_6_envelope_suite():
    failed, count, scen = [], 0, 0
    for p in matrix_points():
        entries = verification_entries(p)
        if not p.validation["ok"]:
            continue
        scen += 1
        for e in entries:
            if e.name.split(".", 1)[1].startswith(ENVELOPE_PREFIXES):
                count += 1
                if not e.passed:
                    failed.append(e.name)
    kinds = {"shape_norm", "trace_lower", "volume_lower", "volume_upper", "gronwall[0]",
             "lower_positive"}
    names = {e.name.split(".")[-1] for e in verification_entries(boundary_point("random", 2.0))}
    ok = not failed and kinds <= names
    record(6, "bound envelopes", ok,
           f"{count} envelope checks over {scen} scenarios, {len(failed)} failed"
           + (f": {failed[:5]}" if failed else ""))
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_strictly_pseudoconvex_cr_limit():
    parts, ok = [], True
    for n in (1, 2):
        d = boundary_point("random", 2.0, n, 30.0).data
        nij = [boundary_point("random", 2.0, n, r).data["nijenhuis_residual"]
               for r in (20.0, 25.0, 30.0)]
        cv = abs(d["contact_volume"])
        checks = {
            "rank": d["rank"]["full_rank"] and d["rank"]["condition"] < 1e3,
            "contact": d["contact_volume_normalized"] > 1e-6 and cv > 1e-6,
            "type11": d["type11_residual"] <= CR_TOL,
            "nijenhuis": nij[-1] <= CR_TOL and nij[0] > nij[1] > nij[2],
            "levi": d["levi_compat"] <= CR_TOL,
            "positive": d["levi_min_eig"] > 0,
        }
        ok &= all(checks.values())
        bad = [k for k, v in checks.items() if not v]
        parts.append(
            f"n={n}: cond {d['rank']['condition']:.2f}, |n! det| {cv:.3g}, "
            f"type11 {d['type11_residual']:.1e}, N {nij[0]:.1e}>{nij[1]:.1e}>{nij[2]:.1e}, "
            f"levi {d['levi_compat']:.1e}, min eig {d['levi_min_eig']:.3f}"
            + (f" X {bad}" if bad else ""))
    record(7, "CR structure at infinity", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 8


def scalar_oracle(kind, f0, f0p, K, beta, r):
    """Closed form of f'' - c^2 f = K e^{beta r}: (alpha, f - alpha e^{c r})."""
    c = 1.0 if kind == "f" else 0.5
    if abs(beta + c) < 1e-14:  # resonance: particular solution A r e^{-c r}
        A = -K / (2 * c)
        alpha = 0.5 * (f0 + (f0p - A) / c)
        return alpha, (f0 - alpha + A * r) * np.exp(-c * r)
    p = K / (beta**2 - c**2)
    alpha = 0.5 * (f0 - p + (f0p - beta * p) / c)
    B = f0 - p - alpha
    return alpha, B * np.exp(-c * r) + p * np.exp(beta * r)


def test_criterion_8_scalar_limit_rates():
    K, f0, f0p, R = 1.0, 1.0, 0.0, 30.0
    grid = make_grid(R)
    parts, ok = [], True
    for m in (1.2, 2.0, 2.5):
        beta = 2.0 - m
        for kind, c in (("f", 1.0), ("fj", 0.5)):
            if not m + c > 2.0:
                parts.append(f"{kind} m={m}: no limit (source outgrows e^(cr))")
                continue
            sp = integrate_scalar_limits(kind, f0, f0p, lambda r: K * np.exp(beta * np.asarray(r)),
                                         R, 1e-10, grid, envelope=(K, m))
            alpha, resid = scalar_oracle(kind, f0, f0p, K, beta, grid)
            rate = min(c, m - 2.0)
            fit = fit_decay(grid, sp.residual, noise_floor=1e-300)
            border = abs(m - 2.0 - c) < 1e-12
            if border:
                good_rate = fit.exponent >= rate - EXPONENT_TOL
            else:
                good_rate = abs(fit.exponent - rate) <= EXPONENT_TOL and fit.converged
            sel = grid >= 1.0
            rel = np.max(np.abs(sp.residual[sel] - resid[sel]) / np.abs(resid[sel]))
            good_oracle = abs(sp.alpha - alpha) <= 1e-9 * abs(alpha) and rel <= 1e-6
            ok &= good_rate and good_oracle
            parts.append(f"{kind} m={m}: {fit.exponent:.3f} vs {rate:.2f}"
                         f"{' (one-sided)' if border else ''}, oracle {rel:.0e}"
                         + ("" if good_rate and good_oracle else " X"))
    record(8, "scalar limit residual rates", ok, "; ".join(parts))
    assert ok


# ---------------------------------------------------------------- 9

SCENARIO = """[scenario]
kind = "random"
n = 1
seed = 11
[decay]
a = 2.0
C0 = 0.5
b = 2.0
C1 = 0.5
"""


def _numeric_outputs(out):
    files = {"verification.json": (out / "verification.json").read_bytes()}
    rep = json.loads((out / "report.json").read_text())
    rep.pop("timing")
    files["report.json"] = json.dumps(rep, sort_keys=True).encode()
    for f in sorted((out / "series").iterdir()):
        files[f"series/{f.name}"] = f.read_bytes()
    return files


def test_criterion_9_runs_are_byte_identical(tmp_path):
    sc = tmp_path / "s.toml"
    sc.write_text(SCENARIO)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        proc = subprocess.run([sys.executable, "-m", "cr_infinity", "run", "--scenario", str(sc),
                               "--out", str(out)], capture_output=True, text=True)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        outs.append(_numeric_outputs(out))
    same = outs[0].keys() == outs[1].keys() and all(outs[0][k] == outs[1][k] for k in outs[0])
    record(9, "deterministic output", same,
           f"{len(outs[0])} files compared byte for byte (timing excluded)")
    assert same
