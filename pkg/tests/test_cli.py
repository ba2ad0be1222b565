import csv
import json

import pytest
from click.testing import CliRunner

from cr_infinity import __version__
from cr_infinity.cli import _clean, _guarded, apply_overrides, main
from cr_infinity.radial_ode import NumericalFailure, RiccatiBlowUp
from cr_infinity.scenarios import ConfigError, parse_scenario

RANDOM = """[scenario]
kind = "random"
n = 1
seed = 7
[decay]
a = 2.0
C0 = 0.5
b = 2.0
C1 = 0.5
[integration]
r_max = 30.0
"""


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, text, name="s.toml"):
    f = tmp_path / name
    f.write_text(text)
    return str(f)


def test_run_writes_reports_and_series(runner, tmp_path):
    out = tmp_path / "out"
    r = runner.invoke(main, ["run", "--scenario", write(tmp_path, RANDOM), "--out", str(out),
                             "--tol-override", "1e-10"])
    assert r.exit_code == 0, r.output
    ver = json.loads((out / "verification.json").read_text())
    assert ver["passed"] and ver["failed"] == [] and ver["n_entries"] == len(ver["entries"])
    rep = json.loads((out / "report.json").read_text())
    assert rep["tool"]["version"] == __version__
    assert rep["overrides"] == {"tol": 1e-10}
    assert rep["scenario"]["r_max"] == 30.0
    assert rep["points"][0]["rank"]["full_rank"]
    with (out / "series" / "coframe_eta.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "quantity", "value"]
    assert float(rows[1][0]) == 0.0
    # 17 significant digits round-trip exactly
    assert all(float(repr(float(x[2]))) == float(x[2]) for x in rows[1:50])


def test_overrides_are_applied(runner, tmp_path):
    out = tmp_path / "o"
    r = runner.invoke(main, ["run", "--scenario", write(tmp_path, RANDOM), "--out", str(out),
                             "--seed-override", "3", "--r-max-override", "25"])
    assert r.exit_code == 0, r.output
    rep = json.loads((out / "report.json").read_text())
    assert rep["scenario"]["seed"] == 3 and rep["scenario"]["r_max"] == 25.0
    assert rep["overrides"] == {"seed": 3, "r_max": 25.0}


def test_parallel_run_is_identical_to_serial(runner, tmp_path):
    sc = write(tmp_path, RANDOM)
    a, b = tmp_path / "a", tmp_path / "b"
    assert runner.invoke(main, ["run", "--scenario", sc, "--out", str(a)]).exit_code == 0
    assert runner.invoke(main, ["run", "--scenario", sc, "--out", str(b), "--jobs", "3"]).exit_code == 0
    assert (a / "verification.json").read_bytes() == (b / "verification.json").read_bytes()
    for f in (a / "series").iterdir():
        assert f.read_bytes() == (b / "series" / f.name).read_bytes()


@pytest.mark.parametrize("text, fragment", [
    (RANDOM.replace("a = 2.0", "a = 0.4"), "a > 1/2"),
    (RANDOM + "[bogus]\n", "unknown section"),
    ("[scenario]\nkind = 'random'\n", "required"),
])
def test_configuration_errors_exit_2(runner, tmp_path, text, fragment):
    r = runner.invoke(main, ["run", "--scenario", write(tmp_path, text)])
    assert r.exit_code == 2
    assert fragment in r.output


def test_missing_scenario_file_exits_2(runner, tmp_path):
    r = runner.invoke(main, ["run", "--scenario", str(tmp_path / "nope.toml")])
    assert r.exit_code == 2


def test_envelope_violation_exits_1(runner, tmp_path):
    text = RANDOM.replace("b = 2.0", "b = 2.0\nmargin = -0.1").replace("seed = 7", "seed = 3")
    out = tmp_path / "bad"
    r = runner.invoke(main, ["run", "--scenario", write(tmp_path, text), "--out", str(out)])
    assert r.exit_code == 1
    ver = json.loads((out / "verification.json").read_text())
    assert "p0.input.profile_envelope" in ver["failed"]


def test_identities_command(runner, tmp_path):
    out = tmp_path / "id.json"
    r = runner.invoke(main, ["identities", "--n", "1", "--n", "2", "--trials", "50",
                             "--out", str(out)])
    assert r.exit_code == 0, r.output
    rep = json.loads(out.read_text())
    assert rep["passed"] and [x["n"] for x in rep["reports"]] == [1, 2]
    assert runner.invoke(main, ["identities", "--trials", "0"]).exit_code == 2
    assert runner.invoke(main, ["identities", "--n", "0"]).exit_code == 2


def test_sweep_command(runner, tmp_path):
    out = tmp_path / "sw"
    r = runner.invoke(main, ["sweep", "--scenario", write(tmp_path, RANDOM), "--param", "a",
                             "--values", "1.8,2.5", "--out", str(out)])
    assert r.exit_code == 0, r.output
    with (out / "sweep.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert [float(x["value"]) for x in rows] == [1.8, 2.5]
    assert (out / "a=1.8" / "verification.json").exists()
    assert json.loads((out / "sweep.json").read_text())["param"] == "a"
    bad = runner.invoke(main, ["sweep", "--scenario", write(tmp_path, RANDOM), "--param", "zeta",
                               "--values", "1"])
    assert bad.exit_code == 2
    empty = runner.invoke(main, ["sweep", "--scenario", write(tmp_path, RANDOM), "--param", "a",
                                 "--values", ","])
    assert empty.exit_code == 2


def test_exceptions_map_to_exit_codes():
    def boom(exc):
        def f():
            raise exc
        return f

    for exc, code in ((ConfigError("x"), 2), (RiccatiBlowUp(1.0), 2),
                      (NumericalFailure("x"), 3), (FloatingPointError("x"), 3)):
        with pytest.raises(SystemExit) as info:
            _guarded(boom(exc))
        assert info.value.code == code
    assert _guarded(lambda: True) is True


def test_apply_overrides_revalidates():
    sc = parse_scenario({})
    assert apply_overrides(sc, {"r_max": 12.0, "tol": None}).r_max == 12.0
    with pytest.raises(ConfigError):
        apply_overrides(sc, {"nonsense": 1})
    with pytest.raises(ConfigError):
        apply_overrides(sc, {"r_max": -1.0})


def test_json_cleaning_of_non_finite_values():
    import numpy as np

    assert _clean({"a": np.float64("inf"), "b": np.arange(2), "c": (np.bool_(True),)}) == {
        "a": "inf", "b": [0, 1], "c": [True]}


def test_version_flag(runner):
    r = runner.invoke(main, ["--version"])
    assert __version__ in r.output


def _sweep_rows(runner, tmp_path, param, values):
    out = tmp_path / f"sweep_{param}"
    r = runner.invoke(main, ["sweep", "--scenario", write(tmp_path, RANDOM), "--param", param,
                             "--values", values, "--out", str(out)])
    assert r.exit_code in (0, 1), r.output
    with (out / "sweep.csv").open() as fh:
        return list(csv.DictReader(fh))


def test_sweep_over_decay_rate_reproduces_eta_regimes(runner, tmp_path):
    rows = _sweep_rows(runner, tmp_path, "a", "0.8,1.0,1.2,2.0")
    got = {float(x["value"]): float(x["fit_eta"]) for x in rows}
    off = {a: (fe, min(a, 1.5)) for a, fe in got.items() if abs(fe - min(a, 1.5)) > 0.1}
    assert not off, off


def test_sweep_over_radius_improves_nijenhuis_residual(runner, tmp_path):
    rows = _sweep_rows(runner, tmp_path, "r_max", "20,25,30")
    res = [float(x["nijenhuis_residual"]) for x in rows]
    assert res[0] > res[1] > res[2]
