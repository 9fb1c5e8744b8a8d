import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from modelsym import cli
from modelsym.cli import (
    EXIT_ERROR,
    EXIT_FAILS,
    EXIT_OK,
    ConfigError,
    builtin_scenarios,
    dumps_report,
    list_catalog,
    load_config,
    main,
    parse_config,
    run_scenario,
)

GOLDEN = Path(__file__).parent / "golden"
REGEN = os.environ.get("MODELSYM_REGEN_GOLDENS") == "1"

BASE = {
    "name": "t",
    "manifold": {"kind": "euclidean", "dim": 2, "r_max": 10.0},
    "field": {"catalog": "r2"},
    "grid": {"r_lo": 0.5, "r_hi": 10.0, "count": 5},
}


def _cfg(**over):
    data = json.loads(json.dumps(BASE))
    for key, val in over.items():
        data[key] = val
    return data


def assert_close_json(got, want, path="$"):
    """Structural equality with floats compared to rel 1e-9 / abs 1e-12."""
    if isinstance(want, float) or isinstance(got, float):
        assert isinstance(got, (int, float)) and isinstance(want, (int, float)), path
        assert math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-12), f"{path}: {got} != {want}"
    elif isinstance(want, dict):
        assert isinstance(got, dict) and list(got) == list(want), path
        for k in want:
            assert_close_json(got[k], want[k], f"{path}.{k}")
    elif isinstance(want, list):
        assert isinstance(got, list) and len(got) == len(want), path
        for i, (a, b) in enumerate(zip(got, want)):
            assert_close_json(a, b, f"{path}[{i}]")
    else:
        assert got == want, path


@pytest.mark.parametrize("name", builtin_scenarios())
def test_builtin_matches_golden(name, scenario_reports):
    code, text = scenario_reports[name]
    golden = GOLDEN / f"{name}.json"
    if REGEN:
        golden.write_text(text)
    assert code == EXIT_OK
    assert_close_json(json.loads(text), json.loads(golden.read_text()))


def test_goldens_cover_builtins():
    assert sorted(p.stem for p in GOLDEN.glob("*.json")) == builtin_scenarios()


def test_euclid_r2_mean_value(scenario_reports):
    report = json.loads(scenario_reports["euclid-r2"][1])
    mv = next(c for c in report["checks"] if c["id"] == "mean_value")
    assert mv["verdict"] == "holds" and mv["measured"]["C_min"] == pytest.approx(0.5, abs=1e-12)
    assert set(report) >= {"scenario", "manifold", "field", "checks"}
    for c in report["checks"]:
        assert {"id", "hypotheses_ok", "measured", "verdict", "range", "tolerances"} <= set(c)


def test_hyperbolic_gate(scenario_reports):
    code, text = scenario_reports["hyperbolic-gate"]
    assert code == EXIT_OK
    assert all(c["verdict"] == "inapplicable" for c in json.loads(text)["checks"])


def test_threads_preserve_report():
    cfg = load_config("euclid3-r2")
    assert dumps_report(run_scenario(cfg, threads=3)[1]) == dumps_report(run_scenario(cfg)[1])


def test_validation_paths():
    cases = [
        (_cfg(grid={"r_lo": 0.5, "r_hi": 11.0, "count": 5}), "exceeds manifold.r_max"),
        (_cfg(field={"catalog": "r2", "colour": 1}), "field.colour"),
        (_cfg(checks=[{"id": "nope"}]), "checks[0].id"),
        (_cfg(tolerances={"convex": -1.0}), "tolerances"),
        (_cfg(tolerances={"bogus": 1.0}), "tolerances"),
        (_cfg(field={"catalog": "r2", "expr": "r"}), "exactly one"),
        (_cfg(manifold={"kind": "euclidean", "dim": 2, "r_max": 10.0, "a": 2.0}), "hyperbolic"),
        (_cfg(checks=[{"id": "bishop", "tail": {"r_lo": 1, "r_hi": 2}}]), "limsup"),
        (_cfg(checks=[{"id": "limsup", "tail": {"r_lo": 1, "r_hi": 12}}]), "checks[0].tail"),
        (_cfg(grid={"r_lo": 2.0, "r_hi": 1.0, "count": 5}), "r_lo"),
    ]
    for data, fragment in cases:
        with pytest.raises(ConfigError) as info:
            parse_config(data)
        assert fragment in str(info.value), (fragment, str(info.value))


def test_bad_definitions_are_config_errors():
    for over in ({"field": {"expr": "x3"}}, {"field": {"catalog": "r_power", "params": {"alpha": 1.0}}},
                 {"manifold": {"kind": "custom", "dim": 2, "r_max": 3.0, "h_expr": "r + 1"}}):
        cfg = parse_config(_cfg(**over, grid={"r_lo": 0.5, "r_hi": 3.0, "count": 3}))
        with pytest.raises(ConfigError):
            run_scenario(cfg)


def _write(tmp_path, data, suffix=".json"):
    path = tmp_path / f"cfg{suffix}"
    path.write_text(json.dumps(data))
    return str(path)


def test_exit_codes(tmp_path, capsys):
    out = tmp_path / "r.json"
    ok = _write(tmp_path, _cfg(checks=[{"id": "bishop"}]))
    assert main(["run", ok, "--report", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["checks"][0]["verdict"] == "holds"

    fails = _cfg(manifold={"kind": "paraboloid", "dim": 2, "r_max": 10.0}, field={"catalog": "zero"},
                 grid={"r_lo": 0.1, "r_hi": 5.0, "count": 6}, checks=[{"id": "integral_lower", "p": 2.0}])
    assert main(["run", _write(tmp_path, fails), "--report", str(out)]) == EXIT_FAILS
    assert json.loads(out.read_text())["checks"][0]["witness"]["lhs"] == 0.0

    bad = _cfg(grid={"r_lo": 0.5, "r_hi": 11.0, "count": 5})
    assert main(["run", _write(tmp_path, bad)]) == EXIT_ERROR
    assert "r_max" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == EXIT_ERROR


def test_check_error_keeps_running(tmp_path):
    out = tmp_path / "r.json"
    data = _cfg(manifold={"kind": "euclidean", "dim": 2, "r_max": 5.0}, grid={"r_lo": 0.5, "r_hi": 4.0, "count": 3},
                checks=[{"id": "energy"}, {"id": "bishop"}])
    assert main(["run", _write(tmp_path, data), "--report", str(out)]) == EXIT_ERROR
    checks = json.loads(out.read_text())["checks"]
    assert checks[0]["verdict"] == "error" and "r_max" in checks[0]["error"]
    assert checks[1]["verdict"] == "holds"


def test_toml_config_and_outputs(tmp_path):
    report, csv = tmp_path / "rep.json", tmp_path / "prof.csv"
    text = f"""
name = "toml"
seed = 4
[manifold]
kind = "hyperbolic"
dim = 3
r_max = 4.0
a = 0.5
[field]
expr = "exp(x1) + r^2"
[grid]
r_lo = 0.1
r_hi = 3.0
count = 7
spacing = "geometric"
[[checks]]
id = "mean_value"
[outputs]
report_path = "{report}"
csv_path = "{csv}"
"""
    path = tmp_path / "s.toml"
    path.write_text(text)
    assert main(["run", str(path)]) == EXIT_OK
    rep = json.loads(report.read_text())
    assert rep["seed"] == 4 and rep["manifold"]["a"] == 0.5 and rep["field"] == {"expr": "exp(x1) + r^2"}
    assert rep["checks"][0]["verdict"] == "inapplicable"
    assert len(csv.read_text().splitlines()) == 7 + 2
    assert main(["run", str(path), "--seed", "9", "--report", str(report)]) == EXIT_OK
    assert json.loads(report.read_text())["seed"] == 9


def test_malformed_toml(tmp_path, capsys):
    path = tmp_path / "x.toml"
    path.write_text("name = \n")
    assert main(["run", str(path)]) == EXIT_ERROR
    assert "cannot parse" in capsys.readouterr().err


def test_profile_exp(tmp_path):
    data = _cfg(field={"catalog": "exp_x1"}, grid={"r_lo": 0.25, "r_hi": 4.0, "count": 16})
    out = tmp_path / "p.csv"
    assert main(["profile", _write(tmp_path, data), "--csv", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "r,v,dv,ddv,lap_v,mean_lap_u" and len(lines) == 16 + 2
    rows = np.loadtxt(out, delimiter=",", skiprows=1)
    i = int(np.argmin(np.abs(rows[:, 0] - 1.0)))
    assert rows[i, 0] == 1.0 and abs(rows[i, 1] - 1.2660658) <= 1e-6


def test_profile_r2_stdout(tmp_path, capsys):
    assert main(["profile", _write(tmp_path, _cfg()), "--csv", "-"]) == EXIT_OK
    rows = np.loadtxt(capsys.readouterr().out.splitlines()[1:], delimiter=",")
    assert rows.shape[0] == 5 + 1
    np.testing.assert_allclose(rows[:, 1], rows[:, 0] ** 2, rtol=1e-14)


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text == list_catalog()
    assert "paraboloid" in text
    exp_line = next(l for l in text.splitlines() if l.strip().startswith("exp_x1"))
    assert "subharmonic-claimed" in exp_line
    growth = text.splitlines().index(next(l for l in text.splitlines() if l.strip().startswith("growth ")))
    assert "cites:" in text.splitlines()[growth + 1]
    for section in ("manifolds:", "fields:", "checks:", "scenarios:"):
        assert section in text


def test_list_sorted():
    lines = list_catalog().splitlines()
    start = lines.index("fields:") + 1
    names = [l.split()[0] for l in lines[start:lines.index("checks:")]]
    assert names == sorted(names)


def test_report_is_json_safe():
    text = dumps_report({"a": np.float64(np.inf), "b": [np.int64(3), -0.0], "c": np.bool_(True)})
    assert json.loads(text) == {"a": "inf", "b": [3, 0.0], "c": True}
    assert "-0.0" not in text


def test_builtin_names():
    assert {"euclid-r2", "hyperbolic-gate", "paraboloid-r2", "gradient-step"} <= set(builtin_scenarios())
    with pytest.raises(ConfigError):
        load_config("no-such-scenario")


def test_module_entry():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "modelsym", "list"], capture_output=True, text=True)
    assert res.returncode == 0 and "scenarios:" in res.stdout
