from __future__ import annotations

import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from shadowprice import cli
from shadowprice.dynamic import DynamicCheck

GOLDEN = Path(__file__).parent / "golden"
ROOT = Path(__file__).resolve().parents[1]
SCEN = ["--scenarios", "0.9,1.6;1.5,0.9;1.3,1.3", "--probs", "0.3,0.3,0.4"]


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def assert_same(actual, expected, path="$"):
    """Identical structure and strings; numbers agree to 1e-9 relative."""
    if isinstance(expected, dict):
        assert isinstance(actual, dict) and sorted(actual) == sorted(expected), path
        for k in expected:
            assert_same(actual[k], expected[k], f"{path}.{k}")
    elif isinstance(expected, list):
        assert isinstance(actual, list) and len(actual) == len(expected), path
        for i, (a, e) in enumerate(zip(actual, expected)):
            assert_same(a, e, f"{path}[{i}]")
    elif isinstance(expected, float) and not isinstance(expected, bool):
        assert actual == pytest.approx(expected, rel=1e-9, abs=1e-12), path
    else:
        assert actual == expected, path


GOLDEN_CASES = {
    "solve_static_sqrt.json": ["solve-static", "--x", 4, "--y", "0,0", "--bid", "1,1", "--objective", "sqrt"],
    "shadow_buy.json": ["shadow", "--x", 4, "--y", "0,0", "--bid", "0.5,0.5", "--ask", "1,1",
                        "--objective", "sqrt"],
    "shadow_frictionless.json": ["shadow", "--x", 1, "--y", "1,1", "--bid", "1,2", "--scenarios",
                                 "0.9,1.6;1.5,1.9;1.3,2.6", "--probs", "0.3,0.3,0.4"],
    "shadow_scenarios.json": ["shadow", "--x", 3, "--y", "0,4", "--bid", "1,1", "--ask", "1.2,1.1", *SCEN],
    "dynamic_binomial_T2.json": ["solve-dynamic", "--config", ROOT / "lattices" / "binomial_d1_T2.json"],
    "verify_binomial_T1.json": ["verify", "--config", ROOT / "lattices" / "binomial_d1_T1.json"],
}


@pytest.mark.parametrize("name", sorted(GOLDEN_CASES))
def test_golden_json(name, capsys):
    code, out, _ = run(GOLDEN_CASES[name], capsys)
    assert code == 0
    assert_same(json.loads(out), json.loads((GOLDEN / name).read_text()))


def test_golden_zone_csv(capsys):
    argv = ["zone-map", "--bid", "1,1", "--ask", "1.2,1.1", *SCEN, "--cash-grid", "0:2:3",
            "--holdings-grid", "0:2:3;0:1:2"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    got = [r.split(",") for r in out.splitlines()]
    want = [r.split(",") for r in (GOLDEN / "zone_map_small.csv").read_text().splitlines()]
    assert got[0] == want[0] and len(got) == len(want)
    for g, w in zip(got[1:], want[1:]):
        assert g[:7] == w[:7]
        assert [float(v) for v in g[7:]] == pytest.approx([float(v) for v in w[7:]], rel=1e-6, abs=1e-12)


def test_sqrt_value(capsys):
    code, out, _ = run(GOLDEN_CASES["solve_static_sqrt.json"], capsys)
    assert json.loads(out)["value"] == pytest.approx(3.46410, abs=1e-5)


def test_zero_state(capsys):
    code, out, _ = run(["solve-static", "--x", 0, "--y", "0,0", "--bid", "1,1", "--ask", "1.5,1.5",
                        "--utility", "exp:1"], capsys)
    res = json.loads(out)
    assert code == 0 and res["plan"] == [0.0, 0.0]
    assert res["value"] == pytest.approx(-1.0)


def test_shadow_frictionless_has_zero_gap(capsys):
    _, out, _ = run(GOLDEN_CASES["shadow_frictionless.json"], capsys)
    res = json.loads(out)
    assert res["prices"] == [1.0, 2.0] and res["abs_gap"] == 0.0


def test_shadow_buy_case_uses_ask(capsys):
    _, out, _ = run(GOLDEN_CASES["shadow_buy.json"], capsys)
    assert json.loads(out)["prices"] == [1.0, 1.0]


def test_shadow_gap_on_scenario_instance(capsys):
    _, out, _ = run(GOLDEN_CASES["shadow_scenarios.json"], capsys)
    res = json.loads(out)
    assert res["abs_gap"] <= 1e-6 * (1 + abs(res["phi_bidask"]))


def test_zone_map_one_point_and_partition(capsys):
    base = ["zone-map", "--bid", "1,1", *SCEN]
    code, out, _ = run(base + ["--cash-grid", "1", "--holdings-grid", "0.5"], capsys)
    assert code == 0 and len(out.splitlines()) == 2
    code, out, _ = run(base + ["--cash-grid", "0:3:20", "--holdings-grid", "0:3:20;1"], capsys)
    rows = out.splitlines()[1:]
    assert len(rows) == 400
    assert all(r.split(",")[3] in {"-1", "0", "1"} and r.split(",")[4] in {"-1", "0", "1"} for r in rows)


def test_zone_map_budget_line_json(capsys):
    code, out, _ = run(["zone-map", "--bid", "1", "--ask", "1.05", "--scenarios", "0.7;1.45",
                        "--budget-line", "4:0:5", "--format", "json"], capsys)
    rows = json.loads(out)
    assert code == 0 and len(rows) == 5
    assert rows[0]["signature"] == [1] and rows[-1]["signature"] == [-1]


def test_zone_map_is_deterministic(capsys):
    argv = ["zone-map", "--bid", "1,1", "--ask", "1.2,1.1", *SCEN, "--cash-grid", "0:2:4",
            "--holdings-grid", "0:1:3"]
    assert run(argv, capsys)[1] == run(argv, capsys)[1]


def test_dynamic_zero_horizon(tmp_path, capsys):
    cfg = {"horizon": 0, "assets": 2, "utility": {"family": "log", "params": {}},
           "root": {"bid": [1, 1], "ask": [1.1, 1.1]}, "initial": {"cash": 1, "holdings": [1, 1]}}
    path = tmp_path / "t0.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run(["solve-dynamic", "--config", path], capsys)
    assert code == 0 and json.loads(out)["value"] == pytest.approx(math.log(3))


def test_verify_frictionless_lattice(tmp_path, capsys):
    node = lambda b: {"bid": [b], "ask": [b]}
    cfg = {"horizon": 1, "assets": 1, "utility": {"family": "log", "params": {}},
           "root": {**node(1.0), "children": [{"prob": 0.5, "node": node(1.3)}, {"prob": 0.5, "node": node(0.8)}]},
           "initial": {"cash": 1.0, "holdings": [0.5]}}
    path = tmp_path / "fr.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run(["verify", "--config", path], capsys)
    res = json.loads(out)
    assert code == 0 and res["abs_gap"] == 0.0
    assert any("zero spread" in w for w in res["warnings"])


def test_verify_acceptance_lattice(capsys):
    code, out, _ = run(["verify", "--config", ROOT / "lattices" / "trinomial_d2_T2.json"], capsys)
    res = json.loads(out)
    assert code == 0 and res["abs_gap"] <= 1e-4 * (1 + abs(res["value_bidask"]))


def test_verify_campaign_text(capsys):
    code, out, _ = run(["verify", "--campaign", "zones", "--n", 4, "--format", "text"], capsys)
    assert code == 0 and out.startswith("campaign zones seed=0")


def test_dynamic_csv_and_out_file(tmp_path, capsys):
    dest = tmp_path / "values.csv"
    code, out, _ = run(["solve-dynamic", "--config", ROOT / "lattices" / "binomial_d1_T1.json",
                        "--format", "csv", "--out", dest], capsys)
    assert code == 0 and out == ""
    assert dest.read_text().startswith("node_id,depth,x,y1,plan1,value,shadow1")


def test_config_file_with_flag_override(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"x": 4, "y": [0, 0], "bid": [1, 1], "objective": "sqrt", "tol-val": 1e-12}))
    code, out, _ = run(["solve-static", "--config", path], capsys)
    assert code == 0 and json.loads(out)["value"] == pytest.approx(3.46410, abs=1e-5)
    code, out, _ = run(["solve-static", "--config", path, "--x", 0], capsys)
    assert json.loads(out)["value"] == 0.0


@pytest.mark.parametrize("argv", [
    ["solve-static", "--x", 1, "--y", "0,0", "--bid", "2,1", "--ask", "1,1"],
    ["solve-static", "--x", 1, "--y", "0,0", "--bid", "0,1"],
    ["solve-static", "--x", 1, "--y", "0,0", "--bid", "1,1,1"],
    ["solve-static", "--x", 1, "--bid", "1,1"],
    ["solve-static", "--x", -1, "--y", "0,0", "--bid", "1,1"],
    ["solve-static", "--x", 1, "--y", "a,b", "--bid", "1,1"],
    ["solve-static", "--x", 1, "--y", "0,0", "--bid", "1,1", "--utility", "cubic"],
    ["solve-static", "--x", 1, "--y", "0,0", "--bid", "1,1", "--tol-val", "-1"],
    ["shadow", "--x", 1, "--y", "0,0", "--bid", "1,1", "--objective", "scenarios"],
    ["zone-map", "--bid", "1,1"],
    ["solve-dynamic", "--config", "/nonexistent.json"],
    ["solve-dynamic"],
    ["frobnicate"],
    ["verify", "--campaign", "dynamic"],
])
def test_input_errors_exit_2(argv, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert err


def test_malformed_lattice_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"horizon": 1, "assets": 1, "utility": {"family": "log", "params": {}},
                                "root": {"bid": [1], "ask": [1.1], "children": [
                                    {"prob": 0.5, "node": {"bid": [1], "ask": [1.1]}},
                                    {"prob": 0.6, "node": {"bid": [1], "ask": [1.1]}}]}}))
    code, _, err = run(["solve-dynamic", "--config", path, "--x", 1, "--y", 0], capsys)
    assert code == 2 and "sum" in err


def test_non_convergence_exits_3(capsys):
    code, out, _ = run(["solve-static", "--x", 3, "--y", "0,0", "--bid", "1,1", "--ask", "1.2,1.1", *SCEN,
                        "--max-sweeps", 1], capsys)
    assert code == 3
    assert json.loads(out)["status"] == "MaxIter"


def test_property_failure_exits_4(monkeypatch, capsys):
    bad = DynamicCheck(1.0, 2.0, 1.0, False, False, 1.0, 10)
    monkeypatch.setattr(cli, "verify_dynamic_equivalence", lambda *a, **k: bad)
    code, out, _ = run(["verify", "--config", ROOT / "lattices" / "binomial_d1_T1.json"], capsys)
    assert code == 4 and json.loads(out)["passed"] is False


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "shadowprice.cli", "solve-static", "--x", "4", "--y", "0,0",
                           "--bid", "1,1", "--objective", "sqrt"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["value"] == pytest.approx(3.4641016151377544)
