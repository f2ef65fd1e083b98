import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from v3olp import bounds
from v3olp.cli import main
from v3olp.market_data import Trace, write_trace
from v3olp.report import canonical_json
from v3olp.reward import PoolParams
from v3olp.synthetic import compliant_trace, flat_trace

from test_market_data import FIVE_ROWS


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def pool_file(tmp_path):
    path = tmp_path / "pool.json"
    path.write_text(json.dumps({"d": 1.01, "gamma": 0.003}))
    return path


@pytest.fixture
def synth_trace(tmp_path, rng):
    pool = PoolParams(1.01, 0.003)
    path = tmp_path / "synth.csv"
    write_trace(path, compliant_trace(rng, 300, pool), pool)
    return path


@pytest.fixture
def flat_file(tmp_path):
    pool = PoolParams(1.01, 0.003)
    path = tmp_path / "flat.csv"
    write_trace(path, flat_trace(40), pool)
    return path


def test_stats_five_rows(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    raw.write_text(FIVE_ROWS)
    code, out, _ = run_cli(capsys, "stats", "--input", raw, "--d", 1.21, "--gamma", 0.003)
    assert code == 0
    stats = json.loads(out)
    assert stats["T"] == 4
    assert stats["P"] == pytest.approx(0.75, rel=1e-12)
    assert stats["mean_u"] == pytest.approx(0.0775, rel=1e-12)
    assert stats["max_price_factor"] == pytest.approx(1.21, rel=1e-12)


def test_stats_single_step(tmp_path, capsys, pool_file):
    raw = tmp_path / "raw.csv"
    raw.write_text("timestamp,price,volume,liquidity\n0,4,0,10\n3600,4,8,10\n")
    code, out, _ = run_cli(capsys, "stats", "--input", raw, "--pool", pool_file)
    assert code == 0
    stats = json.loads(out)
    assert stats["T"] == 1 and stats["mean_u"] == pytest.approx(8 / (2 * 2 * 10))


def test_malformed_row_exits_2_with_line(tmp_path, capsys, pool_file):
    raw = tmp_path / "raw.csv"
    raw.write_text("timestamp,price,volume,liquidity\n0,4,0,10\n3600,four,8,10\n")
    code, _, err = run_cli(capsys, "stats", "--input", raw, "--pool", pool_file)
    assert code == 2
    assert "line 3" in err


def test_missing_pool_exits_2(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    raw.write_text(FIVE_ROWS)
    code, _, err = run_cli(capsys, "stats", "--input", raw)
    assert code == 2 and "pool" in err


def test_flags_override_pool_file(tmp_path, capsys, pool_file):
    raw = tmp_path / "raw.csv"
    raw.write_text(FIVE_ROWS)
    _, out, _ = run_cli(capsys, "stats", "--input", raw, "--pool", pool_file, "--d", 1.21)
    assert json.loads(out)["P"] == pytest.approx(0.75)


def test_ingest_writes_canonical_trace(tmp_path, capsys):
    raw = tmp_path / "raw.csv"
    raw.write_text(FIVE_ROWS)
    out_path = tmp_path / "trace.csv"
    code, _, _ = run_cli(capsys, "ingest", "--input", raw, "--d", 1.21, "--gamma", 0.003, "--out", out_path)
    assert code == 0
    rows = list(csv.reader(out_path.open()))
    assert rows[0] == ["rho", "u"] and len(rows) == 5
    meta = json.loads(out_path.with_suffix(".json").read_text())
    assert meta["pool"] == {"d": 1.21, "gamma": 0.003}
    # the canonical trace is itself valid input and reproduces the stats
    code, out, _ = run_cli(capsys, "stats", "--input", out_path)
    assert json.loads(out)["P"] == pytest.approx(0.75)


def test_run_static_flat(capsys, flat_file):
    code, out, _ = run_cli(capsys, "run", "--input", flat_file, "--strategy", "static:5")
    assert code == 0
    report = json.loads(out)
    assert report["total_reward"] == 0 and report["wealth_multiple"] == 1


def test_run_static_inf_matches_full_range_formula(capsys, synth_trace):
    _, out, _ = run_cli(capsys, "run", "--input", synth_trace, "--strategy", "static:inf")
    report = json.loads(out)
    trace = np.loadtxt(synth_trace, delimiter=",", skiprows=1)
    expected = math.fsum(math.log(1.01 ** (r / 2) + 0.003 * u) for r, u in trace)
    assert report["total_reward"] == pytest.approx(expected, rel=1e-12)
    assert report["total_reward"] == pytest.approx(sum(report["reward_series"]), rel=1e-9)
    assert report["wealth_multiple"] == pytest.approx(math.exp(report["total_reward"]), rel=1e-12)


def test_run_ewa_auto_within_regret_gap(capsys, synth_trace):
    _, out, _ = run_cli(capsys, "run", "--input", synth_trace, "--strategy", "ewa:auto")
    ewa = json.loads(out)
    N = len(ewa["controllers"])
    grid = ",".join(ewa["controllers"])
    _, out, _ = run_cli(capsys, "sweep", "--input", synth_trace, "--grid", grid)
    best = max(float(row["total_reward"]) for row in csv.DictReader(out.splitlines()))
    gap = bounds.lemma4_regret_gap(N, ewa["eta"], ewa["steps"])
    assert ewa["total_reward"] >= best - gap


def test_run_ewa_custom_grid_and_eta(capsys, synth_trace):
    code, out, _ = run_cli(capsys, "run", "--input", synth_trace, "--strategy", "ewa:1000:1,10,100,inf")
    assert code == 0
    report = json.loads(out)
    assert report["controllers"] == ["1", "10", "100", "inf"] and report["eta"] == 1000


@pytest.mark.parametrize("spec", ["hodl:3", "static:", "static:0", "static:1.5", "ewa:-1", "ewa:auto:5", "ewa:abc"])
def test_run_bad_strategy_exits_2(capsys, synth_trace, spec):
    code, _, err = run_cli(capsys, "run", "--input", synth_trace, "--strategy", spec)
    assert code == 2 and err


def test_run_series_out(tmp_path, capsys, synth_trace):
    series = tmp_path / "series.csv"
    _, out, _ = run_cli(capsys, "run", "--input", synth_trace, "--strategy", "static:4", "--series-out", series)
    rows = list(csv.reader(series.open()))
    assert rows[0] == ["t", "reward", "cumulative"] and len(rows) == 301
    assert float(rows[-1][2]) == pytest.approx(json.loads(out)["total_reward"], rel=1e-12)


def test_run_with_bounds(capsys, synth_trace):
    _, out, _ = run_cli(capsys, "run", "--input", synth_trace, "--strategy", "static:4", "--bounds")
    assert {b["bound_name"] for b in json.loads(out)["bounds"]} == set(bounds.BOUND_NAMES)


def test_run_deterministic_and_round_trips(capsys, synth_trace):
    outs = [run_cli(capsys, "run", "--input", synth_trace, "--strategy", "ewa:auto")[1] for _ in range(2)]
    assert outs[0] == outs[1]
    assert canonical_json(json.loads(outs[0])) + "\n" == outs[0]


def test_sweep_single_row_matches_run(capsys, synth_trace):
    _, out, _ = run_cli(capsys, "sweep", "--input", synth_trace, "--grid", "1")
    rows = list(csv.DictReader(out.splitlines()))
    _, run_out, _ = run_cli(capsys, "run", "--input", synth_trace, "--strategy", "static:1")
    assert len(rows) == 1 and rows[0]["n"] == "1"
    assert float(rows[0]["total_reward"]) == json.loads(run_out)["total_reward"]


def test_sweep_powers_of_ten_rows_recomputable(capsys, synth_trace):
    grid = "inf,1000000,1,10,100,1000,10000,100000"
    _, out, _ = run_cli(capsys, "sweep", "--input", synth_trace, "--grid", grid, "--eta", "1000")
    rows = list(csv.DictReader(out.splitlines()))
    assert [r["n"] for r in rows] == ["1", "10", "100", "1000", "10000", "100000", "1000000", "inf", "ewa"]
    for row in rows[:-1]:
        _, run_out, _ = run_cli(capsys, "run", "--input", synth_trace, "--strategy", f"static:{row['n']}")
        assert float(row["total_reward"]) == json.loads(run_out)["total_reward"]


def test_sweep_json(capsys, synth_trace):
    _, out, _ = run_cli(capsys, "sweep", "--input", synth_trace, "--grid", "1,2", "--json")
    assert [r["n"] for r in json.loads(out)] == ["1", "2"]


def test_sweep_empty_grid_exits_2(capsys, synth_trace):
    code, _, _ = run_cli(capsys, "sweep", "--input", synth_trace, "--grid", ",")
    assert code == 2


def test_check_bounds_compliant(capsys, synth_trace):
    code, out, _ = run_cli(capsys, "check-bounds", "--input", synth_trace)
    assert code == 0
    reports = json.loads(out)
    assert all(r["satisfied"] in (True, "not_applicable") for r in reports)
    assert all(r["satisfied"] is True for r in reports if r["bound_name"] != "Corollary3")


def test_check_bounds_volume_cap_not_applicable(tmp_path, capsys):
    pool = PoolParams(1.01, 0.003)
    path = tmp_path / "loud.csv"
    write_trace(path, Trace([1.0, -2.0, 0.5], [0.1, 3 / 0.003, 0.2]), pool)
    code, out, _ = run_cli(capsys, "check-bounds", "--input", path)
    assert code == 0
    by_name = {r["bound_name"]: r for r in json.loads(out)}
    assert by_name["Lemma1"]["satisfied"] == "not_applicable"
    assert by_name["Lemma3"]["satisfied"] == "not_applicable"


def test_check_bounds_detects_corrupted_rewards(capsys, synth_trace, monkeypatch):
    monkeypatch.setattr(bounds.reward, "total_reward", lambda *args, **kw: -1e9)
    code, _, err = run_cli(capsys, "check-bounds", "--input", synth_trace)
    assert code == 1 and "violated" in err


def test_synth_command(tmp_path, capsys):
    out_path = tmp_path / "s.csv"
    code, out, _ = run_cli(capsys, "synth", "--steps", 50, "--seed", 3, "--d", 1.05, "--gamma", 0.003, "--out", out_path)
    assert code == 0 and json.loads(out)["T"] == 50
    code, _, _ = run_cli(capsys, "check-bounds", "--input", out_path)
    assert code == 0


def test_module_entry_point(synth_trace):
    proc = subprocess.run(
        [sys.executable, "-m", "v3olp", "run", "--input", str(synth_trace), "--strategy", "static:inf"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0 and json.loads(proc.stdout)["strategy"] == "static:inf"


def test_run_huge_wealth_reports_infinite_multiple(tmp_path, capsys):
    pool = PoolParams(1.01, 0.003)
    path = tmp_path / "rich.csv"
    write_trace(path, Trace(np.zeros(1000), np.full(1000, 600.0)), pool)
    code, out, _ = run_cli(capsys, "run", "--input", path, "--strategy", "static:inf")
    report = json.loads(out)
    assert code == 0 and report["total_reward"] > 709 and report["wealth_multiple"] == "inf"
