import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from covest.cli import main
from covest.core import read_ticks

FIX = Path(__file__).parent / "fixtures"
WORKED_X, WORKED_Y = str(FIX / "worked_x.csv"), str(FIX / "worked_y.csv")
TICK_A, TICK_B = str(FIX / "ticks_a.csv"), str(FIX / "ticks_b.csv")


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    rc = main(list(argv), out, err)
    return rc, out.getvalue(), err.getvalue()


def error_payload(err):
    assert err.startswith("error: ")
    return json.loads(err[len("error: "):])


def test_weights_output():
    rc, out, _ = run("weights", "--M", "2")
    assert rc == 0 and out == "1,-1\n2,2\n"
    rc, out, _ = run("weights", "--M", "5")
    w = np.array([float(line.split(",")[1]) for line in out.split()])
    assert abs(w.sum() - 1) < 1e-12


def test_weights_bad_m():
    rc, _, err = run("weights", "--M", "1")
    assert rc == 4 and "M" in error_payload(err)["message"]


def test_estimate_worked_example_hayashi_yoshida():
    rc, out, err = run("estimate", "--x", WORKED_X, "--y", WORKED_Y, "--M", "1", "--pilot-L", "2")
    assert rc == 0, err
    X = read_ticks(WORKED_X)[1]
    Y = read_ticks(WORKED_Y)[1]
    hand = ((X[3] - X[0]) * (Y[1] - Y[0]) + (X[3] - X[2]) * (Y[3] - Y[1])
            + (X[6] - X[3]) * (Y[4] - Y[3]) + (X[7] - X[5]) * (Y[5] - Y[4])
            + (X[8] - X[6]) * (Y[6] - Y[5]) + (X[8] - X[7]) * (Y[8] - Y[6])
            + (X[9] - X[8]) * (Y[9] - Y[7]) + (X[10] - X[9]) * (Y[10] - Y[8]))
    rep = json.loads(out)
    assert rep["point"] == pytest.approx(hand, abs=1e-14)
    assert rep["M_used"] == 1 and rep["n_sync"] == 8


def test_estimate_report_round_trip(tmp_path):
    f = tmp_path / "r.json"
    rc, _, _ = run("estimate", "--x", TICK_A, "--y", TICK_B, "--nonzero-noise", "--out", str(f))
    assert rc == 0
    rep = json.loads(f.read_text())
    for key in ("point", "M_used", "c_multi", "avar", "ci_low", "ci_high", "rate_scale", "diagnostics",
                "noise", "integrals", "pilot"):
        assert key in rep
    assert rep["ci_low"] < rep["point"] < rep["ci_high"]
    # every float survives text and back
    assert json.loads(json.dumps(rep)) == rep
    rc, _, _ = run("estimate", "--x", TICK_A, "--y", TICK_B, "--out", str(tmp_path / "s.json"))
    plain = json.loads((tmp_path / "s.json").read_text())
    # zero returns are excluded from the noise estimate only with the option
    assert rep["noise"]["eta2_x"] > plain["noise"]["eta2_x"]


def test_estimate_dump_sync(tmp_path):
    f = tmp_path / "sync.csv"
    rc, _, _ = run("estimate", "--x", WORKED_X, "--y", WORKED_Y, "--M", "1", "--pilot-L", "2", "--out",
                   str(tmp_path / "r.json"), "--dump-sync", str(f))
    assert rc == 0
    rows = list(csv.DictReader(f.open()))
    assert [int(r["case_x"]) for r in rows[1:]] == [2, 1, 3, 3, 2, 1, 1, 1]


def test_sync_dump_table():
    rc, out, _ = run("sync-dump", "--x", WORKED_X, "--y", WORKED_Y, "--no-normalize")
    assert rc == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 9
    assert [float(r["g"]) for r in rows] == [0.0, 0.25, 0.25, 0.45, 0.55, 0.7, 0.7, 0.8, 0.9]
    assert [int(r["case_y"]) for r in rows[1:]] == [1, 1, 1, 1, 1, 3, 4, 1]


def test_malformed_csv_reports_line(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("time,value\n0,1\n0.5,2\n0.7,x\n1,3\n")
    rc, _, err = run("estimate", "--x", str(bad), "--y", WORKED_Y)
    p = error_payload(err)
    assert rc == 3 and p["error"] == "parse" and p["line"] == 4


def test_missing_file_and_unknown_flag(tmp_path):
    rc, _, err = run("estimate", "--x", str(tmp_path / "none.csv"), "--y", WORKED_Y)
    assert rc == 3 and error_payload(err)["error"] == "io"
    rc, _, err = run("weights", "--M", "2", "--bogus")
    assert rc == 2 and error_payload(err)["error"] == "usage"


def test_non_increasing_times(tmp_path):
    bad = tmp_path / "dup.csv"
    bad.write_text("0,1\n0.5,2\n0.5,3\n1,4\n")
    rc, _, err = run("sync-dump", "--x", str(bad), "--y", WORKED_Y)
    p = error_payload(err)
    assert rc == 4 and p["index"] == 2
    rc, _, _ = run("sync-dump", "--x", str(bad), "--y", WORKED_Y, "--collapse-duplicates")
    assert rc == 0


def test_simulate_and_estimate(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("n = 4000\nrho = 0.5\neta2_x = 0.0001\neta2_y = 0.0001\n")
    x, y = tmp_path / "x.csv", tmp_path / "y.csv"
    assert run("simulate", "--config", str(cfg), "--out-x", str(x), "--out-y", str(y), "--seed", "3")[0] == 0
    first = x.read_bytes()
    run("simulate", "--config", str(cfg), "--out-x", str(x), "--out-y", str(y), "--seed", "3")
    assert x.read_bytes() == first
    rc, out, _ = run("estimate", "--x", str(x), "--y", str(y), "--no-normalize")
    assert rc == 0 and abs(json.loads(out)["point"] - 0.5) < 0.3


def test_simulate_requires_seed(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text("n = 100\n")
    rc, _, err = run("simulate", "--config", str(cfg), "--out-x", "a", "--out-y", "b")
    assert rc == 2 and "seed" in error_payload(err)["message"]


def test_mc_byte_identical(tmp_path):
    cfg = tmp_path / "benchmark.cfg"
    cfg.write_text("sampling = poisson\nn = 3000\neta2_x = 0.001\neta2_y = 0.001\nrho = 0.5\n")
    outs = []
    for threads in ("1", "2"):
        f = tmp_path / f"mc{threads}.csv"
        rc, _, err = run("mc", "--config", str(cfg), "--reps", "10", "--seed", "7", "--threads", threads,
                         "--out", str(f))
        assert rc == 0, err
        outs.append(f.read_bytes())
    assert outs[0] == outs[1]
    rows = list(csv.DictReader(io.StringIO(outs[0].decode())))
    vals = {r["quantity"]: r["value"] for r in rows}
    assert float(vals["reps"]) == 10 and float(vals["truth"]) == 0.5


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "covest", "weights", "--M", "3"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.splitlines()[0].startswith("1,")
