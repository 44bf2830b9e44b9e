"""Command-line interface: pipelines, exit codes, reproducibility."""

import json
import math
import subprocess
import sys

import pytest

from varalloc.cli import run

SQRT_4_OVER_PI = math.sqrt(4 / math.pi)


def test_generate_solve_evaluate_pipeline(tmp_path, capsys):
    inst = tmp_path / "cycle.json"
    rep = tmp_path / "report.json"
    evl = tmp_path / "eval.json"
    assert run(["generate", "cycle", "--n", "4", "--mu", "0", "--out", str(inst)]) == 0
    assert run(["solve", "uniform", "--in", str(inst), "--out", str(rep)]) == 0
    assert run(["evaluate", "--in", str(rep), "--out", str(evl)]) == 0

    report = json.loads(rep.read_text())
    assert report["objective"]["value"] == pytest.approx(SQRT_4_OVER_PI, abs=1e-6)
    assert report["seed"] == 0

    evaluated = json.loads(evl.read_text())
    assert evaluated["matches_reported"] is True
    assert abs(
        evaluated["objective"]["value"] - report["objective"]["value"]
    ) <= report["objective"]["half_width"] + 1e-6


def test_solve_ptas_ind(tmp_path):
    inst = tmp_path / "pair.json"
    inst.write_text('{"n": 2, "means": [0.0, 0.0], "sets": [[0, 1]]}\n')
    out = tmp_path / "rep.json"
    assert run(["solve", "ptas-ind", "--in", str(inst), "--eps", "0.5", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["objective"]["value"] >= 0.3979
    assert report["eps"] == 0.5


def test_solve_ptas_corr_and_evaluate(tmp_path):
    inst = tmp_path / "pair.json"
    inst.write_text('{"n": 2, "means": [0.0, 0.0], "sets": [[0, 1]]}\n')
    rep = tmp_path / "rep.json"
    assert run([
        "solve", "ptas-corr", "--in", str(inst), "--eps", "0.7",
        "--grid-step", "0.25", "--mc-samples", "200000", "--out", str(rep),
    ]) == 0
    doc = json.loads(rep.read_text())
    assert doc["allocation"]["matrix"][0][1] == pytest.approx(-0.5)
    evl = tmp_path / "eval.json"
    assert run(["evaluate", "--in", str(rep), "--out", str(evl)]) == 0
    assert json.loads(evl.read_text())["matches_reported"] is True


def test_byte_identical_reproducibility(tmp_path):
    paths = []
    for tag in ("a", "b"):
        inst = tmp_path / f"inst_{tag}.json"
        rep = tmp_path / f"rep_{tag}.json"
        csv = tmp_path / f"sweep_{tag}.csv"
        assert run([
            "generate", "erdos-renyi", "--n", "6", "--m", "10",
            "--p", "0.4", "--seed", "11", "--out", str(inst),
        ]) == 0
        assert run([
            "solve", "log-approx", "--in", str(inst), "--seed", "3",
            "--mc-samples", "100000", "--out", str(rep),
        ]) == 0
        assert run([
            "sweep", "concentration", "--n", "4", "--m", "8",
            "--seed", "5", "--out", str(csv),
        ]) == 0
        paths.append((inst.read_bytes(), rep.read_bytes(), csv.read_bytes()))
    assert paths[0] == paths[1]


def test_verify_single_claim_ok(capsys):
    assert run(["verify", "--claim", "max_inequalities", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert "max_inequalities: ok" in out


def test_verify_all_default_trials_green(capsys):
    # Every check at its default trial count and seed 0 reports no violations.
    assert run(["verify", "--all", "--seed", "0"]) == 0
    out = capsys.readouterr().out
    assert out.count(": ok") == 7


def test_verify_writes_json_report(tmp_path):
    out = tmp_path / "verify.json"
    assert run(["verify", "--claim", "submodular_g", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc[0]["claim"] == "submodular_g"
    assert doc[0]["violations"] == 0


def test_usage_errors_exit_2(tmp_path, capsys):
    inst = tmp_path / "pair.json"
    inst.write_text('{"n": 2, "means": [0.0, 0.0], "sets": [[0, 1]]}\n')
    # missing --eps
    assert run(["solve", "ptas-ind", "--in", str(inst)]) == 2
    assert "error:" in capsys.readouterr().err
    # malformed instance
    bad = tmp_path / "bad.json"
    bad.write_text('{"n": 2, "means": [0.0, -1.0], "sets": [[0]]}\n')
    assert run(["solve", "uniform", "--in", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "error:" in err and "means[1]" in err
    # missing file
    assert run(["solve", "uniform", "--in", str(tmp_path / "nope.json")]) == 2
    # verify without a claim selection
    assert run(["verify"]) == 2


def test_verify_violation_exit_1(monkeypatch, capsys):
    import varalloc.analysis as analysis
    from varalloc.analysis import VerificationReport

    def failing(seed, mc_samples):
        return VerificationReport("always_fails", 10, 3, -1.0, (), seed)

    monkeypatch.setitem(analysis.ALL_CHECKS, "always_fails", failing)
    assert run(["verify", "--claim", "always_fails"]) == 1
    captured = capsys.readouterr()
    assert "VIOLATED" in captured.out
    assert "error:" in captured.err


def test_budget_failure_exit_1(tmp_path, capsys):
    inst = tmp_path / "many.json"
    inst.write_text(json.dumps({
        "n": 6, "means": [0.0] * 6, "sets": [list(range(6))],
    }))
    assert run(["solve", "brute-force", "--in", str(inst), "--grid-step", "0.01"]) == 1
    assert "error:" in capsys.readouterr().err


def test_sweep_concavity_csv(tmp_path):
    out = tmp_path / "concavity.csv"
    assert run([
        "sweep", "concavity", "--n", "4", "--seed", "0",
        "--mc-samples", "20000", "--out", str(out),
    ]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "parameter,statistic,value,ci_half_width"
    stats = {line.split(",")[1] for line in lines[1:]}
    assert {"independent", "concavity_margin"} <= stats


def test_console_entry_point(tmp_path):
    # The installed script path: generate to stdout.
    proc = subprocess.run(
        [sys.executable, "-m", "varalloc.cli", "generate", "cycle", "--n", "3", "--mu", "0.5"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    doc = json.loads(proc.stdout)
    assert doc["n"] == 3 and doc["means"] == [0.5, 0.5, 0.5]
