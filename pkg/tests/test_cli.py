"""Command-line interface: subcommands, exit statuses, artifact stability."""

import json

import numpy as np
import pytest

from fret.cli import main
from fret.scenarios import builtin_scenarios


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_scenario_list(capsys):
    code, out, _ = run(capsys, "scenario", "list")
    assert code == 0
    for name in builtin_scenarios():
        assert name in out


def test_stationary_json_and_csv(tmp_path, capsys):
    f = tmp_path / "P.json"
    f.write_text(json.dumps({"m": 2, "rows": [[0.9, 0.1], [0.2, 0.8]]}))
    code, out, _ = run(capsys, "stationary", str(f))
    assert code == 0
    probs = json.loads(out)["probs"]
    assert probs == pytest.approx([2 / 3, 1 / 3], abs=1e-12)
    g = tmp_path / "P.csv"
    g.write_text("0.9,0.1\n0.2,0.8\n")
    code, out, _ = run(capsys, "stationary", str(g))
    assert code == 0
    assert json.loads(out)["probs"] == pytest.approx([2 / 3, 1 / 3],
                                                     abs=1e-12)


def test_stationary_rejects_reducible(tmp_path, capsys):
    f = tmp_path / "I.json"
    f.write_text(json.dumps({"m": 2, "rows": [[1.0, 0.0], [0.0, 1.0]]}))
    code, _, err = run(capsys, "stationary", str(f))
    assert code == 1
    assert "ergodic" in err


def test_stationary_malformed_file(tmp_path, capsys):
    f = tmp_path / "bad.json"
    f.write_text('{"rows": [[0.9, 0.2], [0.2, 0.8]]}')
    with pytest.raises(SystemExit) as exc:
        run(capsys, "stationary", str(f))
    assert "malformed" in str(exc.value)


def test_unknown_scenario_lists_available(capsys):
    with pytest.raises(SystemExit) as exc:
        run(capsys, "check", "no_such_scenario")
    msg = str(exc.value)
    assert "unknown scenario" in msg and "drift" in msg


def test_check_exit_statuses_match_registry(capsys):
    code, out, _ = run(capsys, "check", "drift", "--conditions",
                       "A,B,C,D1,D2")
    assert code == 0 and out.count("pass") == 5
    code, out, _ = run(capsys, "check", "unscaled_D", "--conditions", "D1")
    assert code == 1 and "fail" in out
    code, out, _ = run(capsys, "check", "no_decay_A", "--conditions", "A")
    assert code == 1
    code, out, _ = run(capsys, "check", "vanishing_coupling_B",
                       "--conditions", "B")
    assert code == 1
    code, out, _ = run(capsys, "check", "fat_flag_C", "--conditions", "C")
    assert code == 1


def test_check_model_file(tmp_path, capsys):
    kernel = builtin_scenarios()["drift"].family.kernel(1e-2)
    f = tmp_path / "model.json"
    f.write_text(json.dumps(kernel.to_json()))
    code, out, _ = run(capsys, "check", str(f), "--conditions", "B")
    assert code == 0 and "pass" in out


def test_check_writes_json_report(tmp_path, capsys):
    out_path = tmp_path / "report.json"
    code, _, _ = run(capsys, "check", "drift", "--conditions", "A,B",
                     "--out", str(out_path))
    assert code == 0
    payload = json.loads(out_path.read_text())
    assert payload["scenario"] == "drift"
    assert payload["conditions"]["A"]["verdict"] == "pass"
    assert payload["conditions"]["B"]["diagnostics"]["ring"] == [1, 1]


def test_simulate_csv_reproducible(tmp_path, capsys):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for path in (a, b):
        code, _, _ = run(capsys, "simulate", "drift", "--eps", "1e-2",
                         "-n", "50", "--seed", "9", "--t", "0.5,1.0",
                         "--out", str(path))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().strip().splitlines()
    header = lines[0].split(",")
    assert header[:4] == ["replicate", "nu", "xi", "last_sojourn"]
    assert header[4].startswith("xi_t_")
    assert len(lines) == 51
    row = lines[1].split(",")
    assert float(row[5]) == float(row[2])  # xi(1.0) column equals xi


def test_verify_cli_end_to_end(tmp_path, capsys):
    out_path = tmp_path / "report.json"
    csv_path = tmp_path / "plot.csv"
    code, _, err = run(capsys, "verify", "lemma7", "drift", "--eps-grid",
                       "1e-2,1e-3", "-n", "2000", "--seed", "42",
                       "--out", str(out_path), "--csv", str(csv_path))
    assert code == 0
    assert "trend improving" in err
    payload = json.loads(out_path.read_text())
    assert payload["trend"] == "improving"
    assert csv_path.read_text().startswith("eps,t,s,n,")
    # byte-for-byte reproducibility of artifacts
    out2 = tmp_path / "report2.json"
    run(capsys, "verify", "lemma7", "drift", "--eps-grid", "1e-2,1e-3",
        "-n", "2000", "--seed", "42", "--out", str(out2))
    assert out_path.read_bytes() == out2.read_bytes()


def test_verify_refuses_failing_preconditions(tmp_path, capsys):
    code, _, err = run(capsys, "verify", "lemma7", "no_decay_A",
                       "-n", "100", "--seed", "1")
    assert code == 3
    assert "A" in err and "--force" in err
    out_path = tmp_path / "forced.json"
    code, _, _ = run(capsys, "verify", "lemma7", "no_decay_A", "-n", "100",
                     "--seed", "1", "--force", "--out", str(out_path))
    payload = json.loads(out_path.read_text())
    assert payload["meta"]["watermark"] == "preconditions-violated"


def test_verify_theorem1_cli_smoke(tmp_path, capsys):
    out_path = tmp_path / "t1.json"
    code, _, _ = run(capsys, "verify", "theorem1", "drift", "--eps-grid",
                     "1e-2", "-n", "500", "--seed", "7", "--t", "0.5,1.0",
                     "--out", str(out_path))
    assert code == 0
    payload = json.loads(out_path.read_text())
    assert {r["s"] for r in payload["rows"]} == {0.5, 1.0, 2.0}
