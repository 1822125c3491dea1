import csv
import json
import math
import os
import subprocess
import sys
from pathlib import Path

import pytest

from contactum.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def write(tmp_path, node, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(node) if not isinstance(node, str) else node)
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_catalog_lists_builtins(capsys):
    assert run("catalog") == 0
    out = capsys.readouterr().out
    entries = [line for line in out.splitlines() if not line.startswith(" ")]
    assert [e.split()[0] for e in entries] == ["trivial-jet", "mobius", "projective"]
    assert "transition" not in out


def test_catalog_verbose_shows_transitions(capsys):
    assert run("catalog", "mobius", "-v") == 0
    out = capsys.readouterr().out
    assert "transition U -> U" in out and "cocycle" in out


def test_catalog_unknown_filter(capsys):
    assert run("catalog", "torus") == 0
    assert capsys.readouterr().out == ""


def test_catalog_json(tmp_path, capsys):
    assert run("catalog", "--n", "2", "--out", tmp_path) == 0
    data = json.loads((tmp_path / "catalog.json").read_text())
    proj = next(e for e in data if e["name"] == "projective")
    assert len(proj["charts"]) == 3


def test_simulate_constant(tmp_path, capsys):
    assert run("simulate", "--config", CONFIGS / "constant.json", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "trajectory.csv")
    assert rows[0] == ["t", "chart", "coord_0", "coord_1", "coord_2"]
    assert float(rows[-1][0]) == 2.0
    assert float(rows[-1][2]) == pytest.approx(-2.0, abs=1e-12)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["samples"] == len(rows) - 1
    assert summary["end"]["coords"][0] == pytest.approx(-2.0, abs=1e-12)


def test_simulate_mobius(tmp_path, capsys):
    assert run("simulate", "--config", CONFIGS / "mobius_fe.json", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["decay_residual"] <= 1e-5
    assert len(summary["events"]) == 1


def test_csv_round_trips_doubles(tmp_path, capsys):
    run("simulate", "--config", CONFIGS / "mobius_fe.json", "--out", tmp_path)
    raw = (tmp_path / "trajectory.csv").read_bytes()
    assert b"\r" not in raw
    summary = json.loads((tmp_path / "summary.json").read_text())
    last = read_csv(tmp_path / "trajectory.csv")[-1]
    assert [float(v) for v in last[2:]] == summary["end"]["coords"]


@pytest.mark.parametrize("command", ["simulate", "verify"])
def test_outputs_are_deterministic(tmp_path, command, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(command, "--config", CONFIGS / "mobius_fe.json", "--out", a)
    run(command, "--config", CONFIGS / "mobius_fe.json", "--out", b)
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b)) and names
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_seed_changes_samples(tmp_path, capsys):
    run("verify", "--config", CONFIGS / "mobius_fe.json", "--out", tmp_path / "a", "--seed", "1")
    run("verify", "--config", CONFIGS / "mobius_fe.json", "--out", tmp_path / "b", "--seed", "2")
    a = json.loads((tmp_path / "a" / "verify.json").read_text())
    b = json.loads((tmp_path / "b" / "verify.json").read_text())
    assert a["seed"] == 1 and b["seed"] == 2
    assert a["suites"]["cartan"]["max_residual"] != b["suites"]["cartan"]["max_residual"]


@pytest.mark.parametrize("name", ["mobius_fe.json", "trivial_z.json", "projective_switch.json"])
def test_verify_passes(tmp_path, name, capsys):
    assert run("verify", "--config", CONFIGS / name, "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["pass"] is True


def test_verify_detects_non_global_hamiltonian(tmp_path, capsys):
    assert run("verify", "--config", CONFIGS / "mobius_not_global.json", "--out", tmp_path) == 1
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["suites"]["hamiltonian_cocycle"]["pass"] is False
    assert report["suites"]["defining_equations"]["pass"] is True


def test_verify_rescale_diagnostic(tmp_path, capsys):
    run("verify", "--config", CONFIGS / "trivial_z.json", "--out", tmp_path)
    diag = json.loads((tmp_path / "verify.json").read_text())["diagnostics"]["evolution_rescale"]
    assert diag["difference"] == pytest.approx(1.0, abs=1e-12)


def test_tolerance_scale(tmp_path, capsys):
    node = {"model": {"builtin": "trivial-jet"}, "hamiltonian": "exp(z/3)*(p1^2 + q1^2)", "verify": {"samples": 20}}
    cfg = write(tmp_path, node)
    assert run("verify", "--config", cfg, "--out", tmp_path / "a") == 0
    # a tiny scale drives every nonzero residual over its limit
    assert run("verify", "--config", cfg, "--out", tmp_path / "b", "--tolerance-scale", "1e-30") == 1
    report = json.loads((tmp_path / "b" / "verify.json").read_text())
    assert report["suites"]["cartan"]["tolerance"] == pytest.approx(1e-37)
    assert run("verify", "--config", cfg, "--out", tmp_path / "c", "--tolerance-scale", "0") == 2


def test_hj_residual_pass(tmp_path, capsys):
    assert run("hj", "--config", CONFIGS / "hj_discounted.json", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "hj.json").read_text())
    assert report["max_residual"] <= 1e-10
    assert len(report["table"]) == 101


def test_hj_residual_fail_reports_argmax(tmp_path, capsys):
    assert run("hj", "--config", CONFIGS / "hj_not_solution.json", "--out", tmp_path) == 1
    report = json.loads((tmp_path / "hj.json").read_text())
    assert report["argmax"]["q"] == [2.0]
    assert "q=[2.0]" in capsys.readouterr().out


def test_hj_characteristics_damping(tmp_path, capsys):
    assert run("hj", "--mode", "characteristics", "--config", CONFIGS / "hj_damping.json", "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "characteristics.csv")
    assert rows[0] == ["launch", "t", "chart", "coord_0", "coord_1", "coord_2"]
    for k, t, _, z, q, _ in rows[1:]:
        assert float(z) == pytest.approx(math.exp(-float(t)) * float(q) ** 2, abs=1e-8)
    report = json.loads((tmp_path / "hj.json").read_text())
    assert report["max_z_error"] <= 1e-8


BAD_CONFIGS = [
    "{not json",
    {"hamiltonian": "z"},
    {"model": {"builtin": "torus"}, "hamiltonian": "z"},
    {"model": {"builtin": "trivial-jet"}, "hamiltonian": "z +"},
    {"model": {"builtin": "trivial-jet"}, "hamiltonian": "z + w"},
    {"model": {"builtin": "trivial-jet"}, "hamiltonian": "z", "initial": {"chart": "K", "coords": [0, 0, 0]}},
    {"model": {"builtin": "trivial-jet"}, "hamiltonian": "z", "initial": {"chart": "J", "coords": [0, 0]}},
    {"model": {"builtin": "trivial-jet"}, "hamiltonian": "z", "seed": "x"},
    {"model": {"builtin": "mobius"}, "homogeneous_hamiltonian": "p0"},
]


@pytest.mark.parametrize("node", BAD_CONFIGS)
def test_config_errors_exit_2(tmp_path, node, capsys):
    cfg = write(tmp_path, node)
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 2
    assert "config error" in capsys.readouterr().err


def test_malformed_json_reports_position(tmp_path, capsys):
    cfg = write(tmp_path, '{\n  "model": oops\n}')
    assert run("verify", "--config", cfg) == 2
    assert "line 2" in capsys.readouterr().err


def test_missing_config_and_pieces(tmp_path, capsys):
    assert run("simulate") == 2
    assert run("simulate", "--config", tmp_path / "absent.json") == 2
    cfg = write(tmp_path, {"model": {"builtin": "trivial-jet"}, "hamiltonian": "z"})
    assert run("simulate", "--config", cfg, "--out", tmp_path) == 2
    assert run("hj", "--config", cfg, "--out", tmp_path) == 2


def test_runtime_error_exit_3(tmp_path, capsys):
    node = {
        "model": {"builtin": "trivial-jet"},
        "hamiltonian": "ln(q1)",
        "initial": {"chart": "J", "coords": [0.0, -1.0, 0.0]},
    }
    assert run("simulate", "--config", write(tmp_path, node), "--out", tmp_path) == 3
    assert "runtime error" in capsys.readouterr().err


def test_escape_exit_3(tmp_path, capsys):
    node = {
        "model": {
            "atlas": {
                "name": "box",
                "charts": [
                    {
                        "id": "B",
                        "n": 1,
                        "names": ["z", "q", "p"],
                        "domain": {"lo": [-1, -1, -1], "hi": [1, 1, 1]},
                        "core": {"lo": [-0.5, -0.5, -0.5], "hi": [0.5, 0.5, 0.5]},
                    }
                ],
            }
        },
        "hamiltonian": "-1",
        "initial": {"chart": "B", "coords": [0, 0, 0]},
        "integrator": {"t1": 5.0, "h": 0.1},
    }
    assert run("simulate", "--config", write(tmp_path, node), "--out", tmp_path) == 3


def test_inline_atlas_matches_builtin(tmp_path, capsys):
    node = {
        "model": {
            "atlas": {
                "name": "strip",
                "charts": [{"id": "A", "n": 1, "names": ["z", "q1", "p1"], "core": {"lo": [-2, -2, -2], "hi": [2, 2, 2]}}],
            }
        },
        "hamiltonian": "1",
        "initial": {"chart": "A", "coords": [0, 0, 0]},
    }
    assert run("simulate", "--config", write(tmp_path, node), "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["end"]["coords"][0] == pytest.approx(-1.0, abs=1e-12)


def test_log_level_from_environment(tmp_path):
    env = dict(os.environ, CONTACTUM_LOG="debug")
    cmd = [sys.executable, "-m", "contactum.cli", "simulate", "--config", str(CONFIGS / "mobius_fe.json"), "--out", str(tmp_path)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert proc.returncode == 0
    assert "chart switch U -> U" in proc.stderr
    env["CONTACTUM_LOG"] = "error"
    quiet = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert quiet.returncode == 0 and quiet.stderr == ""
    env["CONTACTUM_LOG"] = "loud"
    odd = subprocess.run(cmd, env=env, capture_output=True, text=True)
    assert odd.returncode == 0 and "ignoring CONTACTUM_LOG" in odd.stderr
