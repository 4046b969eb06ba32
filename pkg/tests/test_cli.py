import json

import pytest

from sseplab.cli import main

BASE = """
schema = 1
[profile]
{profile}
[experiment]
N = {N}
times = [0.25, 0.5]
observables = ["current", "tagged", "field"]
fields = ["ramp:1"]
replicas = {R}
seed = 11
[verify]
oracle_replicas = 200000
invariant_replicas = 4
[theory]
ou = [{{H = "ramp:1", G = "ramp:1", s = 0.25, t = 0.5}}]
"""
TANH = 'kind = "tanh-front"\nlo = 0.3\nhi = 0.7'
CONST = 'kind = "constant"\nvalue = 0.4'


@pytest.fixture
def config(tmp_path):
    def make(profile=TANH, N=8, R=300, name="run.toml"):
        p = tmp_path / name
        p.write_text(BASE.format(profile=profile, N=N, R=R))
        return str(p)
    return make


def run(*args):
    return main([str(a) for a in args])


def test_pde_on_constant_profile(config, tmp_path):
    out = tmp_path / "o"
    assert run("pde", "--config", config(CONST), "--out", out) == 0
    doc = json.loads((out / "convergence.json").read_text())
    assert all(r["sup_error"] <= 1e-12 for r in doc["rows"])
    assert all(doc["verdicts"].values())
    first = (out / "field.csv").read_text().splitlines()[0]
    assert first.startswith("# plan_hash=")


def test_report_without_inputs(tmp_path, capsys):
    assert run("report", "--out", tmp_path / "empty") == 2
    assert "no inputs" in capsys.readouterr().err


def test_compare_needs_inputs(config, tmp_path, capsys):
    assert run("compare", "--config", config(), "--out", tmp_path / "o") == 2
    assert "simulate" in capsys.readouterr().err


def test_invalid_config_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("schema = 1\n[profile]\nkind = 'constant'\nvalue = 0.5\n[experiment]\nN = 4\ntimes = [1.0, 0.5]\n")
    assert run("simulate", "--config", p) == 2
    assert "experiment.times" in capsys.readouterr().err


def test_verify_small_oracle(config, tmp_path):
    out = tmp_path / "o"
    assert run("verify", "--config", config(), "--out", out) == 0
    doc = json.loads((out / "verify.json").read_text())
    assert {o["scheme"] for o in doc["oracle"]} == {"rejection-free", "uniformized"}
    assert doc["invariants"]["active_bonds_rescan"]


def test_full_pipeline_and_report(config, tmp_path):
    out = tmp_path / "o"
    cfg = config()
    for cmd in ("simulate", "theory", "pde", "compare"):
        assert run(cmd, "--config", cfg, "--out", out) in (0, 1), cmd
    assert (out / "samples.csv").exists() and (out / "report.csv").exists()
    code = run("report", "--config", cfg, "--out", out)
    summary = json.loads((out / "summary.json").read_text())
    assert code == (0 if summary["all_pass"] else 1)
    assert {"compare", "pde", "theory"} <= set(summary["verdicts"])
    # a config with a different seed must not be joined with these files
    other = config(name="other.toml")
    text = open(other).read().replace("seed = 11", "seed = 12")
    open(other, "w").write(text)
    assert run("report", "--config", other, "--out", out) == 2


def test_report_refuses_mixed_hashes(config, tmp_path):
    out = tmp_path / "o"
    assert run("theory", "--config", config(), "--out", out) == 0
    assert run("simulate", "--config", config(), "--out", out, "--seed", 99) == 0
    assert run("report", "--out", out) == 2


def test_seed_override_and_threads(config, tmp_path, monkeypatch):
    a, b = tmp_path / "a", tmp_path / "b"
    monkeypatch.setenv("SSEPLAB_THREADS", "3")
    assert run("simulate", "--config", config(R=20), "--out", a) == 0
    monkeypatch.delenv("SSEPLAB_THREADS")
    assert run("simulate", "--config", config(R=20), "--out", b, "--threads", 1) == 0
    assert (a / "samples.csv").read_text() == (b / "samples.csv").read_text()
