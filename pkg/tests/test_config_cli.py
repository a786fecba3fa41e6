import csv
import json

import numpy as np
import pytest

from richards_lab.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main
from richards_lab.config import ConfigError, RunConfig, compile_expression
from richards_lab.mesh import DirichletFixed, DirichletTransient, NeumannNoFlow


def small_config(**overrides):
    cfg = {
        "problem": {
            "domain": [[0, 2], [0, 3]],
            "mesh": [[4, 6]],
            "soil": "silt",
            "boundary": [
                {"type": "transient", "x": [0, 1], "z": 3, "profile": "example2_trench",
                 "params": {"dt_D": 0.0625}},
                {"type": "dirichlet", "x": 2, "z": [0, 1], "value": "expression:1 - z"},
            ],
            "initial": "expression:1 - z",
            "tau": 1 / 48,
            "steps": 2,
        },
        "schemes": [
            {"kind": "lscheme", "L": 0.04501, "name": "L1"},
            {"kind": "mixed", "first": "picard", "switch": {"delta_a": 0.2}, "name": "P/N"},
        ],
    }
    cfg.update(overrides)
    return cfg


@pytest.mark.parametrize(
    "text, x, z, t, expected",
    [
        ("1 - z", 0.0, 0.25, 0.0, 0.75),
        ("sin(pi * x) ** 2", 0.5, 0.0, 0.0, 1.0),
        ("where(z > -0.75, -2, -z - 0.75)", 0.0, -1.0, 0.0, 0.25),
        ("where(z > -0.75, -2, -z - 0.75)", 0.0, -0.5, 0.0, -2.0),
        ("2 * t + abs(-x)", 3.0, 0.0, 0.5, 4.0),
        ("exp(0) + sqrt(4) - cos(0)", 0.0, 0.0, 0.0, 2.0),
    ],
)
def test_expression_grammar(text, x, z, t, expected):
    f = compile_expression(text)
    assert float(f(np.array([x]), np.array([z]), t)[0]) == pytest.approx(expected)


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "y + 1", "open(1)", "x if z else 1", "1 +"])
def test_expression_rejects_unsafe_or_bad_input(text):
    with pytest.raises(ConfigError):
        compile_expression(text)


def test_expression_broadcasts_constants():
    f = compile_expression("3")
    assert f(np.zeros(4), np.zeros(4)).shape == (4,)


def test_config_roundtrip_idempotent():
    cfg = RunConfig.from_dict(small_config())
    again = RunConfig.from_dict(json.loads(cfg.dumps()))
    assert again.dumps() == cfg.dumps()
    assert cfg.data["stopping"] == {"eps_a": 1e-5, "eps_r": 1e-5, "max_iter": 50}


def test_config_boundary_rule():
    rule = RunConfig.from_dict(small_config()).boundary_rule()
    assert isinstance(rule(0.5, 3.0), DirichletTransient)
    assert isinstance(rule(2.0, 0.5), DirichletFixed)
    assert isinstance(rule(2.0, 2.0), NeumannNoFlow)
    assert isinstance(rule(1.5, 3.0), NeumannNoFlow)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda c: c.update(extra=1),
        lambda c: c["problem"].update(tau=-1),
        lambda c: c["problem"].update(soil="sand"),
        lambda c: c["schemes"].append({"kind": "lscheme"}),
        lambda c: c["schemes"].append({"kind": "mixed", "first": "picard"}),
        lambda c: c["problem"].update(initial="expression:q"),
        lambda c: c["problem"]["boundary"].append({"type": "dirichlet"}),
        lambda c: c["problem"].update(soil={"theta_R": 0.5, "theta_S": 0.4, "alpha": 1, "n": 2, "K_S": 1}),
    ],
)
def test_config_rejects_invalid(mutate):
    cfg = small_config()
    mutate(cfg)
    with pytest.raises(ConfigError):
        RunConfig.from_dict(cfg)


def test_cli_run_writes_only_into_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    cfg_path = tmp_path / "cfg.json"
    cfg = small_config(output={"formats": ["csv", "vtk"], "basename": "small", "condest": False})
    cfg_path.write_text(json.dumps(cfg))
    before = set(tmp_path.iterdir())
    assert main(["run", "--config", str(cfg_path), "--out", "out"]) == EXIT_OK
    assert set(tmp_path.iterdir()) - before == {tmp_path / "out"}
    with open(tmp_path / "out" / "small.csv") as f:
        rows = list(csv.DictReader(f))
    assert [r["scheme"] for r in rows] == ["L1", "P/N"]
    assert all(r["converged"] == "true" for r in rows)
    normalized = json.loads((tmp_path / "out" / "config.normalized.json").read_text())
    assert RunConfig.from_dict(normalized).dumps() == RunConfig.from_dict(cfg).dumps()
    assert len(list((tmp_path / "out" / "fields").glob("*.vtk"))) == 2


def test_cli_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "cannot read config" in capsys.readouterr().err


def test_cli_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{")
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert not (tmp_path / "o").exists()


def test_cli_argument_errors():
    assert main([]) == EXIT_CONFIG
    assert main(["example1", "--psi-vad", "-5", "--out", "x"]) == EXIT_CONFIG
    assert main(["example2", "--soil", "sand", "--out", "x"]) == EXIT_CONFIG


def test_cli_example1_failure_exit_code(tmp_path):
    code = main(["example1", "--psi-vad", "-3", "--out", str(tmp_path), "--meshes", "20", "--no-condest", "--vtk"])
    assert code == EXIT_FAILED
    with open(tmp_path / "example1_psivad-3.csv") as f:
        rows = {r["scheme"]: r for r in csv.DictReader(f)}
    assert rows["Newton"]["converged"] == "false"
    assert rows["L-scheme L=0.15"]["converged"] == "true"
    vtks = {p.name for p in (tmp_path / "fields").glob("*.vtk")}
    assert "Newton_h20.vtk" not in vtks and "L_scheme_L_0_15_h20.vtk" in vtks


def test_cli_example2_silt(tmp_path):
    assert main(["example2", "--soil", "silt", "--out", str(tmp_path), "--no-condest"]) == EXIT_OK
    with open(tmp_path / "example2_silt.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 7
    assert (tmp_path / "fields" / "Newton_h10.vtk").exists()


def test_cli_theory(tmp_path):
    assert main(["theory", "--out", str(tmp_path), "--meshes", "6"]) == EXIT_OK
    with open(tmp_path / "theory.csv") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 9
    assert all(float(r["max_measured_ratio"]) <= float(r["theoretical_rate"]) for r in rows)
