import io
import json
import os

import pytest

from honeysim import cli, theory
from honeysim.engine import ConfigError, ExperimentConfig


def test_validate_config_returns_config():
    cfg = cli.validate_config({"n": 128, "protocol": "kademlia", "adversary": {"fraction": 0.2}})
    assert isinstance(cfg, ExperimentConfig)
    assert cfg.adversary.fraction == 0.2


def test_validate_config_names_every_problem():
    errs = cli.validate_config({"n": "big", "colour": 1, "adversary": {"fraction": "x", "mood": 2}})
    assert isinstance(errs, list)
    for field in ("n", "colour", "adversary.fraction", "adversary.mood"):
        assert any(e.startswith(field + ":") for e in errs), field
    errs = cli.validate_config({"k": 5, "eta": 0.3})
    assert {e.split(":")[0] for e in errs} >= {"k", "eta"}
    assert cli.validate_config([1]) == ["config: expected a JSON object"]
    assert cli.validate_config({"adversary": 3}) == ["adversary: expected an object"]


def test_preset_expansion():
    runs = cli.preset_configs("attack-single")
    assert len(runs) == 9
    assert {t for t, _ in runs} >= {"honeybee_f0.3", "kademlia_f0.5", "gossipsub_f0.1"}
    runs = cli.preset_configs("attack-single", {"f": 0.3, "protocol": "kademlia", "epochs": 7, "seed": 4})
    assert [t for t, _ in runs] == ["kademlia_f0.3"]
    cfg = runs[0][1]
    assert (cfg.horizon_epochs, cfg.seed, cfg.adversary.fraction) == (7, 4, 0.3)
    cfg = cli.preset_configs("cluster")[0][1]
    assert cfg.adversary.layout == "clustered" and cfg.victim_honest_slots == 1
    assert cli.preset_configs("attack-all")[0][1].adversary.victims == "all_honest"
    assert cli.preset_configs("theory") == []


def test_preset_errors():
    with pytest.raises(ConfigError):
        cli.preset_configs("nope")
    with pytest.raises(ConfigError):
        cli.preset_configs("uniformity", {"k": 8})
    err = io.StringIO()
    assert cli.run_preset("nope", out=io.StringIO(), err=err) == 2
    assert "unknown preset" in err.getvalue()


def test_run_preset_writes_artifacts(tmp_path):
    out = io.StringIO()
    code = cli.run_preset("attack-single", {"n": 128, "epochs": 4, "f": 0.3}, str(tmp_path), out=out,
                          err=io.StringIO())
    assert code == 0
    summary = json.load(open(tmp_path / "summary.json"))
    assert summary["preset"] == "attack-single" and len(summary["runs"]) == 3
    for tag in ("honeybee_f0.3", "kademlia_f0.3", "gossipsub_f0.3"):
        assert set(os.listdir(tmp_path / tag)) == {"config.json", "metrics.csv", "summary.json", "events.jsonl"}
    assert len(out.getvalue().splitlines()) == 3


def test_theory_preset(tmp_path, monkeypatch):
    quick = theory.theory_checks
    monkeypatch.setattr(theory, "theory_checks", lambda seed: quick(seed, scale=0.02))
    code = cli.run_preset("theory", {"seed": 1}, str(tmp_path), out=io.StringIO(), err=io.StringIO())
    assert code == 0
    lines = open(tmp_path / "theory.csv").read().splitlines()
    assert lines[0] == ",".join(theory.TABLE_FIELDS) and len(lines) > 5
    assert json.load(open(tmp_path / "summary.json"))["passed"] is True


def test_config_file_run(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"n": 128, "horizon_epochs": 3, "adversary": {"fraction": 0.1}}))
    code = cli.main(["--config", str(path), "--protocol", "gossipsub", "--out", str(tmp_path / "o")])
    assert code == 0
    cfg = json.load(open(tmp_path / "o" / "run" / "config.json"))
    assert cfg["protocol"] == "gossipsub" and cfg["horizon_epochs"] == 3


def test_config_file_errors(tmp_path, capsys):
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 2
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"k": 7}))
    assert cli.main(["--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "k:" in capsys.readouterr().err


def test_parser_rejects_both_sources():
    with pytest.raises(SystemExit):
        cli.main(["--preset", "theory", "--config", "x.json"])
    with pytest.raises(SystemExit):
        cli.main([])


def test_large_n_warning():
    err = io.StringIO()
    cli._warn_scale([ExperimentConfig(n=16384)], err)
    assert "warning" in err.getvalue()
    err = io.StringIO()
    cli._warn_scale([ExperimentConfig(n=1024)], err)
    assert err.getvalue() == ""
