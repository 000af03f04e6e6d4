import json

import pytest

from stochheat.cli import main
from stochheat.config import ConfigError, ExperimentConfig, acceptance_config, parse_config, validate
from stochheat.experiments import OUT_ENV, compare_ledgers, emit_report, resolve_out, run_experiment
from stochheat.ledger import LedgerSink, read_ledger

SMALL_GRID = "grid: {L: 8.0, N: 64, T: 0.05, M: 20}\n"


def test_minimal_config_uses_defaults():
    cfg, defaulted = parse_config("kind: picard\n")
    assert cfg.p == 40 and cfg.theta == 0.5 and "seed" in defaulted
    cfg, defaulted = parse_config("grid: {N: 128}\n")
    assert cfg.grid["N"] == 128 and cfg.grid["L"] == 32.0 and "grid.L" in defaulted


def test_selection_replaces_parameters():
    cfg, _ = parse_config("noise: {kind: riesz, alpha: 0.5}\n")
    assert "eta" not in cfg.noise


@pytest.mark.parametrize("text,match", [
    ("noise: {kind: white, eta: 0.75}\n", "Dalang"),
    ("theta: 3.0\n", "may not be integrable"),
    ("p: 8\ntheta: 1.0\n", "moment condition on p"),
    ("kind: nonsense\n", "unknown experiment kind"),
    ("replicas: 0\n", "positive"),
])
def test_rejections(text, match):
    cfg, _ = parse_config(text)
    with pytest.raises(ConfigError, match=match):
        validate(cfg)


def test_parse_error_location():
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        parse_config("p: 40\ngrid: [1, 2\n")
    with pytest.raises(ConfigError, match="unknown key 'bogus'.*line 2"):
        parse_config("p: 40\nbogus: 1\n")


def test_resolve_out_priority(monkeypatch, tmp_path):
    monkeypatch.delenv(OUT_ENV, raising=False)
    assert resolve_out("cfg") == resolve_out("cfg", None)
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert resolve_out("cfg") == tmp_path / "env"
    assert resolve_out("cfg", str(tmp_path / "cli")) == tmp_path / "cli"


def test_ledger_sink_formatting(tmp_path):
    sink = LedgerSink(tmp_path)
    sink.write("a.csv", [{"x": 0.1, "ok": True, "v": [1, 2]}])
    sink.plot("curve", [1, 2], [3, 4], "n", "r")
    rows = read_ledger(tmp_path / "a.csv")
    assert rows == [{"x": "0.1", "ok": "true", "v": "1 2"}]
    assert sink.files == ["a.csv", "plots/curve.csv"]
    assert compare_ledgers(tmp_path, tmp_path) == []


def test_report_errors(tmp_path, capsys):
    assert main(["report", str(tmp_path / "missing")]) == 2
    assert "no ledgers found" in capsys.readouterr().err
    with pytest.raises(FileNotFoundError):
        emit_report(tmp_path)


@pytest.mark.parametrize("kind", ["deterministic-map", "yosida", "picard"])
def test_small_runs_complete(tmp_path, kind):
    cfg, _ = parse_config(f"kind: {kind}\n{SMALL_GRID}replicas: 30\n")
    res = run_experiment(cfg, workers=1, out=tmp_path)
    assert res.status == "completed", res.error
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "completed" and manifest["seed"] == 0
    text, rows, code = emit_report(tmp_path)
    assert rows and text.splitlines()[-1].endswith(f"{len(rows)}/{len(rows)} passed")
    assert code == 0


def test_failed_run_keeps_manifest(tmp_path):
    cfg = ExperimentConfig(kind="picard", grid={"d": 1, "L": 8.0, "N": 64, "T": 0.05, "M": 20},
                           drift={"name": "no-such-drift"})
    res = run_experiment(cfg, workers=1, out=tmp_path)
    assert res.status == "failed" and not res.passed
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["status"] == "failed" and manifest["error"]


def test_cli_run_and_report(tmp_path, capsys):
    path = tmp_path / "run.yaml"
    path.write_text(f"kind: deterministic-map\n{SMALL_GRID}replicas: 30\n")
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out), "--workers", "1", "--seed", "3"]) == 0
    assert json.loads((out / "manifest.json").read_text())["seed"] == 3
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    assert "passed" in capsys.readouterr().out


def test_cli_config_error(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("theta: 3.0\n")
    assert main(["run", str(path)]) == 2
    assert "may not be integrable" in capsys.readouterr().err


def test_cli_accept_subset(tmp_path, capsys):
    assert main(["accept", "--criteria", "1,9", "--no-rerun", "--workers", "1", "--out", str(tmp_path)]) == 0
    assert "2/2 passed" in capsys.readouterr().out


def test_acceptance_config_defaults():
    cfg = acceptance_config(seed=4)
    assert cfg.kind == "full-acceptance" and cfg.seed == 4 and cfg.grid["T"] == 1.0
