import json

import pytest

from overdeck.cli import EXIT_OK, EXIT_VALIDATION, main
from overdeck.config import (
    SEED_ENV,
    config_from_dict,
    config_to_dict,
    parse_config,
    resolve_seed,
)
from overdeck.engine import ConfigError, Timeline
from overdeck.presets import PRESET_NAMES, preset
from overdeck.report import COLUMNS, render_csv, render_distribution


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_preset_round_trip(name):
    cfg = preset(name)
    assert config_from_dict(config_to_dict(cfg)).experiment == cfg


def test_preset_override():
    run = config_from_dict({"preset": "expB", "epochs": 2, "output": {"format": "json"}})
    assert run.experiment.epochs == 2 and run.output.format == "json"
    assert run.experiment.n_vps == 8


def test_custom_config_requires_core_keys():
    with pytest.raises(ConfigError, match="missing required"):
        config_from_dict({"n_vps": 4})
    doc = {
        "cluster": {"nodes": 2, "procs_per_node": 1},
        "domain": {"nx": 64, "ny": 64, "nz": 10, "fields": 2},
        "n_vps": 4, "window": {"async_steps": 1, "sync_steps": 2}, "epochs": 2,
    }
    run = config_from_dict(doc)
    assert run.experiment.name == "custom" and run.experiment.load_pattern == "uniform"


@pytest.mark.parametrize(
    "doc,fragment",
    [
        ({"preset": "expB", "bogus": 1}, "bogus"),
        ({"preset": "expB", "window": {"sync": 3}}, "window.sync"),
        ({"preset": "expB", "epochs": -1}, "epochs"),
        ({"preset": "expB", "epochs": "3"}, "epochs"),
        ({"preset": "expB", "epochs": True}, "epochs"),
        ({"preset": "expB", "load_pattern": "spiral"}, "load_pattern"),
        ({"preset": "expB", "advection": [[1]]}, "advection"),
        ({"preset": "nope"}, "preset"),
    ],
)
def test_config_rejections(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        config_from_dict(doc)


def test_parse_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "preset": "expB",\n  "epochs": ,\n}\n')
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(bad)


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(SEED_ENV, raising=False)
    assert resolve_seed(None, 5) == 5
    monkeypatch.setenv(SEED_ENV, "9")
    assert resolve_seed(None, 5) == 9
    assert resolve_seed(3, 5) == 3
    monkeypatch.setenv(SEED_ENV, "x")
    with pytest.raises(ConfigError):
        resolve_seed(None, 5)


def test_render_distribution():
    homes, classes = render_distribution(
        [v // 4 for v in range(16)], [v // 4 for v in range(16)], 4, ["H"] * 8 + ["L"] * 8
    )
    assert homes == "0000 1111 2222 3333"
    assert classes == "HHHH HHHH LLLL LLLL"
    homes, _ = render_distribution([v % 4 for v in range(16)], [v // 4 for v in range(16)], 4)
    assert homes == "0123 0123 0123 0123"


def test_empty_timeline_is_header_only():
    tl = Timeline(preset("expB"), (0,) * 8, 4, ())
    lines = render_csv(tl).decode().splitlines()
    assert lines[-1] == ",".join(COLUMNS)
    assert all(line.startswith("# ") for line in lines[:-1])


def test_cli_run_csv_deterministic(tmp_path, capsysbinary):
    assert main(["run", "--preset", "expC"]) == EXIT_OK
    first = capsysbinary.readouterr().out
    assert main(["run", "--preset", "expC"]) == EXIT_OK
    assert capsysbinary.readouterr().out == first
    text = first.decode()
    assert "0000 1111 2222 3333" in text
    assert "# name=\"expC\"" in text


def test_cli_run_with_config_and_dumps(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "preset": "expB",
        "output": {"format": "json", "directory": str(tmp_path / "out"), "dump_samples": True, "dump_plans": True},
    }))
    assert main(["run", "--config", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    report = json.loads((out / "expB.json").read_text())
    assert len(report["epochs"]) == 4
    plans = json.loads((out / "expB.plans.json").read_text())
    assert [p["strategy"] for p in plans] == ["greedy", "refine_swap"]
    samples = (out / "expB.samples.csv").read_text().splitlines()
    assert samples[0] == "epoch,vp,step,mode,seconds"
    assert len(samples) == 1 + 4 * 10 * 8


def test_cli_validation_errors(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == EXIT_VALIDATION
    cfg = tmp_path / "neg.json"
    cfg.write_text('{"preset": "expB", "epochs": -2}')
    assert main(["run", "--config", str(cfg)]) == EXIT_VALIDATION
    assert "epochs" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["run", "--preset", "nope"])
    assert exc.value.code == EXIT_VALIDATION


def test_cli_probe_and_calibrate_samples(tmp_path, capsys):
    assert main(["probe", "--m", "512", "64"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "m,cpu_s,gpu_s" and out[1].startswith("512,54.")
    samples = tmp_path / "s.csv"
    samples.write_text("work_items,serial_depth,seconds\n1000000,1,0.011\n2000000,1,0.021\n")
    assert main(["calibrate", "--samples", str(samples)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["model"]["per_item_time"] == pytest.approx(1e-8)
