import csv
import json

import pytest
import yaml

from cfsched.cli import main
from cfsched.config import ConfigError, config_from_dict, desk_config, load_config

TINY = {
    "preset": "desk",
    "layout": {"rrh_per_cell": 1, "antennas_per_rrh": 2, "user_density": 15.0},
    "slots": 4,
    "window": 2,
    "realizations": 2,
}


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    cfg = load_config(path)
    lay = cfg.layout
    assert (lay.num_cells, lay.rrh_per_cell, lay.antennas_per_rrh, lay.user_density) == (7, 10, 8, 200.0)
    assert (cfg.power_dbm, cfg.tau_d, cfg.eta) == (30.0, 200, 0.2)
    assert cfg.power_w == pytest.approx(1.0)
    assert cfg.epsilon_w == pytest.approx(0.1125)


def test_invalid_values_rejected():
    with pytest.raises(ConfigError, match="tau_p"):
        config_from_dict({"tau_p": 300})
    with pytest.raises(ConfigError, match="layout.bogus"):
        config_from_dict({"layout": {"bogus": 1}})
    with pytest.raises(ConfigError, match="speed"):
        config_from_dict({"speed": 3})
    with pytest.raises(ConfigError):
        config_from_dict({"mode": "ideal"})
    with pytest.raises(ConfigError):
        config_from_dict({"scheme": "mmse"})
    with pytest.raises(ConfigError):
        config_from_dict({"window": 500})


def test_round_trip():
    cfg = desk_config(mode="PI", seed=9, epsilon=0.05)
    assert config_from_dict(cfg.to_dict()) == cfg
    again = yaml.safe_load(yaml.safe_dump(cfg.to_dict()))
    assert config_from_dict(again) == cfg


def _body(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# cfsched ")
    return lines[1:]


def _write_cfg(tmp_path, **extra):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump({**TINY, **extra}))
    return str(path)


def test_campaign_outputs_deterministic(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    for name in ("a", "b"):
        assert main(["campaign", "--config", cfg, "--scheme", "proposed", "--mode", "PEAR",
                     "--out", str(tmp_path / name)]) == 0
    assert _body(tmp_path / "a" / "slots.csv") == _body(tmp_path / "b" / "slots.csv")
    digest = capsys.readouterr().out.strip().splitlines()
    assert len(digest) == 2 and digest[0] == digest[1]
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["config"]["mode"] == "PEAR"
    assert config_from_dict(summary["config"]) == config_from_dict({**TINY, "mode": "PEAR",
                                                                    "out_dir": str(tmp_path / "a")})


def test_trace_objective_non_decreasing(tmp_path):
    assert main(["trace", "--preset", "desk", "--mode", "PI", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "trace.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    obj = [float(r["objective"]) for r in rows if r["rrh"] == "0"]
    assert len(obj) > 10
    assert all(b - a >= -1e-9 for a, b in zip(obj, obj[1:]))
    assert max(float(r["power"]) for r in rows) <= 1.0 * (1 + 1e-6)


def test_out_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CFSCHED_OUT", str(tmp_path / "env"))
    assert main(["campaign", "--config", _write_cfg(tmp_path), "--scheme", "ZF-RR"]) == 0
    assert (tmp_path / "env" / "slots.csv").exists()
    # an explicit flag wins over the environment
    assert main(["campaign", "--config", _write_cfg(tmp_path), "--scheme", "ZF-RR",
                 "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "summary.json").exists()


def test_sweep_tau_p_reuse_column(tmp_path):
    cfg = _write_cfg(tmp_path, layout={"rrh_per_cell": 1, "antennas_per_rrh": 2, "user_density": 200.0},
                     slots=1, window=1, realizations=1)
    assert main(["sweep", "--config", cfg, "--over", "tau_p", "--scheme", "ZF-RR", "--mode", "PI",
                 "--out", str(tmp_path)]) == 0
    with open(tmp_path / "sweep.csv") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    assert [r["tau_p"] for r in rows] == ["16", "32", "64"]
    assert [float(r["xi_p"]) for r in rows] == [0.08, 0.16, 0.32]


def test_sweep_schemes_table(tmp_path, capsys):
    assert main(["sweep", "--config", _write_cfg(tmp_path), "--over", "scheme", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    for name in ("proposed", "ZF-optSched", "ZF-RR", "conjugate-RR"):
        assert name in out


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("tau_p: 300\n")
    assert main(["campaign", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "tau_p" in capsys.readouterr().err
    assert main(["campaign", "--config", str(tmp_path / "missing.yaml")]) == 2
    with pytest.raises(SystemExit):
        main(["explode"])
