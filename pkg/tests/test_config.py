import json

import pytest

from bcinclusion.config import ConfigError, ExperimentConfig

DISK = {"kind": "disk", "center": [0.5, 0.5], "radius": 0.15, "contrast": 2.0}


def test_defaults():
    cfg = ExperimentConfig()
    assert cfg.seed == 42 and cfg.basis.n_bin == 120
    assert cfg.control.alpha_exponents == [1, 2, 3, 4, 5, 6]
    assert cfg.domain().shape == (65, 65)


def test_unknown_key_rejected_with_path():
    with pytest.raises(ConfigError, match=r"detect\.tol_radius"):
        ExperimentConfig.from_dict({"detect": {"tol_radius": 0.1}})
    with pytest.raises(ConfigError, match=r"speed\.inclusions\.0\.disk\.colour"):
        ExperimentConfig.from_dict({"speed": {"inclusions": [dict(DISK, colour=1)]}})


def test_bad_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="invalid JSON"):
        ExperimentConfig.from_json("{")
    with pytest.raises(ConfigError, match="top level"):
        ExperimentConfig.from_json("[1]")
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.load(tmp_path / "none.json")


def test_roundtrip():
    cfg = ExperimentConfig.from_dict({"speed": {"inclusions": [DISK]}, "grid": {"nx": 32, "ny": 32}})
    again = ExperimentConfig.from_json(cfg.to_json())
    assert again == cfg
    assert json.loads(cfg.to_json())["speed"]["inclusions"][0]["kind"] == "disk"


def test_square_cells_and_schedules():
    with pytest.raises(ConfigError, match="square"):
        ExperimentConfig.from_dict({"grid": {"nx": 32, "ny": 16}})
    ExperimentConfig.from_dict({"grid": {"nx": 64, "ny": 32, "Lx": 2.0}})
    with pytest.raises(ConfigError, match="at least 3"):
        ExperimentConfig.from_dict({"control": {"alpha_exponents": [1, 2]}})
    with pytest.raises(ConfigError, match="decreasing"):
        ExperimentConfig.from_dict({"control": {"alphas": [1.0, 2.0, 0.5]}})
    with pytest.raises(ConfigError, match="boundary point"):
        ExperimentConfig.from_dict({"volumes": {"taus": [{"kind": "cone", "values": [0.1]}]}})


def test_check_for():
    cfg = ExperimentConfig()
    cfg.check_for("forward")
    with pytest.raises(ConfigError, match="at least one inclusion"):
        cfg.check_for("locate")
    weak = ExperimentConfig.from_dict({"speed": {"inclusions": [dict(DISK, contrast=0.5)]}})
    with pytest.raises(ConfigError, match="must exceed 1"):
        weak.check_for("hull")
    short = ExperimentConfig.from_dict({"speed": {"inclusions": [DISK]}, "time": {"T": 0.5}})
    with pytest.raises(ConfigError, match="time.T"):
        short.check_for("locate")
    ubg = ExperimentConfig.from_dict({"speed": {"inclusions": [DISK]},
                                      "detect": {"method": "unknown_bg", "eps_list": [0.01, 0.02]}})
    with pytest.raises(ConfigError, match="insufficient epsilon") as exc:
        ubg.check_for("locate")
    assert "oracle volumes" in str(exc.value)


def test_with_io_overrides_only_given_fields():
    cfg = ExperimentConfig().with_io(out="x", store=None)
    assert cfg.io.out == "x" and cfg.io.store is None
