import json

import numpy as np

from bcinclusion import cli
from bcinclusion.forward import NumericalFailure
from bcinclusion.io import read_csv, read_pgm
from bcinclusion.selftest import Check

DISK = {"kind": "disk", "center": [0.5, 0.5], "radius": 0.15, "contrast": 2.0}


def _config(tmp_path, **sections):
    base = {"grid": {"nx": 32, "ny": 32}, "speed": {"inclusions": [DISK]},
            "time": {"T": 0.8}, "basis": {"n_patch": 8, "n_bin": 16}}
    base.update(sections)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(base))
    return path


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"grid": {"nx": 32, "nz": 1}}')
    assert cli.main(["forward", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "grid.nz" in capsys.readouterr().err
    assert cli.main(["forward", "--config", str(tmp_path / "missing.json")]) == 2
    empty = tmp_path / "empty.json"
    empty.write_text("{}")
    assert cli.main(["locate", "--config", str(empty), "--out", str(tmp_path)]) == 2


def test_oracle_outputs_are_bit_identical(tmp_path):
    cfg = _config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["oracle", "--config", str(cfg), "--out", str(a)]) == 0
    assert cli.main(["oracle", "--config", str(cfg), "--out", str(b)]) == 0
    for name in ("oracle_volumes.csv", "hull_exact.pgm", "segments_exact.csv", "oracle.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    summary = json.loads((a / "oracle.json").read_text())
    assert summary["hull"]["contains_sigma"]
    assert len(read_csv(a / "oracle_volumes.csv")) == 4


def test_forward_store_then_volumes_load(tmp_path):
    cfg = _config(tmp_path)
    store = tmp_path / "lam" / "lambda.json"
    assert cli.main(["forward", "--config", str(cfg), "--out", str(tmp_path / "f"), "--store", str(store)]) == 0
    fwd = json.loads((tmp_path / "f" / "forward.json").read_text())
    assert fwd["K_asymmetry"] < 1e-10 and len(fwd["alphas"]) == 6
    assert len(read_csv(tmp_path / "f" / "traces.csv")) == fwd["time"]["nt"]
    assert cli.main(["volumes", "--config", str(cfg), "--out", str(tmp_path / "v"), "--load", str(store)]) == 0
    assert len(read_csv(tmp_path / "v" / "volumes.csv")) == 4
    # loading reproduces the simulated operator exactly
    assert cli.main(["volumes", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "v" / "volumes.csv").read_bytes() == (tmp_path / "s" / "volumes.csv").read_bytes()
    # a stored operator for another speed model is refused
    other = _config(tmp_path, speed={"inclusions": [dict(DISK, contrast=3.0)]})
    assert cli.main(["volumes", "--config", str(other), "--out", str(tmp_path / "w"), "--load", str(store)]) == 2


def test_locate_and_hull_with_oracle_volumes(tmp_path):
    cfg = _config(tmp_path, detect={"volumes": "oracle", "n_samples": 32, "tol_r": 0.01}, time={"T": 1.0})
    assert cli.main(["hull", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "profile.csv")
    assert len(rows) == 32 and not any(r["flag"] for r in rows)
    assert max(abs(float(r["error"])) for r in rows) <= 3 / 32
    hull = read_pgm(tmp_path / "hull.pgm")
    assert np.all(hull[read_pgm(tmp_path / "sigma.pgm")])


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    def boom(cfg, out):
        raise NumericalFailure("non-finite wave field")

    monkeypatch.setitem(cli.HANDLERS, "forward", boom)
    assert cli.main(["forward", "--config", str(_config(tmp_path)), "--out", str(tmp_path)]) == 3


def test_selftest_exit_codes(tmp_path, monkeypatch, capsys):
    cfg = _config(tmp_path)
    for passed, code in ((True, 0), (False, 4)):
        monkeypatch.setattr(cli, "run_selftest",
                            lambda seed, passed=passed: [Check(1, "stub", passed, {"x": 1.0}, {"x": 2.0})])
        assert cli.main(["selftest", "--config", str(cfg), "--out", str(tmp_path)]) == code
        assert "criterion 1: stub" in capsys.readouterr().out
