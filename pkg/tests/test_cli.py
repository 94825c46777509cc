import json
import os
import subprocess
import sys

import pytest

from calderonlab import cli


def _report(path):
    rep = json.loads(path.read_text())
    rep.pop("metadata")
    return rep


def test_solve_exits_zero(tmp_path, capsys):
    assert cli.main(["solve", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "solve.json").read_text())
    assert rep["pass"] is True
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["error"] is None
    assert set(rep) == {"schema_version", "subcommand", "config_sha256", "seed", "resolution_scale", "config",
                        "results", "error", "pass", "metadata"}
    assert "solve: PASS" in capsys.readouterr().out


def test_reports_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert cli.main(["solve", "--out", str(d), "--seed", "7"]) == 0
    assert _report(a / "solve.json") == _report(b / "solve.json")
    text = [(d / "solve.json").read_text().split('"metadata"')[0] for d in (a, b)]
    assert text[0] == text[1]


def test_zero_phantom_reconstruct(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"phantom": {"type": "zero"}, "k_max": 4, "n_per_axis": 6,
                               "grid": {"lo": [-2, -1], "hi": [0, 1], "shape": [6, 6]}}))
    assert cli.main(["reconstruct", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "reconstruct.json").read_text())["results"]
    assert res["max_abs_estimate"] == 0.0
    assert (tmp_path / "reconstruct_grid.csv").exists()


@pytest.mark.parametrize("sub,override,field", [
    ("cgo-decay", {"h_list": [0.15, 0.25, 0.4]}, "h_list"),
    ("solve", {"bogus": 1}, "bogus"),
    ("solve", {"subcommand": "runge"}, "subcommand"),
])
def test_bad_config_exits_two(tmp_path, capsys, sub, override, field):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(override))
    assert cli.main([sub, "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert field in capsys.readouterr().err
    assert not (tmp_path / f"{sub}.json").exists()


def test_bad_resolution_scale(tmp_path):
    assert cli.main(["solve", "--resolution-scale", "0", "--out", str(tmp_path)]) == 2


def test_float_formatting():
    assert cli.dumps(0.1) == "0.10000000000000001"
    assert cli.dumps(3.0) == "3.0"
    assert cli.dumps(1e300) == "1.0000000000000001e+300"
    assert cli.dumps(float("inf")) == '"inf"'
    assert cli.dumps(float("-inf")) == '"-inf"'
    assert cli.dumps(float("nan")) == '"nan"'
    assert json.loads(cli.dumps({"z": 1 + 2j})) == {"z": {"re": 1.0, "im": 2.0}}


def test_config_hash_ignores_key_order():
    assert cli.config_hash({"a": 1, "b": [1.5, 2]}) == cli.config_hash({"b": [1.5, 2], "a": 1})
    assert cli.config_hash({"a": 1}) != cli.config_hash({"a": 2})


def test_thread_cap_is_exported():
    env = dict(os.environ, CALDERONLAB_THREADS="1")
    env.pop("OMP_NUM_THREADS", None)
    out = subprocess.run(
        [sys.executable, "-c", "import os, calderonlab.cli; print(os.environ['OMP_NUM_THREADS'])"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "1"
