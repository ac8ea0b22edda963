import json
import subprocess
import sys

import numpy as np
import pytest

from charwave.cli import dispatch, parse_config
from charwave.errors import ConfigInvalid

from conftest import CONFIGS, load_config


def write(tmp_path, name, raw):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def test_parse_minimal(tmp_path):
    raw = {"potential": {"pieces": [{"x0": 0.0, "x1": None, "kind": "const", "value": 1.0}]},
           "nonlinearity": {"kind": "cubic", "gamma": 1.0},
           "initial": {"u1": {"kind": "bump", "center": 2.0, "halfwidth": 1.0}}, "T": 1.0}
    _, cfg = parse_config(write(tmp_path, "c.json", raw))
    assert cfg.dz == 1e-3 and cfg.tol == 1e-10


def test_parse_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{ nope")
    with pytest.raises(ConfigInvalid, match="line 1"):
        parse_config(str(p))


def test_missing_gamma_exit_2(tmp_path, capsys):
    out = tmp_path / "o"
    code = dispatch(["solve", "--config", str(CONFIGS / "missing_gamma.json"), "--out", str(out)])
    assert code == 2
    assert "nonlinearity.gamma" in capsys.readouterr().err
    m = manifest(out)
    assert m["status"] == "error" and m["exit_code"] == 2


def test_decreasing_exit_3(tmp_path):
    _, cfg = parse_config(str(CONFIGS / "decreasing.json"))
    assert cfg.nonlinearity.direction == "decreasing"
    out = tmp_path / "o"
    assert dispatch(["solve", "--config", str(CONFIGS / "decreasing.json"), "--out", str(out)]) == 3
    assert manifest(out)["exit_code"] == 3


def test_solve_outputs(tmp_path):
    cfg = write(tmp_path, "c.json", load_config("step_cubic.json", T=2.0, dz=0.004,
                                                output={"snapshot_times": [1.0]}))
    out = tmp_path / "run"
    assert dispatch(["solve", "--config", cfg, "--out", str(out)]) == 0
    head = (out / "trace.csv").read_text().splitlines()[0].split(",")
    assert head == ["t", "b", "d", "u_t0", "E", "M"]
    tr = np.loadtxt(out / "trace.csv", delimiter=",", skiprows=1)
    assert np.all(np.diff(tr[:, 0]) > 0)
    assert tr[-1, 0] == pytest.approx(2.0)
    assert (out / "snapshot_1.000000.csv").exists()
    m = manifest(out)
    assert m["status"] == "ok" and "trace.csv" in m["files"] and len(m["config_hash"]) == 64
    meta = json.loads((out / "meta.json").read_text())
    assert meta["grid"]["steps"] == 500


def test_determinism(tmp_path):
    cfg = write(tmp_path, "c.json", load_config("step_cubic.json", T=1.0, dz=0.004))
    bodies = []
    for name in ("a", "b"):
        dispatch(["solve", "--config", cfg, "--out", str(tmp_path / name)])
        bodies.append((tmp_path / name / "trace.csv").read_bytes())
    assert bodies[0] == bodies[1]
    assert manifest(tmp_path / "a")["config_hash"] == manifest(tmp_path / "b")["config_hash"]


def test_csv_format(tmp_path):
    cfg = write(tmp_path, "c.json", load_config("step_cubic.json", T=0.1, dz=0.004))
    dispatch(["solve", "--config", cfg, "--out", str(tmp_path / "r")])
    row = (tmp_path / "r" / "trace.csv").read_text().splitlines()[2].split(",")
    mant = row[0].split("e")[0].lstrip("-")
    assert len(mant.replace(".", "")) == 17


def test_diag(tmp_path):
    cfg = write(tmp_path, "c.json", load_config("const_cubic.json", dz=0.002))
    rec = tmp_path / "run"
    dispatch(["solve", "--config", cfg, "--out", str(rec)])
    assert dispatch(["diag", "--record", str(rec), "--weak", "--conservation", "--bank", "6"]) == 0
    diag = json.loads((rec / "diag.json").read_text())
    assert diag["weak_residual_max"] <= 1e-6
    assert diag["energy_drift"] <= 1e-3
    assert (rec / "weak.csv").exists() and (rec / "conservation.csv").exists()


def test_demo(tmp_path):
    out = tmp_path / "demo"
    assert dispatch(["demo-nonuniqueness", "--out", str(out)]) == 0
    lines = (out / "report.csv").read_text().splitlines()[1:]
    passing = [l.split(",")[0] for l in lines if l.endswith(",1")]
    assert len(set(passing)) >= 3
    rep = json.loads((out / "demo.json").read_text())
    assert rep["solver_exit_code"] == 3


def test_converge(tmp_path):
    cfg = write(tmp_path, "c.json", load_config("const_cubic.json", T=4.0, dz=0.01))
    out = tmp_path / "conv"
    assert dispatch(["converge", "--config", cfg, "--out", str(out), "--rungs", "3"]) == 0
    rows = np.loadtxt(out / "orders.csv", delimiter=",", skiprows=1)
    assert rows.shape == (2, 3)
    assert rows[-1, 2] >= 1.5


def test_breather_command(tmp_path):
    out = tmp_path / "br"
    code = dispatch(["breather", "--a", "1", "--b", str(25 / 9), "--theta", "0.25", "--omega", "1",
                     "--N", "9", "--out", str(out)])
    assert code == 0
    modes = np.loadtxt(out / "modes.csv", delimiter=",", skiprows=1)
    assert np.allclose(modes[:, 3], 9 / 25, atol=1e-10)
    coeffs = np.loadtxt(out / "coeffs.csv", delimiter=",", skiprows=1)
    assert np.max(coeffs[:, 3]) <= 1e-10


def test_breather_resonance_exit_2(tmp_path):
    out = tmp_path / "br"
    code = dispatch(["breather", "--a", "1", "--b", "4", "--theta", "0.5", "--omega", "1", "--out", str(out)])
    assert code == 2
    assert manifest(out)["status"] == "error"


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "charwave.cli", "solve", "--config",
                        str(CONFIGS / "decreasing.json"), "--out", str(tmp_path / "x")],
                       capture_output=True, text=True)
    assert r.returncode == 3
    assert "decreasing" in r.stderr
