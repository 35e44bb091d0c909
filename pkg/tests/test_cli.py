import json
import math
from pathlib import Path

import numpy as np
import pytest

from rodjunction.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
EYE = np.eye(3).tolist()


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def pair_config(**extra):
    cfg = {
        "version": 1,
        "rods": [
            {"length": 1.0, "frame": {"quaternion": [1, 0, 0, 0]}, "stiffness": {"H": EYE},
             "loads": {"end_force": [1.0, 0.0, 0.2]}},
            {"length": 1.0, "frame": {"tangent": [-1, 0, 0], "axis2": [0, -1, 0]}, "stiffness": {"H": EYE},
             "loads": {"end_force": [-1.0, 0.0, -0.2]}},
        ],
        "solver": {"segments": 16},
    }
    cfg.update(extra)
    return cfg


def test_zero_load_straight(tmp_path):
    cfg = pair_config()
    for r in cfg["rods"]:
        r["loads"] = {}
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 0
    rows = np.loadtxt(tmp_path / "o" / "rod_0.csv", delimiter=",", skiprows=1)
    assert np.allclose(rows[:, 1], rows[:, 0] - 1.0, atol=1e-15)
    assert np.all(rows[:, 2:4] == 0.0)
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["iterations"] == 0 and rep["converged"]


def test_unbalanced_exit_3(tmp_path, capsys):
    cfg = pair_config()
    cfg["rods"] = cfg["rods"][:1]
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert "sum_i p_i(0) = 0" in capsys.readouterr().err
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o"), "--allow-unbalanced"]) in (0, 2)


def test_plot_data(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", "--config", write(tmp_path, pair_config()), "--out", str(out), "--emit-plot-data"]) == 0
    lines = (out / "plot_data.csv").read_text().splitlines()
    assert lines[0] == "rod,x1,quantity,value"
    assert len(lines) == 1 + 2 * 17 * 16
    assert {l.split(",")[2] for l in lines[1:]} >= {"y1", "qw", "m3"}


def test_section_circle(capsys):
    assert main(["section", "--config", str(CONFIGS / "circle_section.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert np.allclose(doc["H"], np.eye(3) * math.pi / 2, rtol=1e-2, atol=1e-6)
    assert doc["mesh"]["triangles"] > 0
    assert doc["normalization"] == {"centroid": [0.0, 0.0], "rotation_angle": 0.0}


def test_verify_round_trip(tmp_path, capsys):
    cfg = write(tmp_path, pair_config())
    out = tmp_path / "o"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["verify", "--config", cfg, "--solution", str(out)]) == 0
    verified = json.loads(capsys.readouterr().out)
    written = json.loads((out / "report.json").read_text())
    assert verified["residuals"] == written["residuals"]
    assert verified["energy"] == written["energy"]


def test_determinism_and_threads(tmp_path):
    cfg = write(tmp_path, json.loads((CONFIGS / "tee_star.json").read_text()))
    runs = []
    for name, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / name
        assert main(["solve", "--config", cfg, "--out", str(out), "--seed", "7", "--init", "perturbed:1e-3", "--threads", threads]) == 0
        runs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert runs[0] == runs[1] == runs[2]


def test_config_round_trip(tmp_path):
    cfg = write(tmp_path, pair_config())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", cfg, "--out", str(a), "--init", "perturbed:0.01", "--seed", "3"]) == 0
    assert main(["solve", "--config", str(a / "config.normalized.json"), "--out", str(b)]) == 0
    for p in a.iterdir():
        assert (b / p.name).read_bytes() == p.read_bytes(), p.name


def test_section_config_round_trip(tmp_path):
    cfg = json.loads((CONFIGS / "unloaded_pair.json").read_text())
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(a)]) == 0
    assert (a / "sections.json").exists()
    assert main(["solve", "--config", str(a / "config.normalized.json"), "--out", str(b)]) == 0
    assert (a / "rod_1.csv").read_bytes() == (b / "rod_1.csv").read_bytes()


def test_nonconvergence_exit_2(tmp_path):
    cfg = pair_config(solver={"segments": 16, "max_iter": 1, "init": "perturbed", "amplitude": 0.5})
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize(
    "mutate,needle",
    [
        (lambda c: c.update(version=2), "version"),
        (lambda c: c["rods"][1].update(frame={"matrix": np.diag([1.0, 1.0, -1.0]).tolist()}), "rods[1].frame"),
        (lambda c: c["rods"][0].update(length=-1), "rods[0].length"),
        (lambda c: c["rods"][0].update(stiffness={"H": [[1, 2, 0], [2, 1, 0], [0, 0, 1]]}), "rods[0].stiffness"),
        (lambda c: c.update(solver={"bogus": 1}), "solver"),
    ],
)
def test_validation_errors_exit_3(tmp_path, capsys, mutate, needle):
    cfg = pair_config()
    mutate(cfg)
    assert main(["solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 3
    assert needle in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["solve", "--config", write(tmp_path, pair_config()), "--init", "wobbly"]) == 1


def test_linref_hidden(tmp_path, capsys):
    cfg = {"version": 1, "rods": []}
    star = []
    for k in range(3):
        a = 2 * math.pi * k / 3
        t = [math.cos(a), math.sin(a), 0.0]
        star.append({"length": 1.0, "frame": {"tangent": t, "axis2": [-t[1], t[0], 0]}, "stiffness": {"H": EYE},
                     "loads": {"end_force": [0.01 * t[0], 0.01 * t[1], 0.0]}})
    cfg["rods"] = star
    assert main(["linref", "--config", write(tmp_path, cfg), "--segments", "10"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "rod,x1,y1,y2,y3,w1,w2,w3" and len(out) == 1 + 3 * 11
    main_help = __import__("rodjunction.cli", fromlist=["build_parser"]).build_parser().format_help()
    assert "linref" not in main_help
