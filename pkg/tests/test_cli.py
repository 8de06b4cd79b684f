import json

import numpy as np
import pytest

from polarforge.cli import main
from polarforge.dataset import load_stack


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def data(tmp_path):
    assert run("simulate", "--seed", 3, "--count", 2, "--size", 32, "--rounds", 1, "--out", tmp_path / "data") == 0
    return tmp_path


def test_simulate_layout(data):
    scene = data / "data" / "scene_000003"
    for name in ("manifest.json", "pattern.json", "raw.pfm", "gt_hr/I000_r.pfm", "gt_lr/I135_b.pfm"):
        assert (scene / name).exists()
    assert (data / "data" / "scene_000004").is_dir()


def test_reconstruct_and_eval(data, capsys):
    scenes = [data / "data" / "scene_000003", data / "data" / "scene_000004"]
    assert run("reconstruct", "--manifest", *scenes, "--rounds", 1, "--out", data / "recon") == 0
    out = data / "recon" / "scene_000003"
    assert load_stack(out / "demosaic").shape == (4, 3, 16, 16)
    assert load_stack(out / "x2").shape == (4, 3, 32, 32)
    assert (out / "x2" / "derived" / "aop_g.pfm").exists()
    info = json.loads((out / "reconstruction.json").read_text())
    assert info["scales"] == ["demosaic", "x2"]

    assert run("eval", "--manifest", *scenes, "--pred", data / "recon", "--method", "pidsr",
               "--report", data / "report.json") == 0
    rep = json.loads((data / "report.json").read_text())
    assert set(rep["aggregate"]) == {"demosaic", "x2"}
    per = [next(r for r in s["reports"] if r["scale"] == "x2") for s in rep["scenes"]]
    mean = np.mean([r["metrics"]["S0"]["psnr"] for r in per])
    assert rep["aggregate"]["x2"]["metrics"]["S0"]["psnr"] == pytest.approx(mean)
    assert rep["aggregate"]["x2"]["scene_count"] == 2


def test_eval_ground_truth_is_identical(data):
    scene = data / "data" / "scene_000003"
    assert run("eval", "--manifest", scene, "--pred", scene / "gt_hr", "--report", data / "r.json") == 0
    rep = json.loads((data / "r.json").read_text())
    m = rep["aggregate"]["x2"]["metrics"]
    assert m["I0"]["identical"] and m["I0"]["psnr"] is None
    assert m["S0"]["ssim"] == pytest.approx(1.0)
    assert m["theta"]["mae_deg"] == 0.0


def test_eval_scale_mismatch(data, capsys):
    scene = data / "data" / "scene_000003"
    run("simulate", "--seed", 3, "--size", 64, "--rounds", 1, "--out", data / "big")
    code = run("eval", "--manifest", scene, "--pred", data / "big" / "scene_000003" / "gt_hr")
    assert code == 2
    assert "scale mismatch" in capsys.readouterr().err


def test_exit_codes(data, capsys):
    assert run("simulate", "--size", 130, "--rounds", 1, "--out", data / "x") == 2
    assert run("reconstruct", "--manifest", data / "missing", "--out", data / "o") == 3
    scene = data / "data" / "scene_000003"
    assert run("reconstruct", "--manifest", scene, "--method", "bilinear", "--rounds", 1,
               "--out", data / "o") == 2
    (data / "bad.json").write_text('{"rounds": 1, "bogus": true}')
    assert run("reconstruct", "--manifest", scene, "--config", data / "bad.json", "--out", data / "o") == 2
    assert "error" in capsys.readouterr().err


def test_reconstruct_from_raw(data):
    scene = data / "data" / "scene_000003"
    assert run("reconstruct", "--raw", scene / "raw.pfm", "--pattern", scene / "pattern.json",
               "--method", "sequential", "--rounds", 1, "--out", data / "r") == 0
    assert load_stack(data / "r" / "raw" / "x2").shape == (4, 3, 32, 32)


def test_reconstruct_is_deterministic(data):
    scene = data / "data" / "scene_000003"
    for name in ("a", "b"):
        assert run("reconstruct", "--manifest", scene, "--rounds", 1, "--jobs", 4, "--out", data / name) == 0
    files = sorted(p.relative_to(data / "a") for p in (data / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (data / "a" / f).read_bytes() == (data / "b" / f).read_bytes()


def test_experiment_json_and_csv(tmp_path):
    assert run("experiment", "err-gap", "--count", 4, "--size", 32,
               "--report", tmp_path / "g.json", "--csv", tmp_path / "g.csv") == 0
    rep = json.loads((tmp_path / "g.json").read_text())
    assert rep["experiment"] == "err-gap" and len(rep["per_scene"]) == 4
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "seed,kind,S0,p,theta" and len(lines) == 5
    assert run("experiment", "err-vs-res", "--sizes", 30, 64, "--report", tmp_path / "r.json") == 2
