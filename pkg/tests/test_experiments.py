import numpy as np

from polarforge.experiments import (complementarity, err_gap, err_vs_res, error_rates, input_quality,
                                    non_increasing, scene_suite)
from polarforge.dataset import SceneSpec, simulate_pair


def test_scene_suite_cycles():
    specs = scene_suite(5, seed=10, size=32, kinds=("gradient", "blobs"), noise=(0.0, 0.01))
    assert [s.seed for s in specs] == [10, 11, 12, 13, 14]
    assert [s.kind for s in specs] == ["gradient", "blobs"] * 2 + ["gradient"]
    assert [s.noise_sigma for s in specs] == [0.0, 0.01, 0.0, 0.01, 0.0]


def test_error_rates_zero_on_ground_truth():
    s = simulate_pair(SceneSpec(seed=1, height=16, width=16), 0)
    assert error_rates(s.gt_lr, s.gt_lr) == {"S0": 0.0, "p": 0.0, "theta": 0.0}


def test_non_increasing_rule():
    assert non_increasing([3, 2, 1])
    assert non_increasing([3, 3.1, 1])
    assert not non_increasing([3, 3.5, 1])
    assert not non_increasing([3, 3.1, 3.2])


def test_experiments_are_deterministic_across_jobs():
    specs = scene_suite(3, size=32)
    assert err_gap(specs, jobs=1) == err_gap(specs, jobs=3)
    a = input_quality(specs, 1, jobs=1)
    assert a == input_quality(specs, 1, jobs=2)
    assert set(a["mean"]) == {"demosaiced_input", "gt_input"}
    c = complementarity(specs, 1, jobs=2)
    assert len(c["per_scene"]) == 3 and c["rounds"] == 1
    r = err_vs_res(SceneSpec(seed=2), sizes=(64, 32), jobs=2)
    assert [e["size"] for e in r["entries"]] == [32, 64]
    assert all(np.isfinite(e["S0"]) for e in r["entries"])
