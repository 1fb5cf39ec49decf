import csv
import io

import numpy as np
import pytest

from rdct.solvers import eq6_residual
from rdct.synth import (CSV_FIELDS, SceneConfig, add_noise, generate_scene, rows_to_csv, run_sensitivity_study,
                        run_stability_study, summarize, time_solvers, trial_rng, worker_count)


def test_config_validation():
    with pytest.raises(ValueError):
        SceneConfig(lambda_range=(0.0, -1.0))
    with pytest.raises(ValueError):
        SceneConfig(n_trials=0)
    with pytest.raises(ValueError):
        SceneConfig(frames_per_cluster=(1, 3))
    with pytest.raises(ValueError):
        SceneConfig(noise_sigmas=(-1.0,))


def test_lambda_draws_stay_in_range():
    lams = [generate_scene(SceneConfig(), trial_rng(5, t)).truth.lam for t in range(300)]
    assert -6.0 <= min(lams) and max(lams) <= 0.0
    assert min(lams) < -5.5 and max(lams) > -0.5


def test_framing_property():
    cfg = SceneConfig()
    for t in range(50):
        s = generate_scene(cfg, trial_rng(6, t))
        need = cfg.min_in_frame * (0.75 if s.framing_loosened else 1.0)
        assert s.truth.visible(s.grid.points).mean() >= need
        for cl in s.noiseless_clusters:
            for f in cl.frames:
                px = np.asarray(f)
                assert np.all((px >= 0) & (px <= 1000))


def _truth_direction(scene, t):
    P = scene.truth.P
    lraw = np.linalg.inv(P).T @ np.array([0.0, 0.0, 1.0])
    return lraw / lraw[2], lraw[2] * (P @ np.array([t[0], t[1], 0.0]))


def test_noiseless_pairs_satisfy_the_model_exactly():
    scene = generate_scene(SceneConfig(), trial_rng(7, 0))
    lam = scene.truth.lam
    worst = 0.0
    for c, i, j in scene.pairs():
        l, u = _truth_direction(scene, scene.translation(c, i, j))
        for corr in scene.correspondences(c, i, j, noiseless=True):
            worst = max(worst, eq6_residual(corr.src, corr.dst, lam, l, u))
    assert worst < 1e-10


def test_noise_level_matches_sigma():
    scene = generate_scene(SceneConfig(), trial_rng(8, 0))
    base = np.concatenate([np.ravel(f) for cl in scene.noiseless_clusters for f in cl.frames])
    diffs = []
    k = 0
    while sum(map(len, diffs)) < 100_000:
        noisy = add_noise(scene, 2.0, trial_rng(8, 100 + k))
        diffs.append(np.concatenate([np.ravel(f) for cl in noisy.clusters for f in cl.frames]) - base)
        k += 1
    assert np.std(np.concatenate(diffs)) == pytest.approx(2.0, rel=0.03)


def test_same_seed_same_scene():
    a = generate_scene(SceneConfig(sigma=1.0), trial_rng(9, 3))
    b = generate_scene(SceneConfig(sigma=1.0), trial_rng(9, 3))
    assert all(np.array_equal(x, y) for ca, cb in zip(a.clusters, b.clusters) for x, y in zip(ca.frames, cb.frames))


def test_study_csv_is_deterministic_and_independent_of_workers():
    cfg = SceneConfig(n_trials=6, seed=3)
    one = rows_to_csv(run_stability_study(cfg, workers=1))
    two = rows_to_csv(run_stability_study(cfg, workers=2))
    assert one == two
    rows = list(csv.DictReader(io.StringIO(one)))
    assert tuple(rows[0]) == CSV_FIELDS and len(rows) == 6 * 4
    assert sum(r["status"] == "ok" for r in rows) >= 22
    assert all(float(r["rms_xfer_px"]) < 1e-4 for r in rows if r["status"] == "ok")


def test_sensitivity_rows_and_quartiles():
    cfg = SceneConfig(n_trials=2, seed=4, noise_sigmas=(0.5,))
    rows = run_sensitivity_study(cfg, workers=1)
    assert {r["solver"] for r in rows} == {"H2lu", "H2.5", "H3", "H3.5", "H4"}
    assert all(r["lambda_true"] == -4.0 for r in rows)
    q = summarize(rows)
    assert all(s["q1"] <= s["median"] <= s["q3"] for s in q)


def test_timing_reports_every_solver():
    out = time_solvers(SceneConfig(n_trials=5), warmup=2)
    assert [r["solver"] for r in out] == ["H2.5", "H3", "H3.5", "H4", "H2lu"]
    assert all(np.isfinite(r["mean_ms"]) and r["mean_ms"] > 0 for r in out)


def test_thread_count_from_environment(monkeypatch):
    monkeypatch.setenv("RDCT_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("RDCT_THREADS", "zero")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv("RDCT_THREADS")
    assert worker_count() >= 1
