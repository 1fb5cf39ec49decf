import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdct.errors import Degenerate
from rdct.metrics import (GridTessellation, relative_lambda_error, transfer_error, transfer_residuals, warp_error,
                          warp_fit)
from rdct.solvers import run_solver
from rdct.synth import SceneConfig, best_by_transfer, generate_scene, minimal_instance, trial_rng


def _scene(seed, **kw):
    from dataclasses import replace

    return generate_scene(replace(SceneConfig(), **kw), trial_rng(seed, 0))


@settings(max_examples=25)
@given(st.integers(0, 10_000))
def test_errors_vanish_at_ground_truth(seed):
    scene = _scene(seed)
    assert warp_error(scene.truth.line, scene.truth.lam, scene.truth, scene.grid) < 1e-8
    inst = minimal_instance(scene, "H2.5", trial_rng(seed, 1))
    best, err = best_by_transfer(run_solver("H2.5", inst.corrs), scene, inst.translations)
    assert err < 1e-8


def test_ignoring_distortion_gives_large_warp_error():
    scene = _scene(40, lam=-4.0)
    assert warp_error(scene.truth.line, 0.0, scene.truth, scene.grid) > 5.0


def test_wrong_line_gives_warp_error():
    scene = _scene(41, lam=-2.0)
    l = scene.truth.line.vector + np.array([0.05, -0.05, 0.0])
    res = warp_fit(l, scene.truth.lam, scene.truth, scene.grid)
    assert res.rms > 0.1 and res.n_points >= 10


def test_affine_ambiguity_is_absorbed():
    # any line gives the same rectification up to an affinity when it equals the truth up to scale
    scene = _scene(42)
    assert warp_error(3.0 * scene.truth.line.vector, scene.truth.lam, scene.truth, scene.grid) < 1e-8


def test_transfer_error_grows_with_wrong_lambda():
    scene = _scene(43)
    inst = minimal_instance(scene, "H2.5", trial_rng(43, 1))
    best, err = best_by_transfer(run_solver("H2.5", inst.corrs), scene, inst.translations)
    off = best.with_params(best.line, best.lam + 0.5, best.directions, 0.0)
    assert transfer_error(off, scene.truth, inst.translations, scene.grid) > 1.0 > err
    res = transfer_residuals(best, scene.truth, inst.translations, scene.grid)
    assert len(res) == 1 and np.nanmax(res[0]) < 1e-8
    with pytest.raises(ValueError):
        transfer_error(best, scene.truth, inst.translations * 2, scene.grid)


def test_grid():
    g = GridTessellation.square(4, 2.0)
    assert g.points.shape == (16, 2) and np.allclose(g.points.mean(axis=0), 0)
    t = g.translated([3.0, 4.0])
    assert np.allclose(t.translated_points - t.points, [1.2, 1.6])
    with pytest.raises(Degenerate):
        g.translated([0.0, 0.0])


def test_relative_lambda_error():
    assert relative_lambda_error(-3.0, -4.0) == pytest.approx(0.25)
    assert relative_lambda_error(0.1, 0.0) == pytest.approx(0.1)
