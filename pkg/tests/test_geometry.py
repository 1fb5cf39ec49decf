import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rdct.errors import Degenerate, NoRealRoot, PointAtInfinity
from rdct.geometry import (ConjugateTranslation, DivisionModel, Gauge, NormalizationFrame, VanishingLine,
                           apply_conjugate_translation, distort, rectifying_homography, undistort)

coord = st.floats(-0.5, 0.5, allow_nan=False)
lams = st.floats(-8.0, 1.0, allow_nan=False)


@given(coord, coord, lams)
def test_distort_undistort_round_trip(x, y, lam):
    p = np.array([[x, y]])
    assume(1 + lam * (x * x + y * y) > 1e-3)
    back = distort(undistort(p, lam), lam)[0, :2]
    assert np.allclose(back, p[0], atol=1e-9, rtol=0)


def test_points_beyond_the_fold_map_to_the_principal_branch():
    p = np.array([[0.0, 0.5]])
    back = distort(undistort(p, -5.0), -5.0)
    assert np.allclose(back[0, :2], [0.0, -0.4])
    assert 1 - 5.0 * 0.16 > 0


@given(coord, coord, lams)
def test_undistort_changes_only_w(x, y, lam):
    u = undistort(np.array([x, y]), lam)
    assert u[0] == x and u[1] == y
    assert u[2] == pytest.approx(1 + lam * (x * x + y * y), abs=1e-15)


def test_zero_lambda_is_identity():
    p = np.array([[0.1, -0.2], [0.3, 0.4]])
    assert np.array_equal(distort(undistort(p, 0.0), 0.0)[:, :2], p)


def test_distort_errors():
    with pytest.raises(PointAtInfinity):
        distort(np.array([1.0, 0.0, 0.0]), -1.0)
    with pytest.raises(NoRealRoot):
        distort(np.array([1.0, 0.0, 1.0]), 1.0)
    assert np.all(np.isnan(distort(np.array([1.0, 0.0, 1.0]), 1.0, strict=False)[:2]))


def test_division_model_wrapper():
    m = DivisionModel(-2.0)
    p = np.array([0.2, 0.1])
    assert np.allclose(m.distort(m.undistort(p))[:2], p)


def test_vanishing_line_gauge():
    l = VanishingLine.from_vector([2.0, 4.0, 2.0])
    assert l.gauge is Gauge.L3_EQ_1 and np.allclose(l.vector, [1, 2, 1])
    l2 = VanishingLine.from_vector([1.0, 2.0, 0.0])
    assert l2.gauge is Gauge.L2_EQ_1 and np.allclose(l2.vector, [0.5, 1, 0])
    with pytest.raises(ValueError):
        VanishingLine(1.0, 2.0, 3.0)
    with pytest.raises(Degenerate):
        VanishingLine.from_vector([0, 0, 0])


def test_conjugate_translation_requires_incidence():
    l = VanishingLine(0.1, 0.2, 1.0)
    with pytest.raises(ValueError):
        ConjugateTranslation(l, [1.0, 1.0, 1.0])
    u = np.array([2.0, -1.0, 0.0])
    ct = ConjugateTranslation(l, u, (1.0, 2.0))
    H2 = ct.matrix(1)
    assert np.allclose(H2, ct.matrix(0) @ ct.matrix(0))
    p = apply_conjugate_translation(ct, 0, [0.3, 0.2])
    assert np.allclose(np.cross(p, [0.3, 0.2, 1.0]) @ u, 0.0)


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_rectifying_homography_sends_line_to_infinity(a, b):
    l = np.array([a, b, 1.0])
    H = rectifying_homography(l)
    assert abs(np.linalg.det(H)) > 0
    # points on l map to w = 0
    p = np.cross(l, [0.3, -0.7, 1.0])
    assert abs((H @ p)[2]) <= 1e-12 * np.linalg.norm(p) * np.linalg.norm(l)


def test_normalization_frame():
    f = NormalizationFrame(1000, 500)
    assert f.center == (500.0, 250.0)
    p = np.array([[0.0, 0.0], [1000.0, 500.0]])
    assert np.allclose(f.denormalize(f.normalize(p)), p)
    assert np.allclose(f.normalize([[500.0, 250.0]]), 0.0)
    with pytest.raises(ValueError):
        NormalizationFrame(0, 10)
