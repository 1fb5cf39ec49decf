import numpy as np
import pytest

from rdct.geometry import NormalizationFrame, VanishingLine, distort, undistort
from rdct.image import ImageFormatError, encode_ppm, read_ppm, warp_image, write_ppm

SQ = 40.0


def _checker(q):
    # grey squares, so black only ever means "no pre-image"
    return 64.0 + 128.0 * ((np.floor(q[:, 0] / SQ) + np.floor(q[:, 1] / SQ)) % 2)


def _distorted_checkerboard(w, h, lam, ss=4):
    """Image of a checkerboard (in undistorted pixel coordinates) seen through the lens."""
    frame = NormalizationFrame(w, h)
    jj, ii = np.meshgrid(np.arange(w * ss), np.arange(h * ss))
    p = np.column_stack([(jj.ravel() + 0.5) / ss, (ii.ravel() + 0.5) / ss])
    y = undistort(frame.normalize(p), lam)
    q = frame.denormalize(y[:, :2] / y[:, 2:3])
    v = _checker(q).reshape(h, ss, w, ss).mean(axis=(1, 3))
    return np.repeat(v[:, :, None], 3, axis=2).round().astype(np.uint8), frame


def _edge_points(img, canvas, x_edge, rows):
    """Sub-pixel crossings of the vertical checker edge at canvas x = ``x_edge``."""
    g = img[:, :, 0].astype(float)
    pts = []
    j0 = int(round(x_edge - canvas.origin[0] - 0.5))
    for i in rows:
        yc = canvas.origin[1] + i + 0.5
        if min(yc % SQ, SQ - yc % SQ) < 3 or j0 - 4 < 0 or j0 + 5 > g.shape[1]:
            continue  # near a checker corner or off the canvas
        seg = g[i, j0 - 4:j0 + 5]
        if seg.min() < 40 or abs(seg[-1] - seg[0]) < 100:
            continue
        c = np.flatnonzero(np.diff(np.sign(seg - 128.0)) != 0)
        if len(c) != 1:
            continue
        k = int(c[0])
        a, b = seg[k], seg[k + 1]
        t = (128.0 - a) / (b - a)
        x = canvas.origin[0] + (j0 - 4 + k + t) + 0.5
        pts.append((canvas.origin[1] + i + 0.5, x))
    return np.array(pts)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (7, 5, 3), dtype=np.uint8)
    write_ppm(tmp_path / "a.ppm", img)
    assert np.array_equal(read_ppm(tmp_path / "a.ppm"), img)
    deep = rng.integers(0, 65536, (3, 4, 3)).astype(np.uint16)
    write_ppm(tmp_path / "b.ppm", deep)
    assert np.array_equal(read_ppm(tmp_path / "b.ppm"), deep)


def test_ppm_header_comments(tmp_path):
    body = bytes(range(12))
    (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n2 2\n255\n" + body)
    assert read_ppm(tmp_path / "c.ppm").ravel().tolist() == list(body)


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n0 0 0\n", b"P6\n2 2\n255\n\x00", b"GIF89a", b"P6\n2"])
def test_ppm_rejects_other_formats(tmp_path, data):
    (tmp_path / "x.ppm").write_bytes(data)
    with pytest.raises(ImageFormatError):
        read_ppm(tmp_path / "x.ppm")


def test_undistort_with_zero_lambda_is_identity():
    img = np.random.default_rng(1).integers(0, 256, (48, 64, 3), dtype=np.uint8)
    out = warp_image(img, NormalizationFrame(64, 48), 0.0)
    assert out.image.shape == img.shape and np.array_equal(out.image, img)


def test_rectify_with_line_at_infinity_is_a_no_op():
    img = np.random.default_rng(2).integers(0, 256, (30, 40, 3), dtype=np.uint8)
    out = warp_image(img, NormalizationFrame(40, 30), 0.0, VanishingLine(0.0, 0.0, 1.0))
    assert np.array_equal(out.image, img)


def test_undistorted_checkerboard_edges_are_straight():
    w, h, lam = 320, 240, -4.0
    img, frame = _distorted_checkerboard(w, h, lam)
    out = warp_image(img, frame, lam)
    canvas = out.canvas
    assert canvas.width * canvas.height <= 4 * w * h
    # the raw distorted image bends the same edge by several pixels
    ys = np.linspace(20.0, 220.0, 50)
    on_edge = np.column_stack([np.full_like(ys, 2 * SQ), ys])
    raw = frame.denormalize(distort(np.column_stack([frame.normalize(on_edge), np.ones(50)]), lam)[:, :2])
    bend = np.abs(raw[:, 0] - np.polyval(np.polyfit(raw[:, 1], raw[:, 0], 1), raw[:, 1])).max()
    assert bend > 2.0
    checked = 0
    for k in range(-6, 7):
        x_edge = k * SQ
        if not canvas.origin[0] + 8 < x_edge < canvas.origin[0] + canvas.width - 8:
            continue
        pts = _edge_points(out.image, canvas, x_edge, range(canvas.height))
        if len(pts) < 20:
            continue
        fit = np.polyfit(pts[:, 0], pts[:, 1], 1)
        assert np.abs(pts[:, 1] - np.polyval(fit, pts[:, 0])).max() < 1.0
        assert abs(np.polyval(fit, pts[:, 0]) - x_edge).max() < 1.0
        checked += 1
    assert checked >= 3


def test_area_cap_crops_the_canvas():
    img = np.full((40, 60, 3), 200, np.uint8)
    out = warp_image(img, NormalizationFrame(60, 40), 0.0, VanishingLine(-1.9, 0.0, 1.0))
    assert out.cropped and out.image.shape[0] * out.image.shape[1] <= 4 * 60 * 40


def test_encode_checks_shape():
    with pytest.raises(ValueError):
        encode_ppm(np.zeros((2, 2)))
