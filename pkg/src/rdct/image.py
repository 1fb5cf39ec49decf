"""Binary PPM input/output and inverse warping for undistortion and rectification.

Pixel ``(row i, column j)`` covers ``[j, j+1) x [i, i+1)`` in image coordinates,
so its center sits at ``(j + 0.5, i + 0.5)``.  Output pixels are pulled from the
input with bilinear interpolation; samples without a pre-image inside the
input are black.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates

from .geometry import NormalizationFrame, distort, rectifying_homography, undistort
from .io import atomic_write

AREA_CAP = 4.0


class ImageFormatError(ValueError):
    pass


def read_ppm(path) -> np.ndarray:
    """Decode a binary (P6) PPM into an ``(h, w, 3)`` array of uint8 or uint16."""
    data = Path(path).read_bytes()
    fields, i = [], 0
    while len(fields) < 4:
        while i < len(data) and data[i:i + 1].isspace():
            i += 1
        if i < len(data) and data[i:i + 1] == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
            j += 1
        if j == i:
            raise ImageFormatError("truncated PPM header")
        fields.append(data[i:j])
        i = j
    if fields[0] != b"P6":
        raise ImageFormatError(f"unsupported image format {fields[0][:8]!r}; only binary PPM (P6) is read")
    try:
        w, h, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise ImageFormatError("malformed PPM header") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise ImageFormatError("PPM size or maximum value out of range")
    i += 1  # single whitespace byte ends the header
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * 3 * dtype.itemsize
    if len(data) - i < n:
        raise ImageFormatError("PPM pixel data is truncated")
    img = np.frombuffer(data, dtype=dtype, count=w * h * 3, offset=i).reshape(h, w, 3)
    return img.astype(np.uint16 if maxval > 255 else np.uint8)


def encode_ppm(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an (h, w, 3) array")
    if img.dtype == np.uint16:
        maxval, body = 65535, img.astype(">u2").tobytes()
    else:
        maxval, body = 255, np.clip(img, 0, 255).astype(np.uint8).tobytes()
    return f"P6\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode() + body


def write_ppm(path, img: np.ndarray) -> None:
    atomic_write(path, encode_ppm(img))


# ---------------------------------------------------------------- warping

@dataclass(frozen=True)
class Canvas:
    """Output raster placement: pixel ``(i, j)`` center maps to ``origin + (j+0.5, i+0.5) * step``."""

    origin: tuple[float, float]
    step: float
    width: int
    height: int

    def centers(self) -> np.ndarray:
        jj, ii = np.meshgrid(np.arange(self.width) + 0.5, np.arange(self.height) + 0.5)
        return np.column_stack([self.origin[0] + jj.ravel() * self.step, self.origin[1] + ii.ravel() * self.step])


def _border(w: int, h: int, n: int = 256) -> np.ndarray:
    t = np.linspace(0.0, 1.0, n)
    return np.concatenate([np.column_stack([t * w, np.zeros(n)]), np.column_stack([t * w, np.full(n, h)]),
                           np.column_stack([np.zeros(n), t * h]), np.column_stack([np.full(n, w), t * h])])


class _Warp:
    """Forward map (input pixels to output plane) and its inverse, both in pixel units."""

    def __init__(self, frame: NormalizationFrame, lam: float, H: np.ndarray | None):
        self.frame, self.lam, self.H = frame, float(lam), H
        self.Hinv = None if H is None else np.linalg.inv(H)

    def forward(self, px: np.ndarray) -> np.ndarray:
        y = undistort(self.frame.normalize(px), self.lam)
        if self.H is not None:
            y = y @ self.H.T
        with np.errstate(divide="ignore", invalid="ignore"):
            q = y[:, :2] / y[:, 2:3]
        q[y[:, 2] <= 0] = np.nan  # beyond the vanishing line
        return self.frame.denormalize(q)

    def inverse(self, q: np.ndarray) -> np.ndarray:
        y = np.column_stack([self.frame.normalize(q), np.ones(len(q))])
        if self.Hinv is not None:
            y = y @ self.Hinv.T
        x = distort(y, self.lam, strict=False)[:, :2]
        return self.frame.denormalize(x)


def _canvas(warp: _Warp, w: int, h: int) -> tuple[Canvas, bool]:
    q = warp.forward(_border(w, h))
    q = q[np.all(np.isfinite(q), axis=1)]
    if len(q) == 0:
        return Canvas((0.0, 0.0), 1.0, w, h), True
    lo = np.floor(q.min(axis=0) + 1e-9)
    hi = np.ceil(q.max(axis=0) - 1e-9)
    size = hi - lo
    cap = AREA_CAP * w * h
    cropped = False
    if size[0] * size[1] > cap:
        # keep the aspect, centered on the image center's warp, inside the hull box
        c = warp.forward(np.array([[w / 2.0, h / 2.0]]))[0]
        if not np.all(np.isfinite(c)):
            c = (lo + hi) / 2.0
        k = math.sqrt(cap / (size[0] * size[1]))
        size = np.maximum(np.floor(size * k), 1.0)
        lo = np.clip(np.round(c - size / 2.0), lo, hi - size)
        cropped = True
    return Canvas((float(lo[0]), float(lo[1])), 1.0, int(size[0]), int(size[1])), cropped


def _sample(img: np.ndarray, px: np.ndarray) -> np.ndarray:
    h, w = img.shape[:2]
    ok = np.all(np.isfinite(px), axis=1) & (px[:, 0] >= 0) & (px[:, 0] <= w) & (px[:, 1] >= 0) & (px[:, 1] <= h)
    rows = np.where(ok, px[:, 1] - 0.5, 0.0)
    cols = np.where(ok, px[:, 0] - 0.5, 0.0)
    out = np.zeros((len(px), img.shape[2]))
    for ch in range(img.shape[2]):
        out[:, ch] = map_coordinates(img[:, :, ch].astype(float), [rows, cols], order=1, mode="nearest")
    out[~ok] = 0.0
    return out


@dataclass
class WarpOutput:
    image: np.ndarray
    canvas: Canvas
    cropped: bool


def warp_image(img: np.ndarray, frame: NormalizationFrame, lam: float, line=None) -> WarpOutput:
    """Undistort (``line`` is None) or undistort and rectify an image.

    The canvas covers the warped input border, cropped around the warped
    image center when that would exceed four times the input area.
    """
    h, w = img.shape[:2]
    H = None if line is None else rectifying_homography(line)
    warp = _Warp(frame, lam, H)
    canvas, cropped = _canvas(warp, w, h)
    vals = _sample(img, warp.inverse(canvas.centers()))
    if np.issubdtype(img.dtype, np.integer):
        vals = np.clip(np.rint(vals), 0, np.iinfo(img.dtype).max)
    out = vals.astype(img.dtype).reshape(canvas.height, canvas.width, img.shape[2])
    return WarpOutput(out, canvas, cropped)
