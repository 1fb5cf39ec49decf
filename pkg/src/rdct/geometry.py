"""Homogeneous primitives, the division model and conjugate translations.

Points are plain numpy arrays whose last axis holds ``(x, y, w)``.  Functions
accept a single point of shape ``(3,)`` or a stack ``(..., 3)``; inputs of
shape ``(..., 2)`` are read as ``w = 1``.  All solver math happens in
normalized coordinates: pixels minus the distortion center, scaled by
``1 / (width + height)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import Degenerate, IndexOutOfRange, NoRealRoot, PointAtInfinity

W_EPS = 1e-12


class Gauge(enum.Enum):
    L3_EQ_1 = "l3=1"
    L2_EQ_1 = "l2=1"

    @property
    def index(self) -> int:
        return 2 if self is Gauge.L3_EQ_1 else 1


def homogenize(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1] == 3:
        return p
    if p.shape[-1] != 2:
        raise ValueError(f"expected points with 2 or 3 coordinates, got shape {p.shape}")
    return np.concatenate([p, np.ones(p.shape[:-1] + (1,))], axis=-1)


def dehomogenize(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    w = p[..., 2:3]
    if np.any(np.abs(w) < W_EPS * np.maximum(1.0, np.abs(p[..., :2]).max(axis=-1, keepdims=True))):
        raise PointAtInfinity("cannot dehomogenize a point with w = 0")
    return p[..., :2] / w


def skew(v) -> np.ndarray:
    x, y, w = v
    return np.array([[0.0, -w, y], [w, 0.0, -x], [-y, x, 0.0]])


# ---------------------------------------------------------------- division model

def undistort(p, lam: float) -> np.ndarray:
    """Lift distorted points ``(x, y, 1)`` to ``(x, y, 1 + lam * r^2)``."""
    p = homogenize(p)
    q = p[..., :2] / p[..., 2:3]
    r2 = (q * q).sum(axis=-1, keepdims=True)
    return np.concatenate([q, 1.0 + lam * r2], axis=-1)


def distort(p, lam: float, *, strict: bool = True) -> np.ndarray:
    """Inverse of :func:`undistort`, returned with ``w = 1``.

    Of the two distorted points that lift to the same projective point, the
    one with ``1 + lam * r^2 > 0`` is returned; this is the branch that tends
    to the identity as ``lam -> 0``, so the round trip is exact for every
    distorted point inside the fold circle ``r^2 = -1/lam``.  With
    ``strict=False`` invalid points come back as NaN instead of raising.
    """
    p = homogenize(p)
    xy = p[..., :2]
    w = p[..., 2]
    rho2 = (xy * xy).sum(axis=-1)
    scale = np.maximum(np.sqrt(rho2), np.abs(w))
    scale = np.where(scale > 0, scale, 1.0)
    at_inf = np.abs(w) < W_EPS * scale
    disc = w * w - 4.0 * lam * rho2
    no_root = disc < 0
    if strict:
        if np.any(at_inf):
            raise PointAtInfinity("undistorted point lies on the line at infinity")
        if np.any(no_root):
            raise NoRealRoot("4*lambda*r^2 > 1: no real distorted radius")
    sgn = np.where(w < 0, -1.0, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = 2.0 / (w + sgn * np.sqrt(np.where(no_root, np.nan, disc)))
    mu = np.where(at_inf | no_root, np.nan, mu)
    out = np.concatenate([xy * mu[..., None], np.ones(w.shape + (1,))], axis=-1)
    return out


@dataclass(frozen=True)
class DivisionModel:
    """One-parameter division model; ``lam`` is in normalized units."""

    lam: float
    center: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not np.isfinite(self.lam):
            raise ValueError("lambda must be finite")

    def undistort(self, p) -> np.ndarray:
        return undistort(p, self.lam)

    def distort(self, p, **kw) -> np.ndarray:
        return distort(p, self.lam, **kw)


# ---------------------------------------------------------------- lines and translations

@dataclass(frozen=True)
class VanishingLine:
    l1: float
    l2: float
    l3: float
    gauge: Gauge = Gauge.L3_EQ_1

    def __post_init__(self):
        v = self.vector
        if not np.all(np.isfinite(v)):
            raise ValueError("vanishing line must be finite")
        if v[self.gauge.index] != 1.0:
            raise ValueError(f"gauge coordinate must equal 1 under {self.gauge.value}")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.l1, self.l2, self.l3], dtype=float)

    @classmethod
    def from_vector(cls, v, gauge: Gauge | None = None, *, rel_tol: float = 1e-8) -> "VanishingLine":
        """Scale ``v`` so its gauge coordinate is 1.

        Without an explicit gauge, ``l3 = 1`` is preferred and ``l2 = 1`` is
        used when ``|l3|`` is negligible relative to ``|l|``.
        """
        v = np.asarray(v, dtype=float)
        n = np.linalg.norm(v)
        if not np.isfinite(n) or n == 0:
            raise Degenerate("zero vanishing line")
        if gauge is None:
            gauge = Gauge.L3_EQ_1 if abs(v[2]) > rel_tol * n else Gauge.L2_EQ_1
        k = gauge.index
        if abs(v[k]) <= 1e-15 * n:
            raise Degenerate(f"line cannot be expressed with {gauge.value}")
        v = v / v[k]
        v[k] = 1.0
        return cls(float(v[0]), float(v[1]), float(v[2]), gauge)


@dataclass(frozen=True)
class ConjugateTranslation:
    """``H_i = I + s_i u l^T`` with ``|u|`` carrying the first scale."""

    line: VanishingLine
    direction: np.ndarray
    rel_scales: tuple[float, ...] = (1.0,)
    tol: float = field(default=1e-10, repr=False, compare=False)

    def __post_init__(self):
        u = np.asarray(self.direction, dtype=float).reshape(3)
        object.__setattr__(self, "direction", u)
        scales = tuple(float(s) for s in self.rel_scales)
        if not scales or scales[0] != 1.0:
            raise ValueError("the first relative scale must be exactly 1")
        object.__setattr__(self, "rel_scales", scales)
        l = self.line.vector
        inc = abs(l @ u) / max(np.linalg.norm(l) * np.linalg.norm(u), 1e-300)
        if np.linalg.norm(u) > 0 and inc > self.tol:
            raise ValueError(f"direction is not on the vanishing line (|l.u| = {inc:.2e})")

    @property
    def first_scale(self) -> float:
        return float(np.linalg.norm(self.direction))

    def matrix(self, i: int = 0) -> np.ndarray:
        if not 0 <= i < len(self.rel_scales):
            raise IndexOutOfRange(f"no relative scale with index {i}")
        return np.eye(3) + self.rel_scales[i] * np.outer(self.direction, self.line.vector)


def apply_conjugate_translation(ct: ConjugateTranslation, i: int, p) -> np.ndarray:
    p = homogenize(p)
    return p @ ct.matrix(i).T


def rectifying_homography(line) -> np.ndarray:
    """Homography sending ``line`` to the line at infinity.

    The third row is ``l``; the other two are the identity rows for the two
    coordinates where ``l`` is smallest in magnitude.
    """
    l = line.vector if isinstance(line, VanishingLine) else np.asarray(line, dtype=float)
    n = np.linalg.norm(l)
    if not np.isfinite(n) or n < 1e-300:
        raise Degenerate("vanishing line is numerically zero")
    keep = sorted(np.argsort(np.abs(l))[:2])
    H = np.zeros((3, 3))
    H[0, keep[0]] = 1.0
    H[1, keep[1]] = 1.0
    H[2] = l
    return H


# ---------------------------------------------------------------- normalization

@dataclass(frozen=True)
class NormalizationFrame:
    image_width: float
    image_height: float
    center: tuple[float, float] | None = None

    def __post_init__(self):
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image size must be positive")
        if self.center is None:
            object.__setattr__(self, "center", (self.image_width / 2.0, self.image_height / 2.0))
        else:
            object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @property
    def scale(self) -> float:
        return 1.0 / (self.image_width + self.image_height)

    def normalize(self, pts) -> np.ndarray:
        return normalize_points(self, pts)

    def denormalize(self, pts) -> np.ndarray:
        return denormalize_points(self, pts)


def normalize_points(frame: NormalizationFrame, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return (pts - np.asarray(frame.center)) * frame.scale


def denormalize_points(frame: NormalizationFrame, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return pts / frame.scale + np.asarray(frame.center)
