"""Transfer error, warp error and relative distortion error.

Ground-truth cameras map plane coordinates (meters) to normalized image
coordinates; errors are reported in pixels.  Grid points count when they lie
in front of the camera and inside the image after distortion.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import Degenerate, OptimizerDiverged
from .geometry import NormalizationFrame, VanishingLine, distort, rectifying_homography, undistort

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GridTessellation:
    points: np.ndarray
    spacing: float = 1.0
    translated_points: np.ndarray | None = None

    @classmethod
    def square(cls, n: int = 10, spacing: float = 1.0, center=(0.0, 0.0)) -> "GridTessellation":
        k = (np.arange(n) - (n - 1) / 2.0) * spacing
        X, Y = np.meshgrid(k + center[0], k + center[1], indexing="ij")
        return cls(np.column_stack([X.ravel(), Y.ravel()]), spacing)

    def translated(self, t) -> "GridTessellation":
        """Copy whose ``translated_points`` are shifted one spacing along ``t``."""
        t = np.asarray(t, dtype=float)[:2]
        n = np.linalg.norm(t)
        if n == 0:
            raise Degenerate("zero translation")
        return GridTessellation(self.points, self.spacing, self.points + self.spacing * t / n)


@dataclass(frozen=True)
class GroundTruthCamera:
    P: np.ndarray
    lam: float
    frame: NormalizationFrame = field(default_factory=lambda: NormalizationFrame(1000, 1000))
    H_inf: np.ndarray | None = None

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if abs(np.linalg.det(P)) < 1e-300:
            raise Degenerate("camera homography is singular")
        object.__setattr__(self, "P", P)
        if self.H_inf is None:
            object.__setattr__(self, "H_inf", rectifying_homography(self.line))

    @property
    def line(self) -> VanishingLine:
        return VanishingLine.from_vector(np.linalg.inv(self.P).T @ np.array([0.0, 0.0, 1.0]))

    def project(self, X) -> np.ndarray:
        """Undistorted homogeneous images of plane points."""
        X = np.asarray(X, dtype=float)
        return np.column_stack([X[:, 0], X[:, 1], np.ones(len(X))]) @ self.P.T

    def image(self, X) -> np.ndarray:
        """Distorted normalized image points (NaN where undefined)."""
        return distort(self.project(X), self.lam, strict=False)[:, :2]

    def visible(self, X) -> np.ndarray:
        """Mask of plane points in front of the camera whose image lies in the frame."""
        x = self.image(X)
        px = self.frame.denormalize(x)
        inside = (px[:, 0] >= 0) & (px[:, 0] <= self.frame.image_width) & \
                 (px[:, 1] >= 0) & (px[:, 1] <= self.frame.image_height)
        return (self.project(X)[:, 2] > 0) & np.all(np.isfinite(x), axis=1) & inside


def _unit_transfer(model, k: int, t_norm: float, lam_hat: float, x: np.ndarray) -> np.ndarray:
    ct = model.directions[k]
    H = np.eye(3) + np.outer(ct.direction, ct.line.vector) / t_norm
    y = undistort(x, lam_hat) @ H.T
    return distort(y, lam_hat, strict=False)[:, :2]


def transfer_residuals(model, truth: GroundTruthCamera, translations: Sequence, grid: GridTessellation | None = None):
    """Per-point transfer distances in pixels for each direction (NaN = excluded)."""
    grid = grid or GridTessellation.square()
    if len(translations) != len(model.directions):
        raise ValueError("one scene translation per model direction is required")
    out = []
    for k, t in enumerate(translations):
        g = grid.translated(t)
        keep = truth.visible(g.points) & truth.visible(g.translated_points)
        x = truth.image(g.points)
        xp = truth.image(g.translated_points)
        pred = _unit_transfer(model, k, 1.0 / g.spacing * np.linalg.norm(np.asarray(t, float)[:2]), model.lam, x)
        d = np.linalg.norm(pred - xp, axis=1) / truth.frame.scale
        d[~keep] = np.nan
        out.append(d)
    return out


def transfer_error(model, truth: GroundTruthCamera, translations: Sequence, grid: GridTessellation | None = None) -> float:
    """RMS transfer error in pixels, pooled over directions.

    ``translations`` holds, per model direction, the plane translation (meters)
    between the noiseless pre-images of that direction's first sampled
    correspondence.
    """
    d = np.concatenate(transfer_residuals(model, truth, translations, grid))
    n_bad = int(np.isnan(d).sum())
    if n_bad:
        log.debug("transfer error: %d grid points excluded", n_bad)
    d = d[~np.isnan(d)]
    if d.size == 0:
        return float("inf")
    return float(np.sqrt(np.mean(d * d)))


@dataclass(frozen=True)
class WarpResult:
    rms: float
    affine: np.ndarray
    n_points: int
    converged: bool


def _affine(b):
    return np.array([[b[0], b[1], b[2]], [b[3], b[4], b[5]], [0.0, 0.0, 1.0]])


def warp_fit(l_hat, lambda_hat: float, truth: GroundTruthCamera, grid: GridTessellation | None = None,
             max_iter: int = 100) -> WarpResult:
    grid = grid or GridTessellation.square()
    vis = truth.visible(grid.points)
    X = grid.points[vis]
    if len(X) < 3:
        raise Degenerate("fewer than three grid points are visible")
    x = truth.image(X)
    Hh = rectifying_homography(l_hat)
    Hinv = np.linalg.inv(truth.H_inf)
    q = undistort(x, lambda_hat) @ Hh.T
    ok = np.abs(q[:, 2]) > 1e-12 * np.abs(q).max(axis=1)
    x, q = x[ok], q[ok] / q[ok, 2:3]
    if len(x) < 3:
        raise Degenerate("estimated rectification sends the grid to infinity")
    r_true = truth.project(X[ok]) @ truth.H_inf.T
    r_true = r_true[:, :2] / r_true[:, 2:3]

    # three well-spread points fix the starting affinity
    idx = [0, int(np.argmax(np.linalg.norm(q[:, :2] - q[0, :2], axis=1)))]
    a, b = q[idx[1], :2] - q[idx[0], :2], q[:, :2] - q[idx[0], :2]
    d = np.abs(a[0] * b[:, 1] - a[1] * b[:, 0])
    idx.append(int(np.argmax(d)))
    A = np.zeros((6, 6))
    rhs = np.zeros(6)
    for r, i in enumerate(idx):
        A[2 * r, :3] = q[i]
        A[2 * r + 1, 3:] = q[i]
        rhs[2 * r: 2 * r + 2] = r_true[i]
    try:
        b0 = np.linalg.solve(A, rhs)
    except np.linalg.LinAlgError:
        b0 = np.array([1.0, 0, 0, 0, 1.0, 0])
    scale = truth.frame.scale

    def resid(b):
        y = q @ (Hinv @ _affine(b)).T
        xr = distort(y, truth.lam, strict=False)[:, :2]
        r = (xr - x) / scale
        return np.where(np.isfinite(r), r, 1e6).ravel()

    sol = least_squares(resid, b0, method="lm", xtol=1e-10, ftol=1e-12, max_nfev=max_iter * 7)
    r = resid(sol.x).reshape(-1, 2)
    rms = float(np.sqrt(np.mean((r * r).sum(axis=1))))
    r0 = resid(b0).reshape(-1, 2)
    rms0 = float(np.sqrt(np.mean((r0 * r0).sum(axis=1))))
    if rms0 < rms:
        return WarpResult(rms0, _affine(b0), len(x), False)
    return WarpResult(rms, _affine(sol.x), len(x), bool(sol.success))


def warp_error(l_hat, lambda_hat: float, truth: GroundTruthCamera, grid: GridTessellation | None = None,
               *, strict: bool = False) -> float:
    """RMS warp error in pixels, minimized over the residual affinity."""
    res = warp_fit(l_hat, lambda_hat, truth, grid)
    if not res.converged:
        if strict:
            raise OptimizerDiverged(f"warp-error fit did not converge (best {res.rms:.3g} px)")
        log.debug("warp-error fit did not converge, reporting best value %.3g", res.rms)
    return res.rms


def relative_lambda_error(lambda_hat: float, lam: float) -> float:
    if abs(lam) < 1e-12:
        log.debug("true lambda is zero, reporting absolute error")
        return abs(lambda_hat - lam)
    return abs(lambda_hat - lam) / abs(lam)
