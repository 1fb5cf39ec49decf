"""Robust estimation over clusters of repeated affine frames.

Frames arrive in distorted pixel coordinates and are normalized on entry.  A
frame pair of a cluster is one affine-frame correspondence.  Given a model
``(l, lambda)``, each pair gets its own translation ``w = s u`` on ``l``,
re-fit in closed form, so scoring and refinement only ever search over the
vanishing line and the distortion parameter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import EstimationFailed, InsufficientData, OptimizerDiverged, RDCTError
from .geometry import ConjugateTranslation, Gauge, NormalizationFrame, VanishingLine
from .solvers import ModelHypothesis, SolverKind, run_solver

log = logging.getLogger(__name__)


@dataclass
class AppearanceCluster:
    id: int
    frames: list

    def __post_init__(self):
        frames = [np.asarray(f, dtype=float) for f in self.frames]
        for f in frames:
            if f.shape != (3, 2):
                raise ValueError("an affine frame is three 2D points")
            if not np.all(np.isfinite(f)):
                raise ValueError("frame coordinates must be finite")
            e1, e2 = f[1] - f[0], f[2] - f[0]
            ext = max(np.linalg.norm(e1), np.linalg.norm(e2))
            if ext == 0 or abs(e1[0] * e2[1] - e1[1] * e2[0]) <= 1e-9 * ext * ext:
                raise ValueError("affine frame points are collinear")
        self.frames = frames

    @property
    def n_pairs(self) -> int:
        n = len(self.frames)
        return n * (n - 1) // 2

    def pairs(self):
        n = len(self.frames)
        return [(i, j) for i in range(n) for j in range(i + 1, n)]


@dataclass
class RectificationEstimate:
    model: ModelHypothesis
    inlier_pairs: dict[int, list[tuple[int, int]]]
    score: float
    iterations: int
    history: list[float] = field(default_factory=list)


@dataclass(frozen=True)
class RansacConfig:
    max_iter: int = 100
    pixel_threshold: float = 2.0
    confidence: float = 0.99
    seed: int = 0
    distinct_clusters: bool = True
    incidence_tol: float = 0.05
    local_optimization: bool = True


@dataclass
class Sample:
    pairs: list[tuple[int, int, int]]  # (cluster index, frame i, frame j)
    corrs: list


# ---------------------------------------------------------------- sampling

def _all_pairs(clusters) -> list[tuple[int, int, int]]:
    return [(c, i, j) for c, cl in enumerate(clusters) for i, j in cl.pairs()]


def sample_minimal(clusters: Sequence[AppearanceCluster], kind, rng: np.random.Generator,
                   frame: NormalizationFrame, *, distinct_clusters: bool = True) -> Sample:
    """Draw frame pairs uniformly over every eligible pair of every cluster."""
    from .constraints import PointCorrespondence

    kind = SolverKind.parse(kind)
    pairs = _all_pairs(clusters)
    if not pairs:
        raise InsufficientData("no cluster has two frames")
    if not kind.two_direction:
        c, i, j = pairs[int(rng.integers(len(pairs)))]
        n = kind.sample_size
        a = frame.normalize(clusters[c].frames[i][:n])
        b = frame.normalize(clusters[c].frames[j][:n])
        return Sample([(c, i, j)], [PointCorrespondence(p, q, 0) for p, q in zip(a, b)])
    if distinct_clusters:
        if len({c for c, _, _ in pairs}) < 2:
            raise InsufficientData("two-direction solvers need pairs from two distinct clusters")
    elif len(pairs) < 2:
        raise InsufficientData("two-direction solvers need two frame pairs")
    first = pairs[int(rng.integers(len(pairs)))]
    rest = [p for p in pairs if (p[0] != first[0] if distinct_clusters else p != first)]
    second = rest[int(rng.integers(len(rest)))]
    corrs = []
    for d, (c, i, j) in enumerate((first, second)):
        a = frame.normalize(clusters[c].frames[i][:2])
        b = frame.normalize(clusters[c].frames[j][:2])
        corrs += [PointCorrespondence(p, q, d) for p, q in zip(a, b)]
    return Sample([first, second], corrs)


# ---------------------------------------------------------------- per-pair geometry

def _lift(p, lam):
    """``(..., 2)`` points to ``(..., 3)`` undistorted homogeneous points."""
    r2 = (p * p).sum(axis=-1)
    return np.concatenate([p, (1.0 + lam * r2)[..., None]], axis=-1)


def _cross(a, b):
    return np.stack([a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
                     a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
                     a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]], axis=-1)


def _distort(y, lam):
    """Distorted 2D points from undistorted homogeneous ones (complex-safe)."""
    w = y[..., 2]
    rho2 = y[..., 0] ** 2 + y[..., 1] ** 2
    sgn = np.where(np.real(w) < 0, -1.0, 1.0)
    disc = w * w - 4.0 * lam * rho2
    if not np.iscomplexobj(disc):
        disc = np.where(disc < 0, np.nan, disc)
    mu = 2.0 / (w + sgn * np.sqrt(disc))
    return y[..., :2] * mu[..., None]


def _line_basis(l, gauge: Gauge):
    """Two vectors spanning the points of ``l``, polynomial in ``l``."""
    one, zero = np.ones_like(l[0]), np.zeros_like(l[0])
    if gauge is Gauge.L3_EQ_1:
        return np.stack([np.stack([one, zero, -l[0]]), np.stack([zero, one, -l[1]])], axis=1)
    return np.stack([np.stack([one, -l[0], zero]), np.stack([zero, -l[2], one])], axis=1)


def _fit_translations(X, Xp, l, gauge):
    """Closed-form ``w = B beta`` on ``l`` for each pair.

    ``X``, ``Xp``: (P, n, 3) undistorted points.  Minimizes the algebraic
    residual ``[x']_x (x + w (l.x))`` over the pair's points.
    """
    B = _line_basis(l, gauge)  # (3, 2)
    a = X @ l  # (P, n)
    cols = [a[..., None] * _cross(Xp, np.broadcast_to(B[:, k], Xp.shape)) for k in range(2)]
    A = np.stack(cols, axis=-1).reshape(X.shape[0], -1, 2)
    b = -_cross(Xp, X).reshape(X.shape[0], -1)
    AtA = np.swapaxes(A, 1, 2) @ A
    Atb = np.swapaxes(A, 1, 2) @ b[..., None]
    AtA = AtA + 1e-300 * np.eye(2)
    beta = np.linalg.solve(AtA, Atb)[..., 0]
    return beta @ B.T  # (P, 3)


def _transfer(X, Xp, xt, xpt, l, w, lam):
    """Forward and backward distorted transfer residuals, (P, n, 4)."""
    fwd = X + w[:, None, :] * (X @ l)[..., None]
    bwd = Xp - w[:, None, :] * (Xp @ l)[..., None]
    return np.concatenate([_distort(fwd, lam) - xpt, _distort(bwd, lam) - xt], axis=-1)


def _gather(clusters, pairs, frame, n=3):
    xt = np.array([frame.normalize(clusters[c].frames[i][:n]) for c, i, _ in pairs])
    xpt = np.array([frame.normalize(clusters[c].frames[j][:n]) for c, _, j in pairs])
    return xt, xpt


def pair_errors(model: ModelHypothesis, clusters, pairs, frame: NormalizationFrame):
    """Max symmetric transfer error (px) and incidence of the free meet, per pair."""
    if not pairs:
        return np.empty(0), np.empty(0)
    xt, xpt = _gather(clusters, pairs, frame)
    lam = model.lam
    X, Xp = _lift(xt, lam), _lift(xpt, lam)
    l = model.line.vector
    J = _cross(X, Xp)
    _, _, vt = np.linalg.svd(J)
    meet = vt[:, -1]
    inc = np.abs(meet @ l) / (np.linalg.norm(l) * np.linalg.norm(meet, axis=1))
    w = _fit_translations(X, Xp, l, model.line.gauge)
    r = _transfer(X, Xp, xt, xpt, l, w, lam)
    fwd = np.linalg.norm(r[..., :2], axis=-1)
    bwd = np.linalg.norm(r[..., 2:], axis=-1)
    err = np.maximum(fwd, bwd).max(axis=1) / frame.scale
    err = np.where(np.isfinite(err), err, np.inf)
    return err, inc


def consensus(model: ModelHypothesis, clusters: Sequence[AppearanceCluster], pixel_threshold: float,
              frame: NormalizationFrame, incidence_tol: float = 0.05):
    """Score and inlier pairs.

    The score sums, over clusters, the fraction of the cluster's frame pairs
    that the model explains.
    """
    pairs = _all_pairs(clusters)
    inliers: dict[int, list[tuple[int, int]]] = {cl.id: [] for cl in clusters}
    if not pairs:
        return 0.0, inliers
    err, inc = pair_errors(model, clusters, pairs, frame)
    ok = (err < pixel_threshold) & (inc < incidence_tol)
    score = 0.0
    for (c, i, j), good in zip(pairs, ok):
        if good:
            inliers[clusters[c].id].append((i, j))
    for cl in clusters:
        if cl.n_pairs:
            score += len(inliers[cl.id]) / cl.n_pairs
    return float(score), inliers


# ---------------------------------------------------------------- local optimization

class _Objective:
    """Stacked distorted transfer residuals (pixels) as a function of (l free, lam)."""

    def __init__(self, model: ModelHypothesis, clusters, inlier_pairs, frame):
        index = {cl.id: k for k, cl in enumerate(clusters)}
        self.pairs = [(index[cid], i, j) for cid, ps in sorted(inlier_pairs.items()) for i, j in ps]
        if not self.pairs:
            raise InsufficientData("local optimization needs at least one inlier pair")
        self.xt, self.xpt = _gather(clusters, self.pairs, frame)
        self.gauge = model.line.gauge
        self.k = self.gauge.index
        self.free = [i for i in range(3) if i != self.k]
        self.scale = frame.scale

    def unpack(self, theta):
        dt = np.result_type(theta, float)
        l = np.ones(3, dtype=dt)
        l[self.free[0]], l[self.free[1]] = theta[0], theta[1]
        return l, theta[2]

    def pack(self, model: ModelHypothesis):
        l = model.line.vector
        return np.array([l[self.free[0]], l[self.free[1]], model.lam])

    def __call__(self, theta):
        l, lam = self.unpack(theta)
        X, Xp = _lift(self.xt, lam), _lift(self.xpt, lam)
        w = _fit_translations(X, Xp, l, self.gauge)
        return (_transfer(X, Xp, self.xt, self.xpt, l, w, lam) / self.scale).ravel()

    def jacobian(self, theta):
        """Exact derivative by complex-step differentiation."""
        theta = np.asarray(theta, dtype=float)
        h = 1e-30
        cols = []
        for k in range(len(theta)):
            t = theta.astype(complex)
            t[k] += 1j * h
            cols.append(self(t).imag / h)
        return np.stack(cols, axis=1)

    def cost(self, theta):
        r = self(theta)
        return float(np.sum(r * r)) if np.all(np.isfinite(r)) else np.inf


def _refit_model(model: ModelHypothesis, theta, obj: _Objective, residual: float) -> ModelHypothesis:
    l, lam = obj.unpack(np.asarray(theta, dtype=float))
    line = VanishingLine(float(l[0]), float(l[1]), float(l[2]), obj.gauge)
    lv = line.vector
    dirs = []
    for ct in model.directions:
        u = ct.direction - (lv @ ct.direction) / (lv @ lv) * lv
        dirs.append(ConjugateTranslation(line, u, ct.rel_scales, tol=1e-8))
    return model.with_params(line, lam, dirs, residual)


def local_optimize(model: ModelHypothesis, inlier_pairs, clusters, frame: NormalizationFrame,
                   *, max_iter: int = 50, strict: bool = False) -> ModelHypothesis:
    """Damped least-squares refinement of ``(l, lambda)`` with per-pair translations re-fit.

    The returned model's ``residual`` is the RMS transfer residual (px) over
    the inlier pairs; it never exceeds the input's.
    """
    obj = _Objective(model, clusters, inlier_pairs, frame)
    t0 = obj.pack(model)
    c0 = obj.cost(t0)
    n_res = len(obj(t0))
    try:
        sol = least_squares(obj, t0, jac=obj.jacobian, method="lm", xtol=1e-12, ftol=1e-12,
                            max_nfev=max_iter * 4)
        t1, c1 = sol.x, obj.cost(sol.x)
    except (ValueError, np.linalg.LinAlgError) as exc:
        t1, c1 = t0, np.inf
        log.debug("local optimization failed: %s", exc)
    if not np.isfinite(c1) or c1 > c0:
        if strict:
            raise OptimizerDiverged("local optimization did not improve the model")
        log.debug("local optimization rejected (cost %.3g -> %.3g)", c0, c1)
        return _refit_model(model, t0, obj, math.sqrt(c0 / n_res) if np.isfinite(c0) else np.inf)
    return _refit_model(model, t1, obj, math.sqrt(c1 / n_res))


# ---------------------------------------------------------------- RANSAC loops

def _needed_iterations(inlier_frac: float, k: int, confidence: float) -> float:
    if inlier_frac <= 0:
        return math.inf
    if inlier_frac >= 1:
        return 0
    p = inlier_frac ** k
    return math.log(1 - confidence) / math.log(1 - p) if p < 1 else 0


def lo_ransac(clusters: Sequence[AppearanceCluster], kind, config: RansacConfig = RansacConfig(),
              frame: NormalizationFrame | None = None, **solver_kw) -> RectificationEstimate:
    kind = SolverKind.parse(kind)
    clusters = list(clusters)
    if frame is None:
        raise ValueError("a normalization frame is required")
    rng = np.random.default_rng(config.seed)
    usable = sum(1 for cl in clusters if cl.n_pairs)
    total_pairs = sum(cl.n_pairs for cl in clusters)
    # fail early with the sampling error if the data cannot feed this solver
    sample_minimal(clusters, kind, np.random.default_rng(0), frame, distinct_clusters=config.distinct_clusters)
    best: RectificationEstimate | None = None
    history: list[float] = []
    k = 2 if kind.two_direction else 1
    it = 0
    while it < config.max_iter:
        it += 1
        sample = sample_minimal(clusters, kind, rng, frame, distinct_clusters=config.distinct_clusters)
        try:
            hyps = run_solver(kind, sample.corrs, **solver_kw)
        except RDCTError as exc:
            log.debug("iteration %d: %s", it, exc)
            hyps = []
        for h in hyps:
            score, inl = consensus(h, clusters, config.pixel_threshold, frame, config.incidence_tol)
            if best is not None and score <= best.score:
                continue
            cand = RectificationEstimate(h, inl, score, it)
            if config.local_optimization and any(inl.values()):
                cand = _lo_step(cand, clusters, config, frame)
            best = cand
            log.info("iteration %d: new best score %.4f (lambda %.4g)", it, best.score, best.model.lam)
        history.append(best.score if best else 0.0)
        if best is not None:
            n_in = sum(len(v) for v in best.inlier_pairs.values())
            if it >= _needed_iterations(n_in / max(total_pairs, 1), k, config.confidence):
                break
    if best is None:
        raise EstimationFailed("no hypothesis was produced")
    if config.local_optimization and any(best.inlier_pairs.values()):
        best = _lo_step(best, clusters, config, frame)
    best.iterations = it
    best.history = history
    log.info("finished after %d iterations, score %.4f of %d", it, best.score, usable)
    return best


def _lo_step(est: RectificationEstimate, clusters, config, frame) -> RectificationEstimate:
    try:
        refined = local_optimize(est.model, est.inlier_pairs, clusters, frame)
    except RDCTError as exc:
        log.debug("local optimization skipped: %s", exc)
        return est
    score, inl = consensus(refined, clusters, config.pixel_threshold, frame, config.incidence_tol)
    if score >= est.score:
        return RectificationEstimate(refined, inl, score, est.iterations)
    return est


def simple_ransac_25(scene, kind, rng: np.random.Generator, iterations: int = 25, solver=None):
    """Plain RANSAC on a synthetic scene, ranking hypotheses by RMS transfer error.

    Returns ``(best model, its transfer error)``.  ``solver`` replaces
    :func:`run_solver` (used to count calls).
    """
    from .metrics import transfer_error
    from .synth import minimal_instance

    kind = SolverKind.parse(kind)
    solver = solver or run_solver
    best, best_err = None, math.inf
    for _ in range(iterations):
        inst = minimal_instance(scene, kind, rng, noiseless=False)
        try:
            hyps = solver(kind, inst.corrs)
        except RDCTError:
            continue
        for h in hyps:
            e = transfer_error(h, scene.truth, inst.translations, scene.grid)
            if e < best_err:
                best, best_err = h, e
    if best is None:
        raise EstimationFailed("no hypothesis in any iteration")
    return best, best_err
