"""Synthetic scenes and the benchmark studies built on them.

A scene is a camera looking at a 10 m square plane, a division-model lens and
a few clusters of repeated affine frames.  Each cluster repeats one frame by
translations along a single plane direction, so any two frames of a cluster
form a conjugately translated affine-frame correspondence.  Frames are kept in
three forms: plane coordinates, noiseless distorted pixels and noisy pixels.

Every trial draws from its own generator seeded by ``(seed, trial)``, so
results do not depend on the order in which trials run.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .constraints import PointCorrespondence
from .errors import RDCTError
from .geometry import NormalizationFrame
from .metrics import GridTessellation, GroundTruthCamera, relative_lambda_error, transfer_error, warp_error
from .ransac import AppearanceCluster, simple_ransac_25
from .solvers import SolverKind, run_solver

log = logging.getLogger(__name__)

PROPOSED = (SolverKind.H25, SolverKind.H3, SolverKind.H35, SolverKind.H4)
CSV_FIELDS = ("scene_id", "solver", "sigma", "lambda_true", "lambda_est", "rel_lambda_err",
              "rms_xfer_px", "rms_warp_px", "status")


class FramingRejectedTooOften(RDCTError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    plane_size: float = 10.0
    image_size: tuple[int, int] = (1000, 1000)
    lambda_range: tuple[float, float] = (-6.0, 0.0)
    noise_sigmas: tuple[float, ...] = (0.1, 0.5, 1.0, 2.0)
    n_trials: int = 1000
    seed: int = 0
    focal_range: tuple[float, float] = (600.0, 2000.0)
    max_tilt: float = 60.0
    frame_extent: tuple[float, float] = (1.5, 3.0)
    translation_range: tuple[float, float] = (0.5, 5.0)
    n_directions: tuple[int, int] = (2, 4)
    frames_per_cluster: tuple[int, int] = (6, 10)
    min_in_frame: float = 0.8
    sigma: float = 0.0
    lam: float | None = None

    def __post_init__(self):
        for name in ("lambda_range", "focal_range", "frame_extent", "translation_range",
                     "n_directions", "frames_per_cluster"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} is empty")
        if self.n_trials < 1:
            raise ValueError("n_trials must be at least 1")
        if self.n_directions[0] < 1 or self.frames_per_cluster[0] < 2:
            raise ValueError("need at least one direction and two frames per cluster")
        if self.sigma < 0 or any(s < 0 for s in self.noise_sigmas):
            raise ValueError("noise levels must be non-negative")

    @property
    def frame(self) -> NormalizationFrame:
        return NormalizationFrame(*self.image_size)


@dataclass
class SyntheticScene:
    truth: GroundTruthCamera
    clusters: list[AppearanceCluster]
    noiseless_clusters: list[AppearanceCluster]
    plane_frames: list[np.ndarray]
    grid: GridTessellation
    sigma: float = 0.0
    framing_loosened: bool = False

    @property
    def frame(self) -> NormalizationFrame:
        return self.truth.frame

    def translation(self, cluster: int, i: int, j: int) -> np.ndarray:
        """Plane translation (meters) from frame ``i`` to frame ``j`` of a cluster."""
        f = self.plane_frames[cluster]
        return f[j, 0] - f[i, 0]

    def correspondences(self, cluster: int, i: int, j: int, n: int = 3, direction_id: int = 0,
                        noiseless: bool = False) -> list[PointCorrespondence]:
        cl = (self.noiseless_clusters if noiseless else self.clusters)[cluster]
        a = self.frame.normalize(cl.frames[i][:n])
        b = self.frame.normalize(cl.frames[j][:n])
        return [PointCorrespondence(p, q, direction_id) for p, q in zip(a, b)]

    def pairs(self) -> list[tuple[int, int, int]]:
        return [(c, i, j) for c, cl in enumerate(self.clusters)
                for i in range(len(cl.frames)) for j in range(i + 1, len(cl.frames))]


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial)]))


# ---------------------------------------------------------------- scene generation

def _rotation_towards(C, target, roll) -> np.ndarray:
    z = target - C
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    c, s = math.cos(roll), math.sin(roll)
    x, y = c * x + s * y, -s * x + c * y
    return np.vstack([x, y, z])


def _camera(cfg: SceneConfig, rng, lam: float) -> GroundTruthCamera:
    w, h = cfg.image_size
    f = rng.uniform(*cfg.focal_range)
    tilt = math.radians(rng.uniform(0.0, cfg.max_tilt))
    az = rng.uniform(0.0, 2 * math.pi)
    half = cfg.plane_size / 2.0
    target = np.array([rng.uniform(-0.2, 0.2) * half, rng.uniform(-0.2, 0.2) * half, 0.0])
    # distance at which the plane roughly spans the image, then jittered
    dist = f * cfg.plane_size / min(w, h) * rng.uniform(0.7, 1.4)
    C = target + dist * np.array([math.sin(tilt) * math.cos(az), math.sin(tilt) * math.sin(az), math.cos(tilt)])
    R = _rotation_towards(C, target, rng.uniform(-math.pi, math.pi))
    K = np.array([[f, 0.0, w / 2.0], [0.0, f, h / 2.0], [0.0, 0.0, 1.0]])
    Hpix = K @ np.column_stack([R[:, 0], R[:, 1], -R @ C])
    frame = cfg.frame
    N = np.array([[frame.scale, 0.0, -frame.center[0] * frame.scale],
                  [0.0, frame.scale, -frame.center[1] * frame.scale], [0.0, 0.0, 1.0]])
    return GroundTruthCamera(N @ Hpix, lam, frame)


def _affine_frame(cfg: SceneConfig, rng) -> np.ndarray:
    """Origin plus two axis points; extent in meters, never near-collinear."""
    ext = rng.uniform(*cfg.frame_extent)
    a = rng.uniform(0, 2 * math.pi)
    shear = rng.uniform(math.radians(45), math.radians(135))
    ratio = rng.uniform(0.6, 1.0)
    e1 = ext * np.array([math.cos(a), math.sin(a)])
    e2 = ext * ratio * np.array([math.cos(a + shear), math.sin(a + shear)])
    return np.array([[0.0, 0.0], e1, e2])


def _cluster(cfg: SceneConfig, rng, cam: GroundTruthCamera, angle: float, tries: int = 200):
    n = int(rng.integers(cfg.frames_per_cluster[0], cfg.frames_per_cluster[1] + 1))
    d = np.array([math.cos(angle), math.sin(angle)])
    half = cfg.plane_size / 2.0
    lo, hi = cfg.translation_range
    for _ in range(tries):
        base = _affine_frame(cfg, rng)
        room = cfg.plane_size - float(np.linalg.norm(base.max(axis=0) - base.min(axis=0)))
        # cap the step so the whole run fits on the plane
        step_hi = min(hi, room / (n - 1))
        if step_hi < lo:
            continue
        offs = np.concatenate([[0.0], np.cumsum(rng.uniform(lo, step_hi, n - 1))])
        frames = np.stack([base + o * d for o in offs])
        pts = frames.reshape(-1, 2)
        # uniform placement among shifts that keep every point on the plane
        smin, smax = -half - pts.min(axis=0), half - pts.max(axis=0)
        if np.any(smin > smax):
            continue
        frames = frames + rng.uniform(smin, smax)
        if np.all(cam.visible(frames.reshape(-1, 2))):
            return frames
    return None


def generate_scene(cfg: SceneConfig, rng: np.random.Generator, sigma: float | None = None) -> SyntheticScene:
    sigma = cfg.sigma if sigma is None else sigma
    lam = cfg.lam if cfg.lam is not None else float(rng.uniform(*cfg.lambda_range))
    grid = GridTessellation.square(10, cfg.plane_size / 10.0)
    need = cfg.min_in_frame
    loosened = False
    for attempt in range(2000):
        if attempt == 1000:
            need *= 0.75
            loosened = True
            log.warning("framing rejected 1000 times, loosening the in-frame fraction to %.2f", need)
        cam = _camera(cfg, rng, lam)
        if cam.visible(grid.points).mean() < need:
            continue
        k = int(rng.integers(cfg.n_directions[0], cfg.n_directions[1] + 1))
        # spread directions so no two clusters translate nearly in parallel
        angles = rng.uniform(0, math.pi) + np.arange(k) * math.pi / k + rng.uniform(-0.2, 0.2, k) * math.pi / k
        plane = []
        for ang in angles:
            fr = _cluster(cfg, rng, cam, float(ang))
            if fr is None:
                break
            plane.append(fr)
        if len(plane) < k:
            continue
        noiseless, noisy = [], []
        for cid, fr in enumerate(plane):
            px = cfg.frame.denormalize(cam.image(fr.reshape(-1, 2))).reshape(fr.shape)
            noiseless.append(AppearanceCluster(cid, [f.copy() for f in px]))
            nz = px + rng.normal(0.0, sigma, px.shape) if sigma > 0 else px.copy()
            noisy.append(AppearanceCluster(cid, [f for f in nz]))
        return SyntheticScene(cam, noisy, noiseless, plane, grid, sigma, loosened)
    raise FramingRejectedTooOften("could not place camera and frames")


# ---------------------------------------------------------------- minimal instances

@dataclass
class Instance:
    kind: SolverKind
    corrs: list[PointCorrespondence]
    lam: float
    line: np.ndarray
    scale: float | None
    translations: list[np.ndarray]


def minimal_instance(scene: SyntheticScene, kind, rng, noiseless: bool = True) -> Instance:
    """One minimal sample for ``kind`` with its ground truth.

    One-direction solvers get a frame pair from one cluster, using all three
    points (two for H2lu).  Two-direction solvers get the first two points of
    a frame pair from each of two distinct clusters.
    """
    kind = SolverKind.parse(kind)
    pairs = scene.pairs()
    if kind.two_direction:
        c1 = int(rng.integers(len(scene.clusters)))
        others = [c for c in range(len(scene.clusters)) if c != c1]
        c2 = others[int(rng.integers(len(others)))]
        picks = [(c1, *_pair(rng, scene, c1)), (c2, *_pair(rng, scene, c2))]
        corrs = []
        for d, (c, i, j) in enumerate(picks):
            corrs += scene.correspondences(c, i, j, 2, d, noiseless)
    else:
        c, i, j = pairs[int(rng.integers(len(pairs)))]
        picks = [(c, i, j)]
        corrs = scene.correspondences(c, i, j, kind.sample_size, 0, noiseless)
    trans = [scene.translation(*p) for p in picks]
    scale = None
    if kind is SolverKind.H3:
        scale = 1.0
    elif kind is SolverKind.H4:
        scale = 1.0
    return Instance(kind, corrs, scene.truth.lam, scene.truth.line.vector, scale, trans)


def _pair(rng, scene, c):
    n = len(scene.clusters[c].frames)
    i, j = rng.choice(n, 2, replace=False)
    return int(min(i, j)), int(max(i, j))


# ---------------------------------------------------------------- studies

def worker_count() -> int:
    env = os.environ.get("RDCT_THREADS", "").strip()
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"RDCT_THREADS must be a positive integer, got {env!r}") from None
        if n < 1:
            raise ValueError("RDCT_THREADS must be a positive integer")
        return n
    return os.cpu_count() or 1


def _map_trials(fn: Callable, cfg: SceneConfig, trials: Iterable[int], workers: int | None = None) -> list:
    trials = list(trials)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(trials) < 2:
        return [fn(cfg, t) for t in trials]
    chunk = max(1, len(trials) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, [cfg] * len(trials), trials, chunksize=chunk))


def _row(scene_id, kind, sigma, lam_true, lam_est=float("nan"), xfer=float("nan"),
         warp=float("nan"), status="ok") -> dict:
    rel = relative_lambda_error(lam_est, lam_true) if np.isfinite(lam_est) else float("nan")
    return {"scene_id": scene_id, "solver": kind.value, "sigma": float(sigma), "lambda_true": float(lam_true),
            "lambda_est": float(lam_est), "rel_lambda_err": float(rel), "rms_xfer_px": float(xfer),
            "rms_warp_px": float(warp), "status": status}


def best_by_transfer(hyps, scene: SyntheticScene, translations):
    best, err = None, float("inf")
    for h in hyps:
        e = transfer_error(h, scene.truth, translations, scene.grid)
        if e < err:
            best, err = h, e
    return best, err


def _stability_trial(cfg: SceneConfig, trial: int) -> list[dict]:
    rng = trial_rng(cfg.seed, trial)
    scene = generate_scene(replace(cfg, sigma=0.0), rng)
    rows = []
    for kind in PROPOSED:
        inst = minimal_instance(scene, kind, rng)
        try:
            hyps = run_solver(kind, inst.corrs)
        except RDCTError as exc:
            rows.append(_row(trial, kind, 0.0, scene.truth.lam, status=type(exc).__name__))
            continue
        best, err = best_by_transfer(hyps, scene, inst.translations)
        if best is None:
            rows.append(_row(trial, kind, 0.0, scene.truth.lam, status="no_solution"))
        else:
            rows.append(_row(trial, kind, 0.0, scene.truth.lam, best.lam, err))
    return rows


def _ransac_trial(cfg: SceneConfig, trial: int, kinds, sigmas, with_warp: bool) -> list[dict]:
    rows = []
    for si, sigma in enumerate(sigmas):
        # same scene geometry at every noise level; noise from its own stream
        scene = generate_scene(replace(cfg, sigma=0.0), trial_rng(cfg.seed, trial))
        if sigma > 0:
            scene = add_noise(scene, sigma, trial_rng(cfg.seed, trial * 1000 + si + 1))
        for k, kind in enumerate(kinds):
            rng = trial_rng(cfg.seed, (trial * 64 + k) * 64 + si)
            try:
                best, err = simple_ransac_25(scene, kind, rng)
            except RDCTError as exc:
                rows.append(_row(trial, kind, sigma, scene.truth.lam, status=type(exc).__name__))
                continue
            warp = float("nan")
            if with_warp:
                try:
                    warp = warp_error(best.line, best.lam, scene.truth, scene.grid)
                except RDCTError:
                    pass
            rows.append(_row(trial, kind, sigma, scene.truth.lam, best.lam, err, warp))
    return rows


def add_noise(scene: SyntheticScene, sigma: float, rng) -> SyntheticScene:
    noisy = []
    for cl in scene.noiseless_clusters:
        noisy.append(AppearanceCluster(cl.id, [f + rng.normal(0.0, sigma, f.shape) for f in cl.frames]))
    return SyntheticScene(scene.truth, noisy, scene.noiseless_clusters, scene.plane_frames, scene.grid,
                          sigma, scene.framing_loosened)


def _sensitivity_trial(cfg, trial):
    return _ransac_trial(cfg, trial, (SolverKind.H2LU,) + PROPOSED, cfg.noise_sigmas, False)


def _warp_trial(cfg, trial):
    return _ransac_trial(cfg, trial, (SolverKind.H2LU,) + PROPOSED, cfg.noise_sigmas, True)


def _flatten(chunks) -> list[dict]:
    return [r for c in chunks for r in c]


def run_stability_study(cfg: SceneConfig, workers: int | None = None) -> list[dict]:
    return _flatten(_map_trials(_stability_trial, cfg, range(cfg.n_trials), workers))


def run_sensitivity_study(cfg: SceneConfig, workers: int | None = None) -> list[dict]:
    cfg = replace(cfg, lam=-4.0 if cfg.lam is None else cfg.lam)
    return _flatten(_map_trials(_sensitivity_trial, cfg, range(cfg.n_trials), workers))


def run_warp_study(cfg: SceneConfig, workers: int | None = None) -> list[dict]:
    cfg = replace(cfg, lam=-4.0 if cfg.lam is None else cfg.lam)
    return _flatten(_map_trials(_warp_trial, cfg, range(cfg.n_trials), workers))


def time_solvers(cfg: SceneConfig, n_calls: int | None = None, warmup: int = 20) -> list[dict]:
    """Wall time per solver call on noiseless minimal samples (informational)."""
    n_calls = n_calls or cfg.n_trials
    out = []
    for kind in PROPOSED + (SolverKind.H2LU,):
        rng = trial_rng(cfg.seed, 0)
        samples = []
        while len(samples) < n_calls + warmup:
            scene = generate_scene(replace(cfg, sigma=0.0), rng)
            samples.append(minimal_instance(scene, kind, rng).corrs)
        for s in samples[:warmup]:
            _quiet(kind, s)
        times = []
        for s in samples[warmup:]:
            t0 = time.perf_counter()
            _quiet(kind, s)
            times.append(time.perf_counter() - t0)
        times = np.array(times) * 1e3
        out.append({"solver": kind.value, "calls": len(times), "mean_ms": float(times.mean()),
                    "median_ms": float(np.median(times))})
        log.info("%s: mean %.3f ms, median %.3f ms", kind.value, times.mean(), np.median(times))
    return out


def _quiet(kind, corrs):
    try:
        run_solver(kind, corrs)
    except RDCTError:
        pass


def summarize(rows: Sequence[dict], column: str = "rms_xfer_px") -> list[dict]:
    """Quartiles of ``column`` per (solver, sigma), ignoring failed rows."""
    groups: dict[tuple[str, float], list[float]] = {}
    for r in rows:
        v = float(r[column])
        if r["status"] == "ok" and np.isfinite(v):
            groups.setdefault((r["solver"], float(r["sigma"])), []).append(v)
    out = []
    for (solver, sigma), vals in sorted(groups.items()):
        q1, q2, q3 = np.percentile(vals, [25, 50, 75])
        out.append({"solver": solver, "sigma": sigma, "column": column, "n": len(vals),
                    "q1": float(q1), "median": float(q2), "q3": float(q3)})
    return out


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def rows_to_csv(rows: Sequence[dict], fields: Sequence[str] = CSV_FIELDS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r[f]) for f in fields])
    return buf.getvalue()
