"""JSON documents for correspondences and estimated models.

Both readers report schema problems as :class:`SchemaError` carrying the line
and column of the offending value.  Writers replace the target atomically.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from json.decoder import JSONDecodeError, scanstring
from pathlib import Path
from typing import Any

import numpy as np

from .errors import SchemaError
from .geometry import ConjugateTranslation, Gauge, NormalizationFrame, VanishingLine
from .ransac import AppearanceCluster, RectificationEstimate
from .solvers import ModelHypothesis, SolverKind

MARGIN = 0.10
INCIDENCE_TOL = 1e-6


def atomic_write(path, data: str | bytes) -> None:
    """Write via a sibling temporary file and rename it over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


# ---------------------------------------------------------------- locating values

_WS = " \t\n\r"
_scalar = json.JSONDecoder()


def _skip(text: str, i: int) -> int:
    while i < len(text) and text[i] in _WS:
        i += 1
    return i


def _index_positions(text: str) -> dict[tuple, int]:
    """Character offset of every value in a syntactically valid document, by path."""
    pos: dict[tuple, int] = {}

    def value(i: int, path: tuple) -> int:
        i = _skip(text, i)
        pos[path] = i
        c = text[i]
        if c == "{":
            i = _skip(text, i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = scanstring(text, _skip(text, i) + 1)
                i = _skip(text, i) + 1  # colon
                i = _skip(text, value(i, path + (key,)))
                if text[i] == "}":
                    return i + 1
                i += 1
        if c == "[":
            i = _skip(text, i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = _skip(text, value(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        return _scalar.raw_decode(text, i)[1]

    value(0, ())
    return pos


class _Doc:
    """Parsed JSON plus lazy line/column lookup for error messages."""

    def __init__(self, text: str, name: str):
        self.text = text
        self.name = name
        try:
            self.root = json.loads(text)
        except JSONDecodeError as exc:
            raise SchemaError(f"{name}: invalid JSON: {exc.msg}", exc.lineno, exc.colno) from None
        self._pos: dict[tuple, int] | None = None

    def fail(self, path: tuple, message: str):
        if self._pos is None:
            self._pos = _index_positions(self.text)
        p = path
        while p not in self._pos and p:
            p = p[:-1]
        off = self._pos.get(p, 0)
        line = self.text.count("\n", 0, off) + 1
        col = off - (self.text.rfind("\n", 0, off) + 1) + 1
        where = "".join(f"[{k}]" if isinstance(k, int) else f".{k}" for k in path).lstrip(".") or "<root>"
        raise SchemaError(f"{self.name}: {where}: {message}", line, col)

    def get(self, obj, key, path: tuple, kind, required: bool = True, default=None):
        if not isinstance(obj, dict):
            self.fail(path, "expected an object")
        if key not in obj:
            if required:
                self.fail(path, f"missing field {key!r}")
            return default
        v = obj[key]
        if not _is(v, kind):
            self.fail(path + (key,), f"expected {_kind_name(kind)}")
        return v

    def number(self, v, path: tuple) -> float:
        if not _is(v, "number") or not math.isfinite(v):
            self.fail(path, "expected a finite number")
        return float(v)

    def vector(self, v, n: int, path: tuple) -> np.ndarray:
        if not isinstance(v, list) or len(v) != n:
            self.fail(path, f"expected a list of {n} numbers")
        return np.array([self.number(x, path + (i,)) for i, x in enumerate(v)])


def _is(v, kind) -> bool:
    if kind == "number":
        return isinstance(v, (int, float)) and not isinstance(v, bool)
    return isinstance(v, kind)


def _kind_name(kind) -> str:
    return {dict: "an object", list: "a list", str: "a string", "number": "a number"}.get(kind, str(kind))


def _read_text(path) -> tuple[str, str]:
    path = Path(path)
    try:
        return path.read_text(encoding="utf-8"), str(path)
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 text ({exc.reason})") from None


# ---------------------------------------------------------------- correspondence files

@dataclass
class CorrespondenceFile:
    width: float
    height: float
    clusters: list[AppearanceCluster]
    distortion_center: tuple[float, float] | None = None

    @property
    def center_defaulted(self) -> bool:
        return self.distortion_center is None

    @property
    def frame(self) -> NormalizationFrame:
        return NormalizationFrame(self.width, self.height, self.distortion_center)

    def to_json(self) -> dict:
        image: dict[str, Any] = {"width": self.width, "height": self.height}
        if self.distortion_center is not None:
            image["distortion_center"] = [float(c) for c in self.distortion_center]
        return {"image": image,
                "clusters": [{"id": cl.id, "frames": [np.asarray(f, float).tolist() for f in cl.frames]}
                             for cl in self.clusters]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, allow_nan=False) + "\n"

    def write(self, path) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def loads(cls, text: str, name: str = "<string>") -> "CorrespondenceFile":
        doc = _Doc(text, name)
        root = doc.root
        if not isinstance(root, dict):
            doc.fail((), "expected an object")
        image = doc.get(root, "image", (), dict)
        w = doc.number(doc.get(image, "width", ("image",), "number"), ("image", "width"))
        h = doc.number(doc.get(image, "height", ("image",), "number"), ("image", "height"))
        if w <= 0 or h <= 0:
            doc.fail(("image",), "image size must be positive")
        center = None
        if image.get("distortion_center") is not None:
            center = tuple(doc.vector(image["distortion_center"], 2, ("image", "distortion_center")))
        raw = doc.get(root, "clusters", (), list)
        if not raw:
            doc.fail(("clusters",), "at least one cluster is required")
        lo = np.array([-MARGIN * w, -MARGIN * h])
        hi = np.array([(1 + MARGIN) * w, (1 + MARGIN) * h])
        clusters, ids = [], set()
        for ci, c in enumerate(raw):
            p = ("clusters", ci)
            cid = doc.get(c, "id", p, "number")
            if int(cid) != cid:
                doc.fail(p + ("id",), "cluster id must be an integer")
            if cid in ids:
                doc.fail(p + ("id",), f"duplicate cluster id {int(cid)}")
            ids.add(cid)
            frames = []
            for fi, f in enumerate(doc.get(c, "frames", p, list)):
                fp = p + ("frames", fi)
                if not isinstance(f, list) or len(f) != 3:
                    doc.fail(fp, "a frame is a list of three [x, y] points")
                pts = np.stack([doc.vector(q, 2, fp + (k,)) for k, q in enumerate(f)])
                for k, q in enumerate(pts):
                    if np.any(q < lo) or np.any(q > hi):
                        doc.fail(fp + (k,), "point lies outside the image plus a 10% margin")
                frames.append(pts)
            try:
                clusters.append(AppearanceCluster(int(cid), frames))
            except ValueError as exc:
                doc.fail(p, str(exc))
        return cls(w, h, clusters, center)

    @classmethod
    def read(cls, path) -> "CorrespondenceFile":
        return cls.loads(*_read_text(path))


# ---------------------------------------------------------------- model files

@dataclass
class ModelFile:
    lam: float
    line: VanishingLine
    directions: list[ConjugateTranslation]
    solver: str
    width: float
    height: float
    distortion_center: tuple[float, float]
    center_defaulted: bool = False
    seed: int | None = None
    inliers: dict = field(default_factory=dict)
    version: str = ""

    @property
    def frame(self) -> NormalizationFrame:
        return NormalizationFrame(self.width, self.height, self.distortion_center)

    @property
    def model(self) -> ModelHypothesis:
        return ModelHypothesis(self.line, self.lam, tuple(self.directions), SolverKind.parse(self.solver))

    @classmethod
    def from_estimate(cls, est: RectificationEstimate | ModelHypothesis, corr: CorrespondenceFile,
                      seed: int | None = None) -> "ModelFile":
        from . import __version__

        model = est.model if isinstance(est, RectificationEstimate) else est
        inliers = {}
        if isinstance(est, RectificationEstimate):
            inliers = {"score": float(est.score), "iterations": int(est.iterations),
                       "inlier_pairs": int(sum(len(v) for v in est.inlier_pairs.values())),
                       "total_pairs": int(sum(cl.n_pairs for cl in corr.clusters)),
                       "clusters_with_inliers": int(sum(1 for v in est.inlier_pairs.values() if v))}
        frame = corr.frame
        return cls(float(model.lam), model.line, list(model.directions), model.source_solver.value,
                   corr.width, corr.height, frame.center, corr.center_defaulted, seed, inliers, __version__)

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "solver": self.solver,
            "seed": self.seed,
            "lambda": self.lam,
            "vanishing_line": self.line.vector.tolist(),
            "gauge": self.line.gauge.value,
            "directions": [{"u": d.direction.tolist(), "scales": list(d.rel_scales)} for d in self.directions],
            "image": {"width": self.width, "height": self.height,
                      "distortion_center": [float(c) for c in self.distortion_center],
                      "distortion_center_defaulted": self.center_defaulted},
            "inliers": self.inliers,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, allow_nan=False) + "\n"

    def write(self, path) -> None:
        atomic_write(path, self.dumps())

    @classmethod
    def loads(cls, text: str, name: str = "<string>") -> "ModelFile":
        doc = _Doc(text, name)
        root = doc.root
        if not isinstance(root, dict):
            doc.fail((), "expected an object")
        version = doc.get(root, "version", (), str)
        solver = doc.get(root, "solver", (), str)
        try:
            SolverKind.parse(solver)
        except ValueError as exc:
            doc.fail(("solver",), str(exc))
        seed = root.get("seed")
        if seed is not None and (not _is(seed, "number") or int(seed) != seed):
            doc.fail(("seed",), "seed must be an integer or null")
        lam = doc.number(doc.get(root, "lambda", (), "number"), ("lambda",))
        lvec = doc.vector(doc.get(root, "vanishing_line", (), list), 3, ("vanishing_line",))
        gname = doc.get(root, "gauge", (), str)
        try:
            gauge = Gauge(gname)
            line = VanishingLine(*lvec, gauge)
        except ValueError as exc:
            doc.fail(("gauge",) if gname not in {g.value for g in Gauge} else ("vanishing_line",), str(exc))
        dirs = []
        for k, d in enumerate(doc.get(root, "directions", (), list)):
            p = ("directions", k)
            u = doc.vector(doc.get(d, "u", p, list), 3, p + ("u",))
            sc = doc.get(d, "scales", p, list)
            scales = [doc.number(s, p + ("scales", i)) for i, s in enumerate(sc)]
            inc = abs(lvec @ u) / max(np.linalg.norm(lvec) * np.linalg.norm(u), 1e-300)
            if inc > INCIDENCE_TOL:
                doc.fail(p + ("u",), f"direction is not on the vanishing line (|l.u| = {inc:.2e})")
            try:
                dirs.append(ConjugateTranslation(line, u, tuple(scales), tol=INCIDENCE_TOL))
            except ValueError as exc:
                doc.fail(p, str(exc))
        image = doc.get(root, "image", (), dict)
        w = doc.number(doc.get(image, "width", ("image",), "number"), ("image", "width"))
        h = doc.number(doc.get(image, "height", ("image",), "number"), ("image", "height"))
        if w <= 0 or h <= 0:
            doc.fail(("image",), "image size must be positive")
        c = image.get("distortion_center")
        center = (w / 2.0, h / 2.0) if c is None else tuple(doc.vector(c, 2, ("image", "distortion_center")))
        defaulted = bool(image.get("distortion_center_defaulted", c is None))
        inliers = root.get("inliers", {})
        if not isinstance(inliers, dict):
            doc.fail(("inliers",), "expected an object")
        return cls(lam, line, dirs, solver, w, h, center, defaulted,
                   None if seed is None else int(seed), inliers, version)

    @classmethod
    def read(cls, path) -> "ModelFile":
        return cls.loads(*_read_text(path))


def scene_to_correspondences(scene, noiseless: bool = False) -> CorrespondenceFile:
    """Export a synthetic scene's frames as a correspondence document."""
    clusters = scene.noiseless_clusters if noiseless else scene.clusters
    frame = scene.frame
    return CorrespondenceFile(frame.image_width, frame.image_height,
                              [AppearanceCluster(cl.id, [f.copy() for f in cl.frames]) for cl in clusters],
                              tuple(frame.center))
