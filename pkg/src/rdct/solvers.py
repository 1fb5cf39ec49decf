"""Minimal solvers: correspondences in, model hypotheses out.

Five solvers share one back end.  Each proposed solver finds the real roots in
lambda of its eliminant (or, with ``backend="polysys"``, the filtered roots of
the full sub-determinant system), recovers the vanishing line and any unknown
relative scale, and then reads each translation direction off the null vector
of the evaluated constraint rows.  Every hypothesis is checked against the
undistorted conjugate-translation constraint itself before it is returned.

Correspondences are positional: one-direction solvers take all points in
direction ``u``; two-direction solvers take two points in ``u`` followed by two
in ``v``.  The last correspondence carries the unknown relative scale of H3
and H4.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import polysys
from .constraints import BUILDERS, PointCorrespondence, _single_row_choice
from .elimination import Eliminator, _lift, numeric_rows
from .errors import Degenerate, RankDeficient, SolverFailed
from .geometry import ConjugateTranslation, Gauge, VanishingLine

LAMBDA_BOX = (-20.0, 2.0)
RESIDUAL_TOL = 1e-6
CONDITION_LIMIT = 1e12
PARALLEL_TOL = 1e-6


class SolverKind(enum.Enum):
    H2LU = "H2lu"
    H25 = "H2.5"
    H3 = "H3"
    H35 = "H3.5"
    H4 = "H4"

    @classmethod
    def parse(cls, name) -> "SolverKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace(".", "").replace("_", "")
        for k in cls:
            if k.value.lower().replace(".", "") == key or k.name.lower() == key:
                return k
        raise ValueError(f"unknown solver {name!r}")

    @property
    def family(self) -> str:
        return {"H2LU": "h2lu", "H25": "h25", "H3": "h3", "H35": "h35", "H4": "h4"}[self.name]

    @property
    def sample_size(self) -> int:
        return SAMPLE_SIZE[self]

    @property
    def two_direction(self) -> bool:
        return self in (SolverKind.H35, SolverKind.H4)

    @property
    def cap(self) -> int:
        return CAPS[self]


CAPS = {SolverKind.H2LU: 1, SolverKind.H25: 4, SolverKind.H3: 2, SolverKind.H35: 6, SolverKind.H4: 4}
SAMPLE_SIZE = {SolverKind.H2LU: 2, SolverKind.H25: 3, SolverKind.H3: 3, SolverKind.H35: 4, SolverKind.H4: 4}


@dataclass(frozen=True)
class ModelHypothesis:
    line: VanishingLine
    lam: float
    directions: tuple[ConjugateTranslation, ...]
    source_solver: SolverKind
    residual: float = 0.0

    @property
    def u(self) -> np.ndarray:
        return self.directions[0].direction

    @property
    def v(self) -> np.ndarray | None:
        return self.directions[1].direction if len(self.directions) > 1 else None

    def with_params(self, line: VanishingLine, lam: float, directions, residual: float) -> "ModelHypothesis":
        return ModelHypothesis(line, float(lam), tuple(directions), self.source_solver, float(residual))


@dataclass(frozen=True)
class AffineFrameCorrespondence:
    """Two ordered point triplets (or pairs, for similarity frames) of one repeat."""

    frame_a: np.ndarray
    frame_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.frame_a, dtype=float)
        b = np.asarray(self.frame_b, dtype=float)
        if a.shape != b.shape or a.ndim != 2 or a.shape[1] != 2 or a.shape[0] not in (2, 3):
            raise ValueError("frames must both be 2x2 or 3x2 point arrays")
        object.__setattr__(self, "frame_a", a)
        object.__setattr__(self, "frame_b", b)

    def point_correspondences(self, direction_id: int = 0, n: int | None = None) -> list[PointCorrespondence]:
        n = len(self.frame_a) if n is None else n
        return [PointCorrespondence(p, q, direction_id) for p, q in zip(self.frame_a[:n], self.frame_b[:n])]


def correspondences_for(kind, first: AffineFrameCorrespondence,
                        second: AffineFrameCorrespondence | None = None) -> list[PointCorrespondence]:
    """Solver input from one affine-frame pair, or two similarity-frame pairs."""
    kind = SolverKind.parse(kind)
    if kind.two_direction:
        if second is None:
            raise ValueError(f"{kind.value} needs two frame correspondences")
        return first.point_correspondences(0, 2) + second.point_correspondences(1, 2)
    return first.point_correspondences(0, kind.sample_size)


# ---------------------------------------------------------------- shared back end

def _arrays(corrs: Sequence[PointCorrespondence]):
    return np.array([c.src for c in corrs]), np.array([c.dst for c in corrs])


def eq6_residual(src, dst, lam: float, line, u, scale: float = 1.0, rows=(0, 1, 2)) -> float:
    """Normalized residual of the undistorted constraint ``[x']_x (I + s u l^T) x``.

    Each used row ``rho_k`` of ``[x']_x`` contributes ``|rho_k . y| / (|rho_k| |y|)``;
    with all three rows this is the sine of the angle between ``x'`` and ``y``.
    """
    x = _lift(np.asarray(src, float), lam)
    xp = _lift(np.asarray(dst, float), lam)
    y = x + scale * np.asarray(u) * (np.asarray(line) @ x)
    if len(rows) == 3:
        den = np.linalg.norm(xp) * np.linalg.norm(y)
        if den == 0 or not np.isfinite(den):
            return np.inf
        return float(np.linalg.norm(np.cross(xp, y)) / den)
    sk = np.array([[0.0, -xp[2], xp[1]], [xp[2], 0.0, -xp[0]], [-xp[1], xp[0], 0.0]])
    out = 0.0
    for k in rows:
        den = np.linalg.norm(sk[k]) * np.linalg.norm(y)
        if den == 0 or not np.isfinite(den):
            return np.inf
        out = max(out, abs(sk[k] @ y) / den)
    return float(out)


def _direction(src, dst, scales, lam, l, used) -> np.ndarray | None:
    rows = [numeric_rows(s, d, lam, l, k, rows=r) for s, d, k, r in zip(src, dst, scales, used)]
    rows.append(np.append(l, 0.0)[None, :])
    M = np.vstack(rows)
    M = M / np.maximum(np.linalg.norm(M, axis=1, keepdims=True), 1e-300)
    _, _, vt = np.linalg.svd(M)
    v = vt[-1]
    if abs(v[3]) <= 1e-12 * np.linalg.norm(v):
        return None
    u = v[:3] / v[3]
    # exact incidence: drop the component along l
    return u - (l @ u) / (l @ l) * l


def _gauge_line(m, gauge: Gauge | None, fallback: bool) -> VanishingLine | None:
    try:
        return VanishingLine.from_vector(m, gauge)
    except Degenerate:
        if gauge is not None and fallback:
            other = Gauge.L2_EQ_1 if gauge is Gauge.L3_EQ_1 else Gauge.L3_EQ_1
            try:
                return VanishingLine.from_vector(m, other)
            except Degenerate:
                return None
        return None


class _Builder:
    """Turns (line, lambda, scale) candidates into checked hypotheses."""

    def __init__(self, kind: SolverKind, corrs, gauge, fallback, box):
        self.kind = kind
        self.src, self.dst = _arrays(corrs)
        # the half-used correspondence contributes a single constraint row
        self.used = [(0, 1, 2)] * len(corrs)
        if kind in (SolverKind.H25, SolverKind.H35):
            self.kept = _single_row_choice(corrs[-1])
            self.used[-1] = (self.kept,)
        else:
            self.kept = None
        self.gauge = gauge
        self.fallback = fallback
        self.box = box
        self.parallel = 0
        n = len(corrs)
        self.groups = [list(range(n))] if not kind.two_direction else [[0, 1], [2, 3]]

    def scales(self, s) -> list[float]:
        sc = [1.0] * len(self.src)
        if self.kind in (SolverKind.H3, SolverKind.H4):
            sc[-1] = float(s)
        return sc

    def build(self, m, lam: float, s) -> ModelHypothesis | None:
        lam = float(lam)
        if not (self.box[0] <= lam <= self.box[1]) or not np.all(np.isfinite(m)):
            return None
        if self.kind in (SolverKind.H3, SolverKind.H4) and (s is None or not np.isfinite(s) or s == 0):
            return None
        line = _gauge_line(m, self.gauge, self.fallback)
        if line is None:
            return None
        l = line.vector
        scales = self.scales(s)
        dirs, resid = [], 0.0
        for g in self.groups:
            u = _direction(self.src[g], self.dst[g], [scales[i] for i in g], lam, l, [self.used[i] for i in g])
            if u is None or not np.all(np.isfinite(u)) or np.linalg.norm(u) == 0:
                return None
            for i in g:
                resid = max(resid, eq6_residual(self.src[i], self.dst[i], lam, l, u, scales[i], self.used[i]))
            rel = tuple(scales[i] / scales[g[0]] for i in g)
            dirs.append(ConjugateTranslation(line, u, rel, tol=1e-8))
        if len(dirs) == 2:
            a, b = dirs[0].direction, dirs[1].direction
            if np.linalg.norm(np.cross(a, b)) <= PARALLEL_TOL * np.linalg.norm(a) * np.linalg.norm(b):
                self.parallel += 1
                return None
        if resid > RESIDUAL_TOL:
            return None
        return ModelHypothesis(line, lam, tuple(dirs), self.kind, resid)

    def finish(self, hyps) -> list[ModelHypothesis]:
        hyps = [h for h in hyps if h is not None]
        # a root with u parallel to v means the sample is single-direction data;
        # any other surviving roots are then artifacts of the collapsed rank
        if self.parallel:
            raise Degenerate("the two translation directions coincide")
        hyps.sort(key=lambda h: (h.residual, h.lam))
        return hyps[: self.kind.cap]


def _check_input(kind: SolverKind, corrs) -> list[PointCorrespondence]:
    corrs = [c if isinstance(c, PointCorrespondence) else PointCorrespondence(*c) for c in corrs]
    if len(corrs) != kind.sample_size:
        raise ValueError(f"{kind.value} takes {kind.sample_size} correspondences, got {len(corrs)}")
    return corrs


def _solve_family(kind: SolverKind, corrs, gauge: Gauge | None, backend: str,
                  fallback: bool, box) -> list[ModelHypothesis]:
    corrs = _check_input(kind, corrs)
    b = _Builder(kind, corrs, gauge, fallback, box)
    fam = kind.family
    if backend == "elimination":
        src, dst = b.src, b.dst
        el = Eliminator(fam, src, dst, b.kept)
        if not np.any(np.abs(el.coefficients()) > 0):
            raise Degenerate("eliminant vanishes identically")
        hyps = []
        for lam in el.real_roots():
            m = el.line(lam)
            s = el.unknown_scale(lam, m) if fam in ("h3", "h4") else None
            hyps.append(b.build(m, lam, s))
        return b.finish(hyps)
    if backend != "polysys":
        raise ValueError(f"unknown backend {backend!r}")
    order = [gauge or Gauge.L3_EQ_1]
    if fallback:
        order.append(Gauge.L2_EQ_1 if order[0] is Gauge.L3_EQ_1 else Gauge.L3_EQ_1)
    last_err = None
    for g in order:
        try:
            hv = BUILDERS[fam](corrs, g)
            sol = polysys.solve(hv.poly_system())
        except RankDeficient as exc:
            last_err = exc
            continue
        if sol.condition > CONDITION_LIMIT and g is not order[-1]:
            continue
        hyps = []
        k = g.index
        free = [i for i in range(3) if i != k]
        for p in sol.points:
            m = np.ones(3)
            m[free[0]], m[free[1]] = p[0], p[1]
            hyps.append(b.build(m, p[2], p[3] if len(p) > 3 else None))
        return b.finish(hyps)
    raise SolverFailed(f"{kind.value}: polynomial system could not be solved") from last_err


# ---------------------------------------------------------------- public solvers

def solve_h2lu(corrs) -> list[ModelHypothesis]:
    """Distortion-free two-point solver (lambda fixed to 0)."""
    corrs = _check_input(SolverKind.H2LU, corrs)
    src, dst = _arrays(corrs)
    x = np.hstack([src, np.ones((2, 1))])
    xp = np.hstack([dst, np.ones((2, 1))])
    j = np.cross(x, xp)
    u = np.cross(j[0], j[1])
    if np.linalg.norm(u) <= 1e-12 * np.linalg.norm(j[0]) * np.linalg.norm(j[1]):
        raise Degenerate("the two correspondence joins are parallel")
    # x' ~ x + u (l.x)  =>  (l.x) = -(a.b)/(a.a) with a = x' x u, b = x' x x
    A = np.zeros((3, 3))
    rhs = np.zeros(3)
    for i in range(2):
        a = np.cross(xp[i], u)
        bb = np.cross(xp[i], x[i])
        A[i] = x[i]
        rhs[i] = -(a @ bb) / (a @ a)
    A[2] = u
    if abs(np.linalg.det(A)) <= 1e-14 * np.prod(np.linalg.norm(A, axis=1)):
        raise Degenerate("vanishing line is not determined by the sample")
    l = np.linalg.solve(A, rhs)
    line = _gauge_line(l, None, True)
    if line is None:
        raise Degenerate("zero vanishing line")
    u = u * (l[line.gauge.index])
    l = line.vector
    u = u - (l @ u) / (l @ l) * l
    resid = max(eq6_residual(src[i], dst[i], 0.0, l, u) for i in range(2))
    return [ModelHypothesis(line, 0.0, (ConjugateTranslation(line, u, (1.0, 1.0), tol=1e-8),),
                            SolverKind.H2LU, resid)]


def solve_h25(corrs, *, gauge: Gauge | None = None, backend: str = "elimination",
              fallback: bool = True, box=LAMBDA_BOX) -> list[ModelHypothesis]:
    return _solve_family(SolverKind.H25, corrs, gauge, backend, fallback, box)


def solve_h3(corrs, *, gauge: Gauge | None = None, backend: str = "elimination",
             fallback: bool = True, box=LAMBDA_BOX) -> list[ModelHypothesis]:
    return _solve_family(SolverKind.H3, corrs, gauge, backend, fallback, box)


def solve_h35(corrs, *, gauge: Gauge | None = None, backend: str = "elimination",
              fallback: bool = True, box=LAMBDA_BOX) -> list[ModelHypothesis]:
    return _solve_family(SolverKind.H35, corrs, gauge, backend, fallback, box)


def solve_h4(corrs, *, gauge: Gauge | None = None, backend: str = "elimination",
             fallback: bool = True, box=LAMBDA_BOX) -> list[ModelHypothesis]:
    return _solve_family(SolverKind.H4, corrs, gauge, backend, fallback, box)


SOLVERS = {
    SolverKind.H2LU: solve_h2lu,
    SolverKind.H25: solve_h25,
    SolverKind.H3: solve_h3,
    SolverKind.H35: solve_h35,
    SolverKind.H4: solve_h4,
}


def run_solver(kind, corrs, **kw) -> list[ModelHypothesis]:
    kind = SolverKind.parse(kind)
    if kind is SolverKind.H2LU:
        return solve_h2lu(corrs)
    return SOLVERS[kind](corrs, **kw)
