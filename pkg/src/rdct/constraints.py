"""Per-correspondence constraints and the hidden-variable systems.

For a correspondence ``x~ -> x~'`` with unknown relative scale ``s`` the
undistorted constraint is ``[x']_x (I + s u l^T) x = 0`` with
``x = (x~, y~, 1 + lam r^2)``.  Each of its three rows is linear in
``(u1, u2, u3, 1)``; only two are independent.  Stacking the rows of several
correspondences with the incidence row ``(l1, l2, l3, 0)`` gives matrices
whose rank deficiency encodes the whole problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from .elimination import Eliminator
from .errors import DegenerateCorrespondence
from .geometry import Gauge
from .multipoly import MultiPoly, PolyMap, maximal_minors

# skew rows of [x']_x: 0 -> (0, -w', y'), 1 -> (w', 0, -x'), 2 -> (-y', x', 0)
EQ8_ROWS = (2, 1)


@dataclass(frozen=True)
class PointCorrespondence:
    src: np.ndarray
    dst: np.ndarray
    direction_id: int = 0
    scale_known: bool = True

    def __post_init__(self):
        src = np.asarray(self.src, dtype=float)
        dst = np.asarray(self.dst, dtype=float)
        if src.shape == (3,):
            src = src[:2] / src[2]
        if dst.shape == (3,):
            dst = dst[:2] / dst[2]
        object.__setattr__(self, "src", src.reshape(2))
        object.__setattr__(self, "dst", dst.reshape(2))
        if self.direction_id not in (0, 1):
            raise ValueError("direction_id must be 0 or 1")
        if np.linalg.norm(self.src - self.dst) < 1e-12:
            raise DegenerateCorrespondence("source and destination coincide")


def line_variables(gauge: Gauge) -> tuple[str, str]:
    return ("l1", "l2") if gauge is Gauge.L3_EQ_1 else ("l1", "l3")


def line_polys(variables, gauge: Gauge) -> list[MultiPoly]:
    one = MultiPoly.constant(variables, 1.0)
    if gauge is Gauge.L3_EQ_1:
        return [MultiPoly.var(variables, "l1"), MultiPoly.var(variables, "l2"), one]
    return [MultiPoly.var(variables, "l1"), one, MultiPoly.var(variables, "l3")]


def _lifted(p, variables) -> list[MultiPoly]:
    lam = MultiPoly.var(variables, "lam")
    return [
        MultiPoly.constant(variables, p[0]),
        MultiPoly.constant(variables, p[1]),
        1.0 + lam * float(p @ p),
    ]


def nominal_drop(c: PointCorrespondence, candidates: Sequence[int] = (0, 1, 2)) -> int:
    """Skew row with the smallest magnitude at ``lam = 0`` among ``candidates``."""
    x, y = c.dst
    norms = {0: np.hypot(1.0, y), 1: np.hypot(1.0, x), 2: np.hypot(x, y)}
    return min(candidates, key=lambda k: (norms[k], -k))


def eq6_rows(
    c: PointCorrespondence,
    variables: Sequence[str],
    gauge: Gauge = Gauge.L3_EQ_1,
    scale: str | None = None,
    keep: Sequence[int] | None = None,
) -> list[list[MultiPoly]]:
    """Two independent constraint rows as coefficient lists over ``(u1, u2, u3, 1)``.

    ``scale`` names the unknown relative-scale variable, ``None`` meaning 1.
    ``keep`` selects skew rows explicitly; by default the row smallest at the
    nominal point is dropped and the other two are returned in descending
    row order.
    """
    variables = tuple(variables)
    if np.linalg.norm(c.src - c.dst) < 1e-12:
        raise DegenerateCorrespondence("source and destination coincide")
    if keep is None:
        drop = nominal_drop(c)
        keep = tuple(k for k in (2, 1, 0) if k != drop)
    x = _lifted(c.src, variables)
    xp = _lifted(c.dst, variables)
    l = line_polys(variables, gauge)
    a = l[0] * x[0] + l[1] * x[1] + l[2] * x[2]
    if scale is not None:
        a = a * MultiPoly.var(variables, scale)
    zero = MultiPoly(variables)
    sk = [
        [zero, -xp[2], xp[1]],
        [xp[2], zero, -xp[0]],
        [-xp[1], xp[0], zero],
    ]
    rows = []
    for k in keep:
        rho = sk[k]
        row = [a * rho[j] if not rho[j].is_zero() else zero for j in range(3)]
        row.append(rho[0] * x[0] + rho[1] * x[1] + rho[2] * x[2])
        rows.append(row)
    return rows


def raw_rows(c: PointCorrespondence, variables, gauge=Gauge.L3_EQ_1, scale=None):
    """All three skew rows (rank two); mostly useful for checks."""
    return eq6_rows(c, variables, gauge, scale, keep=(0, 1, 2))


def orth_row(variables, gauge: Gauge) -> list[MultiPoly]:
    return line_polys(variables, gauge) + [MultiPoly(variables)]


@dataclass(frozen=True)
class HiddenVariableSystem:
    kind: str
    gauge: Gauge
    corrs: tuple[PointCorrespondence, ...]
    blocks: tuple[tuple[tuple[MultiPoly, ...], ...], ...]
    unknowns: tuple[str, ...]
    expected_solution_count: int
    kept_row: int | None = None
    row_labels: tuple[tuple[str, ...], ...] = field(default=(), compare=False)

    @property
    def m_rows(self):
        return self.blocks[0] if len(self.blocks) == 1 else self.blocks

    @cached_property
    def equations(self) -> list[MultiPoly]:
        eqs = []
        for block in self.blocks:
            eqs.extend(maximal_minors(block))
        return eqs

    @cached_property
    def saturations(self) -> list[MultiPoly]:
        sats = []
        for block in self.blocks:
            if self.kind == "h35" and block is self.blocks[1]:
                sats.append(block[0][0])
            else:
                sats.append(block[0][0] * block[1][1] - block[0][1] * block[1][0])
        return sats

    @cached_property
    def _entry_maps(self):
        return [PolyMap([e for row in block for e in row]) for block in self.blocks]

    def evaluate(self, point) -> list[np.ndarray]:
        """Numeric value of each block at ``point`` (ordered as ``unknowns``)."""
        point = np.asarray(point, dtype=float)
        out = []
        for block, pm in zip(self.blocks, self._entry_maps):
            out.append(pm.eval(point).reshape(len(block), 4))
        return out

    def null_vectors(self, point) -> list[np.ndarray]:
        """Right null vectors of each block, scaled to last component 1."""
        vecs = []
        for M in self.evaluate(point):
            _, _, vt = np.linalg.svd(M)
            v = vt[-1]
            vecs.append(v[:3] / v[3])
        return vecs

    @cached_property
    def eliminator(self) -> Eliminator:
        src = np.array([c.src for c in self.corrs])
        dst = np.array([c.dst for c in self.corrs])
        return Eliminator(self.kind, src, dst, kept=self.kept_row)

    def eliminate(self) -> np.ndarray:
        """Candidate roots in ``unknowns`` order from the univariate eliminant."""
        el = self.eliminator
        pts = []
        k = self.gauge.index
        free = [i for i in range(3) if i != k]
        for lam in el.real_roots():
            m = el.line(lam)
            if not np.all(np.isfinite(m)) or abs(m[k]) <= 1e-14 * np.linalg.norm(m):
                continue
            l = m / m[k]
            p = [l[free[0]], l[free[1]], lam]
            if len(self.unknowns) == 4:
                s = el.unknown_scale(lam, l)
                if s is None or not np.isfinite(s):
                    continue
                p.append(s)
            pts.append(p)
        return np.array(pts, dtype=float).reshape(-1, len(self.unknowns))

    def poly_system(self, max_solutions: int | None = None):
        from .polysys import PolySystem

        return PolySystem(
            equations=list(self.equations),
            saturations=list(self.saturations),
            unknowns=self.unknowns,
            max_solutions=max_solutions or self.expected_solution_count,
            eliminator=self.eliminate,
        )

    def parameter_vector(self, line, lam, scale=None) -> np.ndarray:
        """Pack a projective line, lambda and optional scale into ``unknowns`` order."""
        l = np.asarray(line, dtype=float)
        l = l / l[self.gauge.index]
        free = [i for i in range(3) if i != self.gauge.index]
        p = [l[free[0]], l[free[1]], float(lam)]
        if len(self.unknowns) == 4:
            p.append(float(scale))
        return np.array(p)


def _check(corrs, n, kind):
    corrs = tuple(corrs)
    if len(corrs) != n:
        raise ValueError(f"{kind} needs {n} correspondences, got {len(corrs)}")
    for c in corrs:
        if np.linalg.norm(c.src - c.dst) < 1e-12:
            raise DegenerateCorrespondence("source and destination coincide")
    return corrs


def _single_row_choice(c: PointCorrespondence) -> int:
    # keep the larger of the two Eq.8-compatible rows at the nominal point
    drop = nominal_drop(c, EQ8_ROWS)
    return EQ8_ROWS[0] if drop == EQ8_ROWS[1] else EQ8_ROWS[1]


def build_M_h3(corrs, gauge: Gauge = Gauge.L3_EQ_1) -> HiddenVariableSystem:
    corrs = _check(corrs, 3, "H3")
    v = line_variables(gauge) + ("lam", "s3")
    R = [eq6_rows(c, v, gauge, scale=("s3" if i == 2 else None), keep=EQ8_ROWS) for i, c in enumerate(corrs)]
    M = [R[0][0], R[1][0], R[0][1], R[1][1], R[2][0], R[2][1], orth_row(v, gauge)]
    labels = ("1a", "2a", "1b", "2b", "3a", "3b", "orth")
    return HiddenVariableSystem("h3", gauge, corrs, (_freeze(M),), v, 2, None, (labels,))


def build_M_h25(corrs, gauge: Gauge = Gauge.L3_EQ_1) -> HiddenVariableSystem:
    corrs = _check(corrs, 3, "H2.5")
    v = line_variables(gauge) + ("lam",)
    k3 = _single_row_choice(corrs[2])
    R = [eq6_rows(c, v, gauge, keep=EQ8_ROWS) for c in corrs[:2]]
    r3 = eq6_rows(corrs[2], v, gauge, keep=(k3,))[0]
    M = [R[0][0], R[1][0], R[0][1], R[1][1], r3, orth_row(v, gauge)]
    labels = ("1a", "2a", "1b", "2b", "3a" if k3 == 2 else "3b", "orth")
    return HiddenVariableSystem("h25", gauge, corrs, (_freeze(M),), v, 4, k3, (labels,))


def build_M_h4(corrs, gauge: Gauge = Gauge.L3_EQ_1) -> HiddenVariableSystem:
    corrs = _check(corrs, 4, "H4")
    v = line_variables(gauge) + ("lam", "s4")
    R = [eq6_rows(c, v, gauge, scale=("s4" if i == 3 else None), keep=EQ8_ROWS) for i, c in enumerate(corrs)]
    M1 = [R[0][0], R[1][0], R[0][1], R[1][1], orth_row(v, gauge)]
    M2 = [R[2][0], R[3][0], R[2][1], R[3][1], orth_row(v, gauge)]
    labels = (("1a", "2a", "1b", "2b", "orth"), ("3a", "4a", "3b", "4b", "orth"))
    return HiddenVariableSystem("h4", gauge, corrs, (_freeze(M1), _freeze(M2)), v, 4, None, labels)


def build_M_h35(corrs, gauge: Gauge = Gauge.L3_EQ_1) -> HiddenVariableSystem:
    corrs = _check(corrs, 4, "H3.5")
    v = line_variables(gauge) + ("lam",)
    k4 = _single_row_choice(corrs[3])
    R = [eq6_rows(c, v, gauge, keep=EQ8_ROWS) for c in corrs[:3]]
    r4 = eq6_rows(corrs[3], v, gauge, keep=(k4,))[0]
    M1 = [R[0][0], R[1][0], R[0][1], R[1][1], orth_row(v, gauge)]
    M2 = [R[2][0], r4, R[2][1], orth_row(v, gauge)]
    labels = (("1a", "2a", "1b", "2b", "orth"), ("3a", "4a" if k4 == 2 else "4b", "3b", "orth"))
    return HiddenVariableSystem("h35", gauge, corrs, (_freeze(M1), _freeze(M2)), v, 6, k4, labels)


BUILDERS = {"h3": build_M_h3, "h25": build_M_h25, "h4": build_M_h4, "h35": build_M_h35}


def _freeze(M):
    return tuple(tuple(r) for r in M)


def subdeterminant_count(system: HiddenVariableSystem) -> int:
    return sum(len(list(combinations(range(len(b)), 4))) for b in system.blocks)
