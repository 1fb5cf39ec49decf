"""Real roots of small overdetermined polynomial systems with saturation.

Two candidate generators feed one filter.  Systems that carry an
``eliminator`` (the hidden-variable families) hand over candidates from
their univariate eliminant.  Anything else goes through a Macaulay null-space
solver: build the matrix of monomial multiples, take its numerical null
space, find the degree at which the rank of the degree-truncated null space
stops growing (the "gap" separating affine roots from those at infinity),
and read the roots from a shift eigenproblem.

Every candidate is polished by Gauss-Newton, then kept only if all normalized
equations are small and every normalized saturation polynomial is not.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg

from .errors import RankDeficient
from .multipoly import MultiPoly, PolyMap

log = logging.getLogger(__name__)

SATURATION_FLOOR = 1e-8
IMAG_TOL = 1e-8
EXACT_TOL = 1e-9
# roots whose normalized Jacobian is this close to rank deficiency are treated
# as lying on a positive-dimensional set at working precision
ISOLATION_FLOOR = 1e-7


@dataclass
class PolySystem:
    equations: list[MultiPoly]
    saturations: list[MultiPoly] = field(default_factory=list)
    unknowns: tuple[str, ...] = ()
    max_solutions: int = 1
    eliminator: Callable[[], np.ndarray] | None = None

    def __post_init__(self):
        if not self.equations:
            raise ValueError("no equations")
        vs = self.equations[0].variables
        if not self.unknowns:
            self.unknowns = vs
        self.unknowns = tuple(self.unknowns)
        for p in list(self.equations) + list(self.saturations):
            if p.variables != self.unknowns:
                raise ValueError("all polynomials must share the unknowns")
        if len(self.unknowns) > 4:
            raise ValueError("at most four unknowns are supported")
        if self.max_solutions < 1:
            raise ValueError("max_solutions must be positive")

    def normalized_maps(self):
        eqs = [e.normalized() for e in self.equations if not e.is_zero()]
        sats = [s.normalized() for s in self.saturations]
        return PolyMap(eqs), (PolyMap(sats) if sats else None)


@dataclass
class SolutionSet:
    points: np.ndarray
    residuals: np.ndarray
    saturation: np.ndarray
    condition: float
    unknowns: tuple[str, ...] = ()
    status: str = "ok"  # "ok" or "no_real_solution"
    backend: str = ""

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def contains(self, point, tol: float = 1e-6) -> bool:
        if len(self.points) == 0:
            return False
        return bool((np.abs(self.points - np.asarray(point)).max(axis=1) < tol).any())


# ---------------------------------------------------------------- shared filtering

def _gauss_newton(F: PolyMap, x: np.ndarray, steps: int = 6) -> np.ndarray:
    x = np.array(x, dtype=float, copy=True)
    if x.size == 0:
        return x
    r = np.abs(F.eval(x)).max(axis=-1)
    for _ in range(steps):
        f, J = F.eval_and_jacobian(x)
        dx = -(np.linalg.pinv(J) @ f[..., None])[..., 0]
        xn = x + dx
        rn = np.abs(F.eval(xn)).max(axis=-1)
        better = np.isfinite(rn) & (rn < r)
        if not better.any():
            break
        x[better] = xn[better]
        r[better] = rn[better]
    return x


def _finalize(sys: PolySystem, cand: np.ndarray, tol: float, sat_floor: float,
              backend: str, cap: bool = True, dedupe_tol: float = 1e-6) -> SolutionSet:
    n = len(sys.unknowns)
    F, G = sys.normalized_maps()
    cand = np.asarray(cand, dtype=float).reshape(-1, n)
    cand = cand[np.all(np.isfinite(cand), axis=1)]
    cand = _gauss_newton(F, cand)
    res = np.abs(F.eval(cand)).max(axis=-1) if len(cand) else np.empty(0)
    # A root must polish to (near) machine precision; small-but-stagnant
    # residuals mark shallow valleys of the normalized equations, not roots.
    tol = min(tol, EXACT_TOL)
    sat = np.abs(G.eval(cand)).min(axis=-1) if (G is not None and len(cand)) else np.full(len(cand), np.inf)
    keep = (res < tol) & (sat > sat_floor)
    if keep.any():
        sv = np.linalg.svd(F.jacobian(cand[keep]), compute_uv=False)
        iso = np.zeros_like(keep)
        iso[keep] = sv[:, -1] > ISOLATION_FLOOR * sv[:, 0]
        keep &= iso
    pts, res, sat = cand[keep], res[keep], sat[keep]
    # merge duplicates, keeping the smaller residual
    order = np.argsort(res, kind="stable")
    chosen: list[int] = []
    for i in order:
        if all(np.abs(pts[i] - pts[j]).max() > dedupe_tol * (1 + np.abs(pts[j]).max()) for j in chosen):
            chosen.append(i)
    if cap and len(chosen) > sys.max_solutions:
        log.debug("%d roots pass the filter, keeping the best %d", len(chosen), sys.max_solutions)
        chosen = chosen[: sys.max_solutions]
    pts, res, sat = pts[chosen], res[chosen], sat[chosen]
    lex = np.lexsort(pts.T[::-1]) if len(pts) else np.empty(0, int)
    pts, res, sat = pts[lex], res[lex], sat[lex]
    cond = 0.0
    if len(pts):
        J = F.jacobian(pts)
        s = np.linalg.svd(J, compute_uv=False)
        cond = float(np.max(s[:, 0] / np.maximum(s[:, -1], 1e-300)))
    return SolutionSet(pts.reshape(-1, n), res, sat, cond, sys.unknowns,
                       "ok" if len(pts) else "no_real_solution", backend)


# ---------------------------------------------------------------- Macaulay backend

def _monomials(n: int, D: int) -> list[tuple[int, ...]]:
    out = []
    for d in range(D + 1):
        block = []
        for c in combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in c:
                e[i] += 1
            block.append(tuple(e))
        out.extend(sorted(block, reverse=True))
    return out


def _macaulay_candidates(eqs: Sequence[MultiPoly], n: int, degree: int, escalations: int = 3,
                         rng: np.random.Generator | None = None, max_columns: int = 4000) -> np.ndarray:
    rng = rng or np.random.default_rng(0)
    for D in range(degree, degree + escalations + 1):
        monos = _monomials(n, D)
        if len(monos) > max_columns:
            break
        index = {e: i for i, e in enumerate(monos)}
        deg = np.array([sum(e) for e in monos])
        rows = []
        for f in eqs:
            df = f.degree
            for shift in _monomials(n, D - df):
                row = np.zeros(len(monos))
                for e, c in f.terms.items():
                    row[index[tuple(a + b for a, b in zip(e, shift))]] = c
                rows.append(row)
        M = np.array(rows).reshape(-1, len(monos))
        if M.shape[0]:
            M = M / np.linalg.norm(M, axis=1, keepdims=True)
            _, s, vt = np.linalg.svd(M)
            tol = max(M.shape) * np.finfo(float).eps * 1e3 * (s[0] if len(s) else 1.0)
            rank = int((s > tol).sum())
            Z = vt[rank:].T
        else:
            Z = np.eye(len(monos))
        if Z.shape[1] == 0:
            return np.empty((0, n))
        ranks = []
        for k in range(D + 1):
            sub = Z[deg <= k]
            sv = np.linalg.svd(sub, compute_uv=False)
            ranks.append(int((sv > 1e-8 * sv[0]).sum()) if len(sv) else 0)
        gap = next((k for k in range(D) if ranks[k] == ranks[k + 1]), None)
        if gap is None:
            continue
        delta = ranks[gap]
        low = deg <= gap + 1
        U, _, _ = np.linalg.svd(Z[low], full_matrices=False)
        W = U[:, :delta]
        sub_monos = [m for m, ok in zip(monos, low) if ok]
        sub_index = {e: i for i, e in enumerate(sub_monos)}
        basis_rows = np.nonzero(deg[low] <= gap)[0]
        _, _, piv = scipy.linalg.qr(W[basis_rows].T, pivoting=True)
        B = basis_rows[piv[:delta]]
        coeffs = rng.standard_normal(n)
        shift = np.zeros((delta, delta))
        for j in range(n):
            idx = []
            for b in B:
                e = list(sub_monos[b])
                e[j] += 1
                idx.append(sub_index[tuple(e)])
            shift += coeffs[j] * W[idx]
        WB = W[B]
        try:
            _, vecs = scipy.linalg.eig(shift, WB)
        except (np.linalg.LinAlgError, ValueError):
            continue
        V = W @ vecs
        one = sub_index[(0,) * n]
        lin = [sub_index[tuple(1 if i == j else 0 for i in range(n))] for j in range(n)]
        den = V[one]
        ok = np.abs(den) > 1e-10 * np.linalg.norm(V, axis=0)
        roots = (V[lin][:, ok] / den[ok]).T
        scale = np.maximum(1.0, np.abs(roots).max(axis=1))
        real = np.abs(roots.imag).max(axis=1) <= IMAG_TOL * scale * 1e2
        return roots[real].real
    raise RankDeficient("no rank gap found: the system is not zero-dimensional at working precision")


# ---------------------------------------------------------------- public API

def solve(sys: PolySystem, tol: float = 1e-6, *, strategy: str = "auto",
          sat_floor: float = SATURATION_FLOOR) -> SolutionSet:
    """All isolated real roots of ``sys`` off the saturated component.

    ``strategy`` is ``"auto"`` (elimination when the system provides it),
    ``"elimination"`` or ``"macaulay"``.
    """
    if strategy not in ("auto", "elimination", "macaulay"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "elimination" and sys.eliminator is None:
        raise ValueError("system carries no eliminator")
    if strategy != "macaulay" and sys.eliminator is not None:
        cand = sys.eliminator()
        backend = "elimination"
    else:
        eqs = [e.normalized() for e in sys.equations if not e.is_zero()]
        dmax = max(e.degree for e in eqs)
        cand = _macaulay_candidates(eqs, len(sys.unknowns), dmax + 2)
        backend = "macaulay"
    return _finalize(sys, cand, tol, sat_floor, backend)


DEFAULT_BOX = {"l1": (-10.0, 10.0), "l2": (-10.0, 10.0), "l3": (-10.0, 10.0),
               "lam": (-20.0, 2.0), "s3": (-5.0, 5.0), "s4": (-5.0, 5.0)}


def _box_for(unknowns, box):
    box = dict(box or {})
    lo, hi = [], []
    for v in unknowns:
        a, b = box.get(v, DEFAULT_BOX.get(v, (-5.0, 5.0)))
        lo.append(a)
        hi.append(b)
    return np.array(lo), np.array(hi)


def oracle_solve(sys: PolySystem, tol: float = 1e-6, n_starts: int = 1024, *,
                 box: Mapping[str, tuple[float, float]] | None = None, seed: int = 0,
                 max_iter: int = 150, sat_floor: float = SATURATION_FLOOR) -> SolutionSet:
    """Multi-start damped Newton (Levenberg-Marquardt) on the normalized equations.

    Independent of :func:`solve`; meant as a cross-check.  Starts are uniform
    in ``box``; converged points are clustered at 1e-6 and filtered like
    :func:`solve`, except that the solution cap is not applied, so an excess
    of roots stays visible.
    """
    F, _ = sys.normalized_maps()
    lo, hi = _box_for(sys.unknowns, box)
    rng = np.random.default_rng(seed)
    x = lo + (hi - lo) * rng.random((n_starts, len(lo)))
    mu = np.full(n_starts, 1e-3)
    f = F.eval(x)
    cost = (f * f).sum(axis=1)
    n = len(lo)
    eye = np.eye(n)
    active = np.arange(n_starts)
    checkpoint = cost.copy()
    for it in range(1, max_iter + 1):
        xa, fa = x[active], f[active]
        J = F.jacobian(xa)
        Jt = J.transpose(0, 2, 1)
        JtJ = Jt @ J
        g = (Jt @ fa[..., None])[..., 0]
        diag = np.diagonal(JtJ, axis1=1, axis2=2)
        A = JtJ + mu[active, None, None] * (diag[:, :, None] * eye + eye)
        try:
            dx = -np.linalg.solve(A, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            dx = -np.stack([np.linalg.lstsq(Ak, gk, rcond=None)[0] for Ak, gk in zip(A, g)])
        xn = xa + dx
        fn = F.eval(xn)
        cn = (fn * fn).sum(axis=1)
        acc = np.isfinite(cn) & (cn < cost[active])
        idx = active[acc]
        x[idx], f[idx], cost[idx] = xn[acc], fn[acc], cn[acc]
        mu[active] = np.where(acc, np.maximum(mu[active] / 3.0, 1e-12), np.minimum(mu[active] * 4.0, 1e12))
        # retire starts that have converged, stalled, or wandered far outside the box
        width = hi - lo
        far = np.any((x[active] < lo - 10 * width) | (x[active] > hi + 10 * width), axis=1)
        done = (cost[active] < 1e-28) | (mu[active] >= 1e12) | far
        if it % 10 == 0:
            # valley crawlers: no halving of the cost in ten iterations
            done |= cost[active] > 0.5 * checkpoint[active]
            checkpoint[active] = cost[active]
        active = active[~done]
        if active.size == 0:
            break
    conv = np.abs(f).max(axis=1) < tol
    return _finalize(sys, x[conv], tol, sat_floor, "oracle", cap=False, dedupe_tol=1e-6)


def in_box(points: np.ndarray, unknowns, box=None) -> np.ndarray:
    lo, hi = _box_for(unknowns, box)
    points = np.asarray(points).reshape(-1, len(lo))
    return np.all((points >= lo) & (points <= hi), axis=1)


def same_solutions(a: SolutionSet, b: SolutionSet, tol: float = 1e-5, box=None) -> bool:
    """Set equality of two solution sets inside ``box``, per-coordinate ``tol``."""
    pa = a.points[in_box(a.points, a.unknowns, box)] if len(a.points) else a.points
    pb = b.points[in_box(b.points, b.unknowns, box)] if len(b.points) else b.points
    if len(pa) != len(pb):
        return False
    used = set()
    for p in pa:
        hit = [j for j, q in enumerate(pb) if j not in used and np.abs(p - q).max() < tol]
        if not hit:
            return False
        used.add(hit[0])
    return True
