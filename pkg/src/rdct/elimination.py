"""Hidden-variable elimination of the solver families to a univariate in lambda.

For fixed lambda every undistorted correspondence ``x_i -> x'_i`` spans a
line ``j_i = x_i x x'_i`` through the vanishing direction.  Two such lines
fix the direction ``u``; the position of each point along ``u`` fixes the
product ``c * (l . x_i)``, which is linear in ``m = c * l``.  What is left is
one scalar condition on lambda, a polynomial whose coefficients are obtained
by sampling it on a circle and taking an FFT.  Dividing by ``l . x_i`` is what
removes the parasitic component ``l . x_1 = l . x_2 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Upper bounds on the eliminant degree over every admissible row choice.
DEGREE = {"h3": 2, "h25": 7, "h35": 12, "h4": 6}


def _lift(p, lam):
    lam = np.asarray(lam)
    dt = np.result_type(lam, float)
    out = np.empty(lam.shape + (3,), dtype=dt)
    out[..., 0] = p[0]
    out[..., 1] = p[1]
    out[..., 2] = 1.0 + lam * (p[0] * p[0] + p[1] * p[1])
    return out


def _lift_all(pts, lam):
    """``_lift`` of every row of ``pts``, stacked on a leading axis."""
    lam = np.asarray(lam)
    out = np.empty((len(pts),) + lam.shape + (3,), dtype=np.result_type(lam, float))
    ext = (slice(None),) + (None,) * lam.ndim
    out[..., 0] = pts[ext + (0,)]
    out[..., 1] = pts[ext + (1,)]
    out[..., 2] = 1.0 + lam * (pts[:, 0] ** 2 + pts[:, 1] ** 2)[ext]
    return out


def _cross(a, b):
    # np.cross spends most of its time in axis bookkeeping; this is the hot path
    shape = a.shape if a.shape == b.shape else np.broadcast_shapes(a.shape, b.shape)
    out = np.empty(shape, dtype=a.dtype if a.dtype == b.dtype else np.result_type(a, b))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def _det3(a, b, c):
    return _dot(a, _cross(b, c))


def _dot(a, b):
    return (a * b).sum(axis=-1)


def _best_row(d) -> int:
    return int(np.argmax(np.abs(d).reshape(-1, 3).mean(axis=0)))


@dataclass
class _Chain:
    """Intermediate quantities of the elimination at an array of lambdas."""

    xs: np.ndarray
    xps: np.ndarray
    joins: np.ndarray
    u_hat: np.ndarray
    m: np.ndarray  # proportional to l (and to c * l up to det * e1 * e2)
    det: np.ndarray
    ee: np.ndarray


class Eliminator:
    """Eliminant and back-substitution for one solver family.

    ``kept`` gives the skew-matrix row used for a correspondence that only
    contributes one equation (correspondence 3 of H2.5, 4 of H3.5).
    """

    def __init__(self, kind: str, src, dst, kept: int | None = None):
        if kind not in DEGREE:
            raise ValueError(f"unknown solver family {kind!r}")
        self.kind = kind
        self.src = np.asarray(src, dtype=float)
        self.dst = np.asarray(dst, dtype=float)
        self.kept = kept
        r2 = np.concatenate([(self.src ** 2).sum(1), (self.dst ** 2).sum(1)])
        # lambda ~ 1/r^2 is the natural scale of the problem
        self.rho = 1.0 / max(float(r2.mean()), 1e-6)
        n = DEGREE[kind] + 1
        self._nodes = self.rho * np.exp(2j * np.pi * np.arange(n) / n)
        self._rows = {}
        self._pick_rows()

    # ---------------------------------------------------------------- pieces
    def _chain(self, lam) -> _Chain:
        xs = _lift_all(self.src, lam)
        xps = _lift_all(self.dst, lam)
        joins = _cross(xs, xps)
        uh = _cross(joins[0], joins[1])
        k1, k2 = self._rows.get("k1", 2), self._rows.get("k2", 2)
        e1 = _cross(xps[0], uh)[..., k1]
        e2 = _cross(xps[1], uh)[..., k2]
        n1 = joins[0][..., k1]
        n2 = joins[1][..., k2]
        m = (n1 * e2)[..., None] * _cross(xs[1], uh) + (n2 * e1)[..., None] * _cross(uh, xs[0])
        det = _dot(xs[0], _cross(xs[1], uh))
        return _Chain(xs, xps, joins, uh, m, det, e1 * e2)

    def _pick_rows(self):
        ch = self._chain(self._nodes)
        self._rows["k1"] = _best_row(_cross(ch.xps[0], ch.u_hat))
        self._rows["k2"] = _best_row(_cross(ch.xps[1], ch.u_hat))
        ch = self._chain(self._nodes)
        if self.kind == "h35":
            vh = _cross(ch.joins[2], ch.m)
            self._rows["k3"] = _best_row(_cross(ch.xps[2], vh))
        if self.kind in ("h25", "h35") and self.kept is None:
            raise ValueError(f"{self.kind} needs the kept row of its last correspondence")

    def eliminant(self, lam):
        """The univariate polynomial in lambda, evaluated pointwise."""
        ch = self._chain(lam)
        if self.kind == "h3":
            return _det3(*ch.joins[:3])
        if self.kind == "h4":
            return _det3(ch.joins[2], ch.joins[3], ch.m)
        if self.kind == "h25":
            k = self.kept
            d3 = _cross(ch.xps[2], ch.u_hat)[..., k]
            return _dot(ch.m, ch.xs[2]) * d3 - ch.joins[2][..., k] * ch.det * ch.ee
        # h35
        vh = _cross(ch.joins[2], ch.m)
        k3, k4 = self._rows["k3"], self.kept
        e3 = _cross(ch.xps[2], vh)[..., k3]
        e4 = _cross(ch.xps[3], vh)[..., k4]
        n3 = ch.joins[2][..., k3]
        n4 = ch.joins[3][..., k4]
        return _dot(ch.m, ch.xs[3]) * n3 * e4 - _dot(ch.m, ch.xs[2]) * n4 * e3

    def coefficients(self) -> np.ndarray:
        """Power-basis coefficients in ``mu = lambda / rho`` (low order first)."""
        n = len(self._nodes)
        c = np.fft.fft(self.eliminant(self._nodes)) / n
        return c.real

    # ---------------------------------------------------------------- roots
    def real_roots(self, imag_tol: float = 1e-8, newton_steps: int = 8) -> np.ndarray:
        c = self.coefficients()
        nz = np.nonzero(np.abs(c) > 1e-14 * np.abs(c).max(initial=0.0))[0]
        if len(nz) == 0:
            return np.empty(0)
        c = c[: nz.max() + 1]
        if len(c) < 2:
            return np.empty(0)
        mu = np.polynomial.polynomial.polyroots(c)
        mu = mu[np.abs(mu.imag) <= imag_tol * np.maximum(1.0, np.abs(mu))].real
        lams = self._polish(mu * self.rho, newton_steps)
        return np.sort(lams)

    def _polish(self, lam: np.ndarray, steps: int) -> np.ndarray:
        """Newton on the eliminant itself, derivative by complex step."""
        lam = np.asarray(lam, dtype=float)
        if lam.size == 0:
            return lam
        best = lam.copy()
        fbest = np.full(lam.shape, np.inf)
        active = np.ones(lam.shape, bool)
        for _ in range(steps + 1):
            h = 1e-30 * np.maximum(1.0, np.abs(lam))
            v = self.eliminant(lam + 1j * h)
            # the real part of a complex step is f(lam) to O(h^2)
            f = np.abs(v.real)
            better = active & (f < fbest)
            best[better] = lam[better]
            fbest[better] = f[better]
            d = v.imag / h
            ok = active & (d != 0) & np.isfinite(d)
            step = np.where(ok, v.real / np.where(ok, d, 1.0), 0.0)
            lam = lam - step
            active = ok & (np.abs(step) > 1e-15 * np.maximum(1.0, np.abs(lam)))
            if not active.any():
                break
        return best

    # ---------------------------------------------------------------- back substitution
    def line(self, lam: float) -> np.ndarray:
        """Projective vanishing line at a root (not gauge-normalized)."""
        ch = self._chain(np.array([float(lam)]))
        return ch.m[0].real.astype(float)

    def unknown_scale(self, lam: float, line) -> float | None:
        """The free relative scale of H3 (correspondence 3) or H4 (correspondence 4)."""
        if self.kind not in ("h3", "h4"):
            return None
        lam = float(lam)
        l = np.asarray(line, dtype=float)
        xs = [_lift(p, lam) for p in self.src]
        xps = [_lift(p, lam) for p in self.dst]
        joins = [_cross(a, b) for a, b in zip(xs, xps)]
        if self.kind == "h3":
            ref, other, d = 0, 2, _cross(joins[0], joins[1])
        else:
            ref, other, d = 2, 3, _cross(joins[2], l)
        kappa = []
        for i in (ref, other):
            e = _cross(xps[i], d)
            k = int(np.argmax(np.abs(e)))
            if e[k] == 0:
                return None
            kappa.append(joins[i][k] / e[k])
        a_ref, a_other = l @ xs[ref], l @ xs[other]
        if kappa[0] == 0 or a_other == 0:
            return None
        return float(kappa[1] / kappa[0] * a_ref / a_other)


def numeric_rows(src, dst, lam: float, line, scale: float = 1.0, rows=(2, 1)) -> np.ndarray:
    """Evaluated constraint rows ``[s (l.x) rho_k, rho_k . x]`` of one correspondence."""
    x = _lift(np.asarray(src, float), lam)
    xp = _lift(np.asarray(dst, float), lam)
    a = float(np.asarray(line, float) @ x)
    sk = np.array([[0.0, -xp[2], xp[1]], [xp[2], 0.0, -xp[0]], [-xp[1], xp[0], 0.0]])
    out = np.empty((len(rows), 4))
    for i, k in enumerate(rows):
        out[i, :3] = scale * a * sk[k]
        out[i, 3] = sk[k] @ x
    return out
