"""Sparse multivariate polynomials with float coefficients."""

from __future__ import annotations

from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_DEGREE = 8


def grevlex_key(exps: tuple[int, ...]):
    # sort with reverse=True to get grevlex-descending order
    return (sum(exps), tuple(-e for e in reversed(exps)))


class MultiPoly:
    __slots__ = ("variables", "terms")

    def __init__(self, variables: Sequence[str], terms: Mapping[tuple[int, ...], float] | None = None):
        self.variables = tuple(variables)
        n = len(self.variables)
        clean = {}
        for e, c in (terms or {}).items():
            e = tuple(int(k) for k in e)
            if len(e) != n:
                raise ValueError("exponent length does not match variables")
            c = float(c)
            if c != 0.0:
                clean[e] = clean.get(e, 0.0) + c
        self.terms = {e: c for e, c in clean.items() if c != 0.0}
        if self.degree > MAX_DEGREE:
            raise ValueError(f"total degree {self.degree} exceeds {MAX_DEGREE}")

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, variables, c: float) -> "MultiPoly":
        return cls(variables, {(0,) * len(variables): c})

    @classmethod
    def var(cls, variables, name: str) -> "MultiPoly":
        variables = tuple(variables)
        e = [0] * len(variables)
        e[variables.index(name)] = 1
        return cls(variables, {tuple(e): 1.0})

    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            if other.variables != self.variables:
                raise ValueError("polynomials live in different variable sets")
            return other
        return MultiPoly.constant(self.variables, float(other))

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return MultiPoly(self.variables, out)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.variables, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, MultiPoly):
            k = float(other)
            return MultiPoly(self.variables, {e: c * k for e, c in self.terms.items()})
        other = self._coerce(other)
        out: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, 0.0) + c1 * c2
        return MultiPoly(self.variables, out)

    __rmul__ = __mul__

    # inspection -------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def sorted_terms(self) -> list[tuple[tuple[int, ...], float]]:
        return sorted(self.terms.items(), key=lambda t: grevlex_key(t[0]), reverse=True)

    def max_abs_coef(self) -> float:
        return max((abs(c) for c in self.terms.values()), default=0.0)

    def normalized(self) -> "MultiPoly":
        m = self.max_abs_coef()
        return self if m == 0 else self * (1.0 / m)

    def degree_in(self, name: str) -> int:
        k = self.variables.index(name)
        return max((e[k] for e in self.terms), default=0)

    def diff(self, name: str) -> "MultiPoly":
        k = self.variables.index(name)
        out = {}
        for e, c in self.terms.items():
            if e[k]:
                d = list(e)
                d[k] -= 1
                out[tuple(d)] = c * e[k]
        return MultiPoly(self.variables, out)

    def substitute(self, values: Mapping[str, float], variables: Sequence[str] | None = None) -> "MultiPoly":
        """Fix some variables to numbers; the result lives in ``variables``."""
        keep = tuple(v for v in self.variables if v not in values) if variables is None else tuple(variables)
        out: dict[tuple[int, ...], float] = {}
        for e, c in self.terms.items():
            ne = [0] * len(keep)
            for name, k in zip(self.variables, e):
                if name in values:
                    c *= float(values[name]) ** k
                elif k:
                    ne[keep.index(name)] = k
            out[tuple(ne)] = out.get(tuple(ne), 0.0) + c
        return MultiPoly(keep, out)

    def __call__(self, x):
        return PolyMap([self]).eval(x)[..., 0]

    def __repr__(self):
        if not self.terms:
            return "MultiPoly(0)"
        parts = []
        for e, c in self.sorted_terms():
            mono = "*".join(f"{v}^{k}" if k > 1 else v for v, k in zip(self.variables, e) if k)
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return "MultiPoly(" + " ".join(parts) + ")"


def det(matrix: Sequence[Sequence[MultiPoly]]) -> MultiPoly:
    """Determinant of a square polynomial matrix."""
    n = len(matrix)
    return _minors(matrix, [tuple(range(n))])[tuple(range(n))]


def _minors(matrix, row_sets: Iterable[tuple[int, ...]]) -> dict[tuple[int, ...], MultiPoly]:
    """Maximal minors on the first ``k`` columns for each k-row subset.

    Laplace expansion along the last used column, memoized on row subsets, so
    that all the sub-determinants of one matrix share their smaller minors.
    """
    memo: dict[tuple[int, ...], MultiPoly] = {}

    def rec(rows: tuple[int, ...]) -> MultiPoly:
        if rows in memo:
            return memo[rows]
        col = len(rows) - 1
        if col == 0:
            val = matrix[rows[0]][0]
        else:
            val = None
            for pos, r in enumerate(rows):
                entry = matrix[r][col]
                if entry.is_zero():
                    continue
                term = entry * rec(rows[:pos] + rows[pos + 1:])
                if (col - pos) % 2:
                    term = -term
                val = term if val is None else val + term
            if val is None:
                val = MultiPoly(matrix[rows[0]][0].variables)
        memo[rows] = val
        return val

    return {tuple(rs): rec(tuple(rs)) for rs in row_sets}


def maximal_minors(matrix: Sequence[Sequence[MultiPoly]]) -> list[MultiPoly]:
    """All ``ncols x ncols`` minors of a tall matrix, rows in lexicographic order."""
    from itertools import combinations

    m, n = len(matrix), len(matrix[0])
    sets = list(combinations(range(m), n))
    got = _minors(matrix, sets)
    return [got[s] for s in sets]


class PolyMap:
    """A list of polynomials compiled for vectorized evaluation.

    The monomial basis is closed under first derivatives, so the Jacobian is a
    handful of matrix products against one shared monomial vector.
    """

    def __init__(self, polys: Sequence[MultiPoly]):
        if not polys:
            raise ValueError("empty polynomial list")
        self.variables = polys[0].variables
        n = len(self.variables)
        base = {e for p in polys for e in p.terms} | {(0,) * n}
        closed = set(base)
        for e in base:
            for j in range(n):
                if e[j]:
                    d = list(e)
                    d[j] -= 1
                    closed.add(tuple(d))
        monos = sorted(closed)
        index = {e: i for i, e in enumerate(monos)}
        self.exps = np.array(monos, dtype=int).reshape(len(monos), n)
        self.coef = np.zeros((len(polys), len(monos)))
        self.dcoef = np.zeros((n, len(polys), len(monos)))
        for i, p in enumerate(polys):
            if p.variables != self.variables:
                raise ValueError("polynomials live in different variable sets")
            for e, c in p.terms.items():
                self.coef[i, index[e]] = c
                for j in range(n):
                    if e[j]:
                        d = list(e)
                        d[j] -= 1
                        self.dcoef[j, i, index[tuple(d)]] += c * e[j]
        self._maxexp = self.exps.max(axis=0) if len(monos) else np.zeros(n, int)

    def _powers(self, x):
        x = np.asarray(x)
        n = len(self.variables)
        top = int(self._maxexp.max(initial=0))
        pw = np.ones(x.shape[:-1] + (n, top + 1), dtype=x.dtype if np.iscomplexobj(x) else float)
        for k in range(1, top + 1):
            pw[..., k] = pw[..., k - 1] * x
        return pw

    def monomials(self, x):
        pw = self._powers(x)
        out = pw[..., 0, self.exps[:, 0]]
        for j in range(1, len(self.variables)):
            out = out * pw[..., j, self.exps[:, j]]
        return out

    def eval(self, x):
        return self.monomials(x) @ self.coef.T

    def jacobian(self, x):
        """Array of shape ``(..., n_polys, n_vars)``."""
        m = self.monomials(x)
        return np.stack([m @ d.T for d in self.dcoef], axis=-1)

    def eval_and_jacobian(self, x):
        m = self.monomials(x)
        return m @ self.coef.T, np.stack([m @ d.T for d in self.dcoef], axis=-1)
