import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from rdct.constraints import BUILDERS, PointCorrespondence, eq6_rows, raw_rows
from rdct.elimination import DEGREE, Eliminator
from rdct.errors import DegenerateCorrespondence, RankDeficient
from rdct.multipoly import MultiPoly, PolyMap, det
from rdct.polysys import PolySystem, oracle_solve, same_solutions, solve
from rdct.synth import minimal_instance, trial_rng

V = ("x", "y")
x, y = MultiPoly.var(V, "x"), MultiPoly.var(V, "y")
small = st.floats(-3, 3, allow_nan=False)


@given(small, small)
def test_multipoly_matches_sympy(a, b):
    X, Y = sp.symbols("x y")
    p = (x * x * y - 3.0 * y + 2.0) * (x - y)
    ref = sp.expand((X ** 2 * Y - 3 * Y + 2) * (X - Y))
    assert p([a, b]) == pytest.approx(float(ref.subs({X: a, Y: b})), abs=1e-9)
    assert p.diff("x")([a, b]) == pytest.approx(float(sp.diff(ref, X).subs({X: a, Y: b})), abs=1e-9)


@given(st.lists(small, min_size=2, max_size=2))
def test_polymap_jacobian_matches_finite_differences(pt):
    F = PolyMap([x * x * y - 1.0, x - y * y * y + 0.5 * x * y])
    p = np.array(pt)
    f, J = F.eval_and_jacobian(p[None])
    h = 1e-6
    num = np.stack([(F.eval((p + h * e)[None]) - F.eval((p - h * e)[None]))[0] / (2 * h) for e in np.eye(2)], axis=1)
    assert np.allclose(J[0], num, atol=1e-5, rtol=1e-6)
    assert np.allclose(f[0], [p[0] ** 2 * p[1] - 1, p[0] - p[1] ** 3 + 0.5 * p[0] * p[1]])


def test_det_of_polynomial_matrix():
    M = [[x, y], [y, x]]
    assert det(M)([2.0, 1.0]) == pytest.approx(3.0)


def test_degree_limit():
    with pytest.raises(ValueError):
        MultiPoly(V, {(9, 0): 1.0})


def _circle_line():
    # x^2 + y^2 = 2, x = y  ->  (1, 1), (-1, -1)
    return PolySystem([x * x + y * y - 2.0, x - y], unknowns=V, max_solutions=2)


def test_macaulay_backend_finds_all_roots():
    sol = solve(_circle_line(), strategy="macaulay")
    pts = sol.points[np.argsort(sol.points[:, 0])]
    assert np.allclose(pts, [[-1, -1], [1, 1]], atol=1e-9)


def test_saturation_removes_spurious_component():
    # x (x - 1) = 0, y = x; saturating by x keeps only (1, 1)
    sys_ = PolySystem([x * (x - 1.0), y - x], saturations=[x], unknowns=V, max_solutions=2)
    sol = solve(sys_, strategy="macaulay")
    assert np.allclose(sol.points, [[1.0, 1.0]])
    assert np.all(sol.saturation > 1e-8)


def test_positive_dimensional_system_is_rejected():
    with pytest.raises(RankDeficient):
        solve(PolySystem([x - y], unknowns=V), strategy="macaulay")


def test_oracle_agrees_on_small_system():
    a = solve(_circle_line(), strategy="macaulay")
    b = oracle_solve(_circle_line(), n_starts=128, box={"x": (-3, 3), "y": (-3, 3)})
    assert same_solutions(a, b, box={"x": (-3, 3), "y": (-3, 3)})


def test_no_real_solution_status():
    sys_ = PolySystem([x * x + 1.0, y], unknowns=V)
    sol = solve(sys_, strategy="macaulay")
    assert len(sol) == 0 and sol.status == "no_real_solution"


@pytest.mark.parametrize("kind", ["H2.5", "H3", "H3.5", "H4"])
def test_constraint_blocks_are_rank_deficient_at_truth(scene_factory, kind):
    scene = scene_factory(seed=3)
    inst = minimal_instance(scene, kind, trial_rng(3, 1))
    hv = BUILDERS[kind.lower().replace(".", "")](inst.corrs)
    truth = hv.parameter_vector(inst.line, inst.lam, inst.scale)
    for M in hv.evaluate(truth):
        s = np.linalg.svd(M / np.linalg.norm(M, axis=1, keepdims=True), compute_uv=False)
        assert s[-1] < 1e-9 * s[0]
    assert all(abs(e(truth)) < 1e-9 * max(e.max_abs_coef(), 1) for e in hv.equations)


@pytest.mark.parametrize("fam", sorted(DEGREE))
def test_eliminant_degree_bound(scene_factory, fam):
    kind = {"h25": "H2.5", "h3": "H3", "h35": "H3.5", "h4": "H4"}[fam]
    inst = minimal_instance(scene_factory(seed=4), kind, trial_rng(4, 0))
    hv = BUILDERS[fam](inst.corrs)
    el = Eliminator(fam, np.array([c.src for c in inst.corrs]), np.array([c.dst for c in inst.corrs]), hv.kept_row)
    c = el.coefficients()
    assert len(np.trim_zeros(np.where(np.abs(c) > 1e-12 * np.abs(c).max(), c, 0), "b")) <= DEGREE[fam] + 1
    assert np.any(np.abs(el.real_roots() - inst.lam) < 1e-8)


def test_raw_rows_have_rank_two():
    c = PointCorrespondence([0.1, 0.2], [0.15, 0.1])
    v = ("l1", "l2", "lam")
    rows = raw_rows(c, v)
    pt = [0.3, -0.2, -1.5]
    M = np.array([[e(pt) for e in r[:3]] for r in rows])
    assert np.linalg.matrix_rank(M, tol=1e-12) == 2
    assert len(eq6_rows(c, v)) == 2


def test_coincident_points_are_degenerate():
    with pytest.raises(DegenerateCorrespondence):
        PointCorrespondence([0.1, 0.1], [0.1, 0.1])
