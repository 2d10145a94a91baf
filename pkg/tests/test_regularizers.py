import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from spectralpath import regularizers as regs

finite = st.floats(-10, 10, allow_nan=False)
ELLIPSE = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 3.0]])


def all_kinds():
    return [regs.l1(5), regs.linf(5), regs.tv1d(7), regs.tv2d((4, 5)), regs.quadratic(ELLIPSE)]


def test_evaluate_examples():
    assert regs.evaluate(regs.l1(2), [1, -2]) == 3
    assert regs.evaluate(regs.tv1d(4), [0, 1, 1, 0]) == 2
    assert regs.evaluate(regs.quadratic([1, 4]), [1, 1]) == pytest.approx(np.sqrt(5), abs=1e-15)
    assert regs.evaluate(regs.linf(3), [1, -4, 2]) == 4
    img = np.array([[0.0, 1.0], [1.0, 3.0]])
    assert regs.evaluate(regs.tv2d((2, 2)), img) == 1 + 2 + 1 + 2


def test_project_dual_ball_examples():
    assert np.array_equal(regs.project_dual_ball(regs.l1(2), [2, -0.5]), [1, -0.5])
    assert np.allclose(regs.project_dual_ball(regs.linf(2), [2, 0]), [1, 0], atol=1e-15)
    out = regs.project_dual_ball(regs.quadratic([1, 4]), [0, 4])
    assert np.allclose(out, [0, 2], atol=1e-12)


def test_prox_examples():
    assert np.allclose(regs.prox(regs.l1(2), [2, -0.5], 1), [1, 0], atol=1e-15)
    c = np.full(6, 2.5)
    assert np.allclose(regs.prox(regs.tv1d(6), c, 3.0), c, atol=1e-14)
    assert np.allclose(regs.prox(regs.linf(2), [1, 3], 1), [1, 2], atol=1e-14)
    x = np.array([0.3, -1.0])
    assert np.array_equal(regs.prox(regs.l1(2), x, 0.0), x)


def test_membership_examples():
    m = regs.dual_ball_membership(regs.l1(2), [1, 0.5], 1e-8)
    assert m.ok and m.violation == 0
    assert regs.dual_ball_membership(regs.quadratic([1, 4]), [0, 2], 1e-8).ok
    assert regs.dual_ball_membership(regs.tv1d(2), [1, -1], 1e-8).ok
    assert not regs.dual_ball_membership(regs.tv1d(2), [2, -2], 1e-8).ok
    bad = regs.dual_ball_membership(regs.l1(2), [3, 0], 1e-8)
    assert not bad.ok and bad.violation == pytest.approx(2.0)
    # 2-d: divergence of a feasible field is inside, a non-zero-mean signal is not
    J = regs.tv2d((3, 3))
    z = np.clip(np.random.default_rng(0).standard_normal((2, 3, 3)), -0.9, 0.9)
    z = regs.project_dual_ball(J, z)
    assert regs.dual_ball_membership(J, regs.diff_adjoint(J, z), 1e-6).ok
    assert not regs.dual_ball_membership(J, np.ones((3, 3)), 1e-6).ok


def test_nullspace_examples():
    assert regs.nullspace_basis(regs.l1(3)) == []
    (b,) = regs.nullspace_basis(regs.tv1d(4))
    assert np.allclose(b, 0.5)
    (b,) = regs.nullspace_basis(regs.tv2d((2, 2)))
    assert np.allclose(b, 0.5) and b.shape == (2, 2)


def test_shape_and_construction_errors():
    with pytest.raises(ValueError):
        regs.evaluate(regs.l1(3), [1.0, 2.0])
    with pytest.raises(ValueError):
        regs.quadratic([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        regs.quadratic([1.0, -1.0])
    with pytest.raises(ValueError):
        regs.from_name("tgv", 3)
    with pytest.raises(ValueError):
        regs.prox(regs.l1(2), [1.0, 1.0], -1.0)


def test_diff_adjoint_pairs(rng):
    for J in (regs.tv1d(9), regs.tv2d((4, 6))):
        for _ in range(20):
            u = rng.standard_normal(J.shape)
            z = rng.standard_normal(J.dual_shape)
            z = z if J.kind == regs.TV1D else regs.project_dual_ball(J, z, radius=1e9)
            assert abs(np.vdot(regs.diff(J, u), z) - np.vdot(u, regs.diff_adjoint(J, z))) < 1e-11


@pytest.mark.parametrize("c", [-2, -1, 0, 0.5, 3])
def test_homogeneity(c, rng):
    for J in all_kinds():
        u = rng.standard_normal(J.shape)
        assert regs.evaluate(J, c * u) == pytest.approx(abs(c) * regs.evaluate(J, u), rel=1e-14, abs=1e-14)


def test_nullspace_translation_and_triangle(rng):
    for J in all_kinds():
        u, v = rng.standard_normal(J.shape), rng.standard_normal(J.shape)
        assert regs.evaluate(J, u + v) <= regs.evaluate(J, u) + regs.evaluate(J, v) + 1e-12
        for b in regs.nullspace_basis(J):
            assert regs.evaluate(J, u + 3.7 * b) == pytest.approx(regs.evaluate(J, u), abs=1e-12)
            assert regs.evaluate(J, b) < 1e-14


@pytest.mark.parametrize("idx", range(5))
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.05, 5.0))
def test_prox_characterization(idx, seed, s):
    J = all_kinds()[idx]
    x = 2 * np.random.default_rng(seed).standard_normal(J.shape)
    v = regs.prox(J, x, s)
    p = (x - v) / s
    assert regs.dual_ball_membership(J, p, 1e-6).ok
    Jv = regs.evaluate(J, v)
    assert abs(np.vdot(p, v) - Jv) <= 1e-6 * (1 + Jv)


@pytest.mark.parametrize("idx", range(5))
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.05, 5.0))
def test_prox_nonexpansive(idx, seed, s):
    J = all_kinds()[idx]
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(J.shape), r.standard_normal(J.shape)
    d = np.linalg.norm(regs.prox(J, x, s) - regs.prox(J, y, s))
    # 2-d prox is inexact; its error enters twice
    slack = 1e-10 if J.kind != regs.TV2D else 1e-6
    assert d <= np.linalg.norm(x - y) + slack


@pytest.mark.parametrize("idx", [0, 1, 4])
@given(seed=st.integers(0, 2**32 - 1), s=st.floats(0.05, 5.0))
def test_moreau_consistency_closed_forms(idx, seed, s):
    J = all_kinds()[idx]
    x = 2 * np.random.default_rng(seed).standard_normal(J.shape)
    ref = x - s * regs.project_dual_ball(J, x / s)
    assert np.linalg.norm(regs.prox(J, x, s) - ref) <= 1e-8


def test_moreau_consistency_tv2d(rng):
    J = regs.tv2d((5, 5))
    for _ in range(5):
        x, s = rng.standard_normal(J.shape), rng.uniform(0.1, 1.0)
        # independent reference: long run of the dual iteration
        res = regs.tv_dual_projection(J, x / s, max_iter=200000, gap_tol=1e-20)
        ref = x - s * regs.diff_adjoint(J, res.z)
        assert np.linalg.norm(regs.prox(J, x, s) - ref) <= 1e-8


def test_taut_string_matches_iterative_projection(rng):
    J = regs.tv1d(30)
    for _ in range(10):
        x, s = rng.standard_normal(30), rng.uniform(0.05, 2.0)
        res = regs.tv_dual_projection(J, x / s, max_iter=200000, gap_tol=1e-16)
        ref = x - s * regs.diff_adjoint(J, res.z)
        assert np.linalg.norm(regs.taut_string(x, s) - ref) <= 1e-6


def test_taut_string_brute_force_small():
    # exhaustive oracle: scipy minimize on the (nonsmooth) objective is too loose,
    # so compare against a quadratic program solved by the dual clamp on n=3
    y = np.array([0.0, 5.0, 0.0])
    assert np.allclose(regs.taut_string(y, 1.0), [1.0, 3.0, 1.0], atol=1e-14)
    assert np.allclose(regs.taut_string(y, 10.0), [5 / 3] * 3, atol=1e-14)


@given(arrays(np.float64, 6, elements=finite), st.floats(0.0, 20.0))
def test_l1_ball_projection_kkt(q, radius):
    x = regs.project_l1_ball(q, radius)
    assert np.abs(x).sum() <= radius + 1e-9
    # KKT: q - x is a scaled sign vector of x on its support
    if np.abs(q).sum() > radius:
        g = q - x
        theta = np.abs(g).max()
        on = np.abs(x) > 1e-12
        assert np.allclose(g[on], theta * np.sign(x[on]), atol=1e-9)


@given(arrays(np.float64, 3, elements=finite))
def test_ellipsoid_projection_idempotent_and_on_boundary(q):
    J = regs.quadratic(ELLIPSE)
    x = regs.project_dual_ball(J, q)
    g = float(x @ np.linalg.solve(ELLIPSE, x))
    assert g <= 1 + 1e-9
    assert np.allclose(regs.project_dual_ball(J, x), x, atol=1e-10)
    if float(q @ np.linalg.solve(ELLIPSE, q)) > 1:
        assert g == pytest.approx(1.0, abs=1e-9)
