import numpy as np
import pytest
from hypothesis import given, strategies as st

from spectralpath import linops
from spectralpath import regularizers as regs
from spectralpath.eigen import singular_path_coefficient, verify_singular_vector
from spectralpath.solver import SolveOptions, check_optimality, energy, fidelity_prox, solve

ID2 = linops.identity(2)


def soft(x, s):
    return np.sign(x) * np.maximum(np.abs(x) - s, 0)


def test_fidelity_prox_examples():
    assert np.allclose(fidelity_prox([2, 0], [0, 0], 2, 1), [1, 0], atol=1e-15)
    w, f = np.array([2.0, 0.0]), np.zeros(2)
    assert np.allclose(fidelity_prox(w, f, 1, 1), 0.5 * w, atol=1e-15)
    assert fidelity_prox([2.0], [0.0], 4, 1)[0] == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(fidelity_prox([1.0, 1.0], [1.0, 1.0], 1, 3), [1, 1])
    with pytest.raises(ValueError):
        fidelity_prox([1.0], [0.0], 0.5, 1)


@given(seed=st.integers(0, 2**32 - 1), alpha=st.sampled_from([1.0, 1.5, 2.0, 3.0, 4.0]),
       s=st.floats(0.0, 10.0))
def test_fidelity_prox_optimality_and_nonexpansive(seed, alpha, s):
    r = np.random.default_rng(seed)
    w, w2, f = r.standard_normal(4), r.standard_normal(4), r.standard_normal(4)
    v = fidelity_prox(w, f, alpha, s)
    v2 = fidelity_prox(w2, f, alpha, s)
    assert np.linalg.norm(v - v2) <= np.linalg.norm(w - w2) + 1e-10
    obj = lambda x: 0.5 * np.sum((x - w) ** 2) + s / alpha * np.linalg.norm(x - f) ** alpha
    for _ in range(5):
        probe = v + 1e-3 * r.standard_normal(4)
        assert obj(v) <= obj(probe) + 1e-12


def test_solve_examples():
    res = solve(ID2, regs.l1(2), [2, -0.5], 2, 1, 1.0)
    assert res.converged and np.allclose(res.u, [1, 0], atol=1e-7)
    e1 = np.array([1.0, 0.0])
    r1 = solve(ID2, regs.l1(2), e1, 1, 1, 0.5)
    r2 = solve(ID2, regs.l1(2), e1, 1, 1, 1.5)
    assert r1.converged and np.allclose(r1.u, e1, atol=1e-7)
    assert r2.converged and np.allclose(r2.u, 0, atol=1e-7)
    r3 = solve(ID2, regs.tv1d(2), [1, 3], 2, 1, 1.5)
    assert r3.converged and np.allclose(r3.u, [2, 2], atol=1e-7)


def test_t_zero_is_least_squares():
    A = linops.dense([[2, 1], [1, 1], [0, 1]])
    f = np.array([1.0, 2.0, 3.0])
    res = solve(A, regs.l1(2), f, 2, 1, 0.0)
    ref = np.linalg.lstsq(linops.materialize(A), f, rcond=None)[0]
    assert np.allclose(res.u, ref, atol=1e-12)


def test_input_errors():
    with pytest.raises(ValueError):
        solve(ID2, regs.l1(2), [1, 2], 0.5, 1, 1.0)
    with pytest.raises(ValueError):
        solve(ID2, regs.l1(2), [1, 2], 2, 3, 1.0)
    with pytest.raises(ValueError):
        solve(ID2, regs.l1(2), [1, 2], 2, 1, -1.0)
    with pytest.raises(linops.ShapeError):
        solve(ID2, regs.l1(2), [1, 2, 3], 2, 1, 1.0)
    with pytest.raises(ValueError):
        solve(ID2, regs.l1(2), [1, 2], 2, 1, 1.0, SolveOptions(gap_tol=0.0))


def test_nonconvergence_is_flagged():
    A = linops.conv1d([0.3, 0.5, 0.2], 20)
    f = np.sin(np.arange(22.0))
    res = solve(A, regs.tv1d(20), f, 1.5, 1, 0.3, SolveOptions(max_iters=20))
    assert not res.converged and "not converged" in res.message
    assert res.violation > 1e-8


def test_check_optimality_examples():
    J = regs.l1(2)
    f = np.array([2.0, -0.5])
    assert check_optimality(ID2, J, f, 2, 1, 1.0, np.array([1.0, 0.0])).violation <= 1e-8
    rep = check_optimality(ID2, J, f, 2, 1, 1.0, f)
    assert not rep.ok
    rep = check_optimality(ID2, J, f, 2, 1, 1.0, np.array([1.0, 0.0]))
    assert rep.ok and np.allclose(rep.p, [1, -0.5])


def test_check_optimality_alpha_gt1_exact_fit_fails():
    rep = check_optimality(ID2, regs.l1(2), np.array([1.0, 0.0]), 2, 1, 0.5, np.array([1.0, 0.0]))
    assert not rep.ok


def test_check_optimality_rejects_t_zero():
    with pytest.raises(ValueError):
        check_optimality(ID2, regs.l1(2), np.ones(2), 2, 1, 0.0, np.ones(2))


@pytest.mark.parametrize("J", [regs.l1(8), regs.linf(8), regs.tv1d(8),
                               regs.quadratic(np.diag(np.arange(1.0, 9.0)))],
                         ids=lambda J: J.kind)
def test_solver_matches_prox(J, rng):
    A = linops.identity(8)
    for _ in range(3):
        f = 2 * rng.standard_normal(8)
        t = rng.uniform(0.1, 2.0)
        res = solve(A, J, f, 2, 1, t)
        assert res.converged
        assert np.linalg.norm(res.u - regs.prox(J, f, t)) <= 1e-6


def test_solver_matches_prox_tv2d(rng):
    J = regs.tv2d((6, 6))
    f = rng.standard_normal((6, 6))
    res = solve(linops.identity((6, 6)), J, f, 2, 1, 0.3)
    assert res.converged
    assert np.linalg.norm(res.u - regs.prox(J, f, 0.3)) <= 1e-6 * 6


@pytest.mark.parametrize("alpha,beta", [(1, 1), (1.5, 1), (2, 1), (3, 1), (2, 2)])
def test_energy_descent_certificate(alpha, beta, rng):
    A = linops.conv1d([0.25, 0.5, 0.25], 12)
    J = regs.tv1d(12)
    f = rng.standard_normal(14)
    t = 0.2
    res = solve(A, J, f, alpha, beta, t)
    assert res.converged
    e = energy(A, J, f, alpha, beta, t, res.u)
    for scale in (1e-4, 1e-2, 1.0):
        for _ in range(20):
            probe = res.u + scale * rng.standard_normal(12)
            assert e <= energy(A, J, f, alpha, beta, t, probe) + 1e-8


@pytest.mark.parametrize("lam", [1.0, 2.0, 4.0])
def test_beta2_on_singular_vector(lam):
    # e1 is singular for l1 under A = diag(a, 1) with lam = 1 / a^2
    a = 1.0 / np.sqrt(lam)
    A = linops.dense(np.diag([a, 1.0]))
    u = np.array([1.0, 0.0])
    f = linops.apply(A, u)
    assert verify_singular_vector(A, regs.l1(2), u, lam).ok
    for t in (0.1, 0.5, 2.0):
        res = solve(A, regs.l1(2), f, 2, 2, t)
        c = singular_path_coefficient(2, 2, lam, np.linalg.norm(f), t)
        assert res.converged
        assert np.allclose(res.u, c * u, atol=1e-5)
    # unit data norm reduces to 1 / (1 + t lam^2)
    assert singular_path_coefficient(2, 2, 2.0, 1.0, 1.0) == pytest.approx(0.2)


def test_warm_start_reproduces_solution(rng):
    f = rng.standard_normal(10)
    J = regs.tv1d(10)
    A = linops.identity(10)
    a = solve(A, J, f, 1.5, 1, 0.2)
    b = solve(A, J, f, 1.5, 1, 0.2, SolveOptions(warm_start=a.state))
    assert b.converged and b.iterations <= a.iterations
    assert np.linalg.norm(a.u - b.u) <= 1e-6


def test_deterministic(rng):
    f = rng.standard_normal(10)
    a = solve(linops.identity(10), regs.tv1d(10), f, 1, 1, 0.1)
    b = solve(linops.identity(10), regs.tv1d(10), f, 1, 1, 0.1)
    assert np.array_equal(a.u, b.u)
