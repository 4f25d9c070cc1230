import numpy as np
import pytest
import scipy.optimize

from fixtures import random_polytope
from polysample import lpsolve
from polysample.lpsolve import LinearProgram, feasibility_certificate, solve
from polysample.model import make_simplex
from polysample.preprocess import find_z


def highs(lp):
    c = -lp.objective if lp.maximize else lp.objective
    res = scipy.optimize.linprog(
        c,
        A_ub=lp.A_ub if lp.A_ub.size else None, b_ub=lp.b_ub if lp.b_ub.size else None,
        A_eq=lp.A_eq if lp.A_eq.size else None, b_eq=lp.b_eq if lp.b_eq.size else None,
        bounds=list(zip(np.where(np.isinf(lp.var_lower), None, lp.var_lower),
                        np.where(np.isinf(lp.var_upper), None, lp.var_upper))),
        method="highs",
    )
    return res


def feasible(lp, x, tol=1e-7):
    ok = np.all(x >= lp.var_lower - tol) and np.all(x <= lp.var_upper + tol)
    if lp.A_eq.size:
        ok &= np.max(np.abs(lp.A_eq @ x - lp.b_eq)) <= tol * (1 + np.max(np.abs(lp.b_eq)))
    if lp.A_ub.size:
        ok &= np.all(lp.A_ub @ x <= lp.b_ub + tol * (1 + np.max(np.abs(lp.b_ub))))
    return bool(ok)


def test_bounded_max():
    sol = solve(LinearProgram([1.0], A_ub=[[1.0]], b_ub=[1.0], maximize=True))
    assert sol.optimal and np.isclose(sol.x[0], 1.0) and np.isclose(sol.objective_value, 1.0)


def test_unbounded():
    assert solve(LinearProgram([1.0], maximize=True)).status == lpsolve.UNBOUNDED


def test_simplex_initialization_lp():
    # max delta s.t. x1+x2+x3 = 1, x_i - delta >= 0
    A_eq = [[1.0, 1, 1, 0]]
    A_ub = np.array([[-1.0, 0, 0, 1], [0, -1, 0, 1], [0, 0, -1, 1]])
    lp = LinearProgram([0, 0, 0, 1.0], A_eq, [1.0], A_ub, np.zeros(3),
                       var_lower=[0, 0, 0, -np.inf], maximize=True)
    sol = solve(lp)
    assert sol.optimal
    assert np.allclose(sol.x, [1 / 3] * 4, atol=1e-9)


def test_feasibility_examples():
    infeas = LinearProgram([0.0], A_eq=[[1.0]], b_eq=[1.0], var_lower=[2.0])
    assert not feasibility_certificate(infeas).feasible
    seg = LinearProgram([0.0, 0.0], A_eq=[[1.0, 1.0]], b_eq=[1.0])
    f = feasibility_certificate(seg)
    assert f.feasible and feasible(seg, f.x)


def test_findz_of_strictly_feasible_is_infeasible():
    rng = np.random.default_rng(3)
    for _ in range(5):
        p, _ = random_polytope(rng, 7, 3)
        assert find_z(p) is None
    assert find_z(make_simplex(3)) is None


def test_invalid_programs():
    with pytest.raises(ValueError):
        LinearProgram([1.0, 2.0], A_eq=[[1.0]], b_eq=[1.0])
    with pytest.raises(ValueError):
        LinearProgram([1.0], var_lower=[2.0], var_upper=[1.0])


def test_box_and_simplex_analytic():
    c = np.array([3.0, -1.0, 2.0])
    box = LinearProgram(c, var_lower=[-1, -2, 0], var_upper=[1, 4, 5])
    sol = solve(box)
    assert np.isclose(sol.objective_value, -3 - 4 + 0, atol=1e-7)
    simp = LinearProgram(c, A_eq=[[1.0, 1, 1]], b_eq=[1.0], maximize=True)
    assert np.isclose(solve(simp).objective_value, 3.0, atol=1e-7)


def test_against_highs_random():
    rng = np.random.default_rng(7)
    statuses = set()
    for t in range(60):
        nv = int(rng.integers(2, 9))
        me, mu = int(rng.integers(0, 3)), int(rng.integers(1, 6))
        A_eq = rng.normal(size=(me, nv))
        A_ub = rng.normal(size=(mu, nv))
        x = rng.uniform(0, 2, nv)
        b_eq = A_eq @ x
        b_ub = A_ub @ x + rng.uniform(-0.5, 1.0, mu)
        lower = np.where(rng.random(nv) < 0.3, -np.inf, 0.0)
        upper = np.where(rng.random(nv) < 0.5, 3.0, np.inf)
        lp = LinearProgram(rng.normal(size=nv), A_eq, b_eq, A_ub, b_ub, lower, upper,
                           maximize=bool(t % 2))
        ours, ref = solve(lp), highs(lp)
        if ref.status == 0:
            assert ours.optimal, t
            assert feasible(lp, ours.x)
            assert np.isclose(ours.objective_value, -ref.fun if lp.maximize else ref.fun,
                              atol=1e-7, rtol=1e-7)
            statuses.add("optimal")
        elif ref.status == 2:
            assert ours.status == lpsolve.INFEASIBLE, t
            statuses.add("infeasible")
        elif ref.status == 3:
            assert ours.status == lpsolve.UNBOUNDED, t
            statuses.add("unbounded")
    assert "optimal" in statuses


def test_deterministic():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(4, 6))
    lp = LinearProgram(rng.normal(size=6), A_ub=A, b_ub=np.ones(4), var_upper=np.full(6, 2.0))
    a, b = solve(lp), solve(lp)
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations
