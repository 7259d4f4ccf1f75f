import numpy as np
import pytest

from signalcraft.simplex import (INFEASIBLE, OPTIMAL, UNBOUNDED, LpProblem, simplex, solve_lp)

from oracles import vertex_enumeration


def test_examples():
    assert simplex(LpProblem([1.0], [[1.0]], [1.0])).objective == pytest.approx(1.0)
    sol = simplex(LpProblem([1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[1.0]))
    assert sol.ok and sol.objective == pytest.approx(1.0)
    assert sol.residual < 1e-9


def test_infeasible_and_unbounded():
    assert simplex(LpProblem([1.0], A_eq=[[1.0]], b_eq=[-1.0])).status == INFEASIBLE
    assert simplex(LpProblem([1.0, 0.0], [[-1.0, 1.0]], [1.0])).status == UNBOUNDED
    assert simplex(LpProblem([1.0, 1.0], [[1.0, 1.0], [-1.0, -1.0]], [1.0, -2.0])).status == INFEASIBLE


def test_no_constraints():
    assert simplex(LpProblem([-1.0, 0.0])).objective == 0.0
    assert simplex(LpProblem([1.0])).status == UNBOUNDED


def test_negative_rhs_inequalities():
    # x + y >= 2 written as -x - y <= -2; minimize x + 2y
    sol = simplex(LpProblem([-1.0, -2.0], [[-1.0, -1.0]], [-2.0]))
    assert sol.ok and sol.objective == pytest.approx(-2.0)
    np.testing.assert_allclose(sol.x, [2.0, 0.0], atol=1e-12)


def test_redundant_equalities():
    sol = simplex(LpProblem([1.0, 2.0], A_eq=[[1.0, 1.0], [2.0, 2.0]], b_eq=[1.0, 2.0]))
    assert sol.ok and sol.objective == pytest.approx(2.0)


def test_degenerate_cycling_example():
    # Beale's classic cycling instance (as a maximization)
    c = np.array([0.75, -150.0, 0.02, -6.0])
    A = np.array([[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]])
    b = np.array([0.0, 0.0, 1.0])
    sol = simplex(LpProblem(c, A, b))
    assert sol.ok and sol.objective == pytest.approx(0.05)


def test_matches_highs():
    rng = np.random.default_rng(3)
    for _ in range(30):
        n, m = 8, 5
        A = rng.normal(size=(m, n))
        b = rng.random(m) + 0.5
        c = rng.normal(size=n)
        lp = LpProblem(c, np.vstack([A, np.ones((1, n))]), np.append(b, 10.0))
        s1, s2 = solve_lp(lp, "simplex"), solve_lp(lp, "highs")
        assert s1.status == s2.status
        if s1.ok:
            assert s1.objective == pytest.approx(s2.objective, abs=1e-8)


def random_lp(rng):
    n = int(rng.integers(1, 7))
    m_ub = int(rng.integers(0, 7 - 1))
    m_eq = int(rng.integers(0, min(n, 6 - m_ub) + 1)) if m_ub < 6 else 0
    m_eq = min(m_eq, n)
    kind = rng.random()
    A_ub = rng.integers(-5, 6, size=(m_ub, n)).astype(float)
    b_ub = rng.integers(-3, 10, size=m_ub).astype(float)
    A_eq = rng.integers(-3, 4, size=(m_eq, n)).astype(float)
    if kind < 0.7 and m_eq:
        # make the equalities satisfiable by a known nonnegative point
        x0 = rng.random(n) * 3
        b_eq = A_eq @ x0
        b_ub = np.maximum(b_ub, A_ub @ x0) if m_ub else b_ub
    else:
        b_eq = rng.integers(-3, 6, size=m_eq).astype(float)
    c = rng.integers(-5, 6, size=n).astype(float)
    if m_eq and np.linalg.matrix_rank(A_eq) < m_eq:
        A_eq, b_eq = A_eq[:0], b_eq[:0]
    return c, A_ub, b_ub, A_eq, b_eq


def test_vertex_enumeration_oracle_1000():
    rng = np.random.default_rng(12345)
    counts = {"optimal": 0, "infeasible": 0, "unbounded": 0}
    for _ in range(1000):
        c, A_ub, b_ub, A_eq, b_eq = random_lp(rng)
        status, ref = vertex_enumeration(c, A_ub, b_ub, A_eq, b_eq)
        sol = simplex(LpProblem(c, A_ub if A_ub.size else None, b_ub if A_ub.size else None,
                                A_eq if A_eq.size else None, b_eq if A_eq.size else None))
        counts[status] += 1
        assert sol.status == status, (c, A_ub, b_ub, A_eq, b_eq)
        if status == OPTIMAL:
            assert sol.objective == pytest.approx(ref, abs=1e-8 * max(1.0, abs(ref)))
            assert sol.residual < 1e-9
    # the generator exercises every outcome
    assert min(counts.values()) > 20, counts
