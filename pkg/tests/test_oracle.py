import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from otkit.errors import CapabilityError, DomainError
from otkit.oracle import exact_ot

from conftest import random_simplex


def constraint_matrix(n):
    M = np.zeros((2 * n, n * n))
    for i in range(n):
        M[i, i * n : (i + 1) * n] = 1.0
        M[n + i, i::n] = 1.0
    return M


def vertex_enumeration(C, r, c):
    """Minimum of <P, C> over all basic feasible solutions."""
    n = len(r)
    M = constraint_matrix(n)
    b = np.concatenate([r, c])
    best = np.inf
    for cells in itertools.combinations(range(n * n), 2 * n - 1):
        sub = M[:, cells]
        if np.linalg.matrix_rank(sub) < 2 * n - 1:
            continue
        x, *_ = np.linalg.lstsq(sub, b, rcond=None)
        if np.abs(sub @ x - b).max() > 1e-12 or x.min() < -1e-12:
            continue
        best = min(best, float(np.dot(C.ravel()[list(cells)], x)))
    return best


def assert_certificate(C, r, c, sol):
    u, v = sol.duals
    P = sol.plan.entries
    assert np.all(u[:, None] + v[None, :] <= C + 1e-9)
    assert r @ u + c @ v >= sol.value - 1e-9
    assert sol.value == pytest.approx(np.sum(P * C), abs=1e-15)
    support = P > 1e-10
    assert np.all(np.abs(u[:, None] + v[None, :] - C)[support] <= 1e-8)


def test_zero_cost():
    r, c = np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.1, 0.3])
    assert exact_ot(np.zeros((3, 3)), r, c).value == 0.0


def test_equal_marginals_zero_diagonal(rng):
    r = random_simplex(rng, 5, 0.1)
    C = rng.random((5, 5)) + 0.1
    np.fill_diagonal(C, 0.0)
    sol = exact_ot(C, r, r)
    assert sol.value == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(sol.plan.entries, np.diag(r), atol=1e-15)


def test_two_by_two():
    C = np.array([[0.0, 1.0], [1.0, 0.0]])
    r, c = np.array([0.7, 0.3]), np.array([0.4, 0.6])
    sol = exact_ot(C, r, c)
    assert sol.value == pytest.approx(0.3, abs=1e-12)
    np.testing.assert_allclose(sol.plan.entries, [[0.4, 0.3], [0.0, 0.3]], atol=1e-12)
    assert_certificate(C, r, c, sol)


def test_matches_vertex_enumeration(rng):
    for _ in range(60):
        n = int(rng.integers(1, 4))
        C = rng.random((n, n))
        r, c = random_simplex(rng, n), random_simplex(rng, n)
        sol = exact_ot(C, r, c)
        assert sol.value == pytest.approx(vertex_enumeration(C, r, c), abs=1e-9)
        assert_certificate(C, r, c, sol)


def test_matches_linprog(rng):
    for n in (4, 8, 16, 32, 64):
        C = rng.random((n, n))
        r, c = random_simplex(rng, n), random_simplex(rng, n)
        sol = exact_ot(C, r, c)
        ref = linprog(C.ravel(), A_eq=constraint_matrix(n), b_eq=np.concatenate([r, c]), method="highs")
        assert sol.value == pytest.approx(ref.fun, abs=1e-9)
        assert_certificate(C, r, c, sol)


def test_degenerate_instances(rng):
    # integer costs and uniform marginals produce many ties and zero pivots
    for n in (5, 10, 20):
        C = rng.integers(0, 3, (n, n)).astype(float)
        r = c = np.full(n, 1.0 / n)
        sol = exact_ot(C, r, c)
        ref = linprog(C.ravel(), A_eq=constraint_matrix(n), b_eq=np.concatenate([r, c]), method="highs")
        assert sol.value == pytest.approx(ref.fun, abs=1e-9)
        assert_certificate(C, r, c, sol)


def test_sparse_marginals(rng):
    n = 6
    C = rng.random((n, n))
    r = np.array([0.5, 0, 0, 0.5, 0, 0])
    c = np.array([0, 0.25, 0.25, 0, 0.25, 0.25])
    sol = exact_ot(C, r, c)
    ref = linprog(C.ravel(), A_eq=constraint_matrix(n), b_eq=np.concatenate([r, c]), method="highs")
    assert sol.value == pytest.approx(ref.fun, abs=1e-9)


def test_errors():
    with pytest.raises(CapabilityError):
        exact_ot(np.zeros((257, 257)), np.full(257, 1 / 257), np.full(257, 1 / 257))
    with pytest.raises(DomainError):
        exact_ot(np.zeros((2, 2)), np.array([0.5, 0.5]), np.array([0.5, 0.6]))
