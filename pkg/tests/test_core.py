import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otkit.core import (
    CostMatrix,
    Marginal,
    TransportPlan,
    col_sums,
    entropy,
    format_matrix,
    kl_divergence,
    l1_distance,
    marginal_violation,
    product_plan,
    read_matrix,
    read_vector,
    rho,
    row_sums,
    write_matrix,
)
from otkit.errors import DimensionError, DivergenceUndefinedError, DomainError, FormatError

from conftest import random_simplex


def test_row_sums_examples():
    np.testing.assert_allclose(row_sums(np.eye(2)), [1, 1])
    np.testing.assert_allclose(row_sums(np.zeros((3, 3))), [0, 0, 0])
    np.testing.assert_allclose(row_sums([[0.5, 0.3], [0.1, 0.1]]), [0.8, 0.2])


def test_col_sums_examples():
    np.testing.assert_allclose(col_sums(np.eye(2)), [1, 1])
    np.testing.assert_allclose(col_sums([[0.5, 0.3], [0.1, 0.1]]), [0.6, 0.4])
    np.testing.assert_allclose(col_sums(np.outer([1, 0], [0.2, 0.8])), [0.2, 0.8])


def test_l1_distance():
    assert l1_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert l1_distance([1, 0], [0, 1]) == 2.0
    assert l1_distance([0.7, 0.3], [0.4, 0.6]) == pytest.approx(0.6, abs=1e-15)
    with pytest.raises(DimensionError):
        l1_distance([1, 0], [1, 0, 0])


def test_kl_divergence_examples():
    assert kl_divergence([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert kl_divergence([1, 0], [0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(expected, abs=1e-15)
    assert kl_divergence([0.5, 0.5], [0.25, 0.75]) == pytest.approx(0.143841, abs=1e-6)


def test_kl_requires_absolute_continuity():
    with pytest.raises(DivergenceUndefinedError):
        kl_divergence([0.5, 0.5], [1.0, 0.0])
    # zero mass on both sides is fine
    assert kl_divergence([1.0, 0.0], [1.0, 0.0]) == 0.0


def test_entropy_examples():
    assert entropy([0, 1, 0]) == 0.0
    assert entropy([0.5, 0.5]) == pytest.approx(math.log(2), abs=1e-15)
    n = 7
    assert entropy(np.full((n, n), 1 / n**2)) == pytest.approx(2 * math.log(n), abs=1e-12)
    with pytest.raises(DomainError):
        entropy([0.5, -0.1, 0.6])


def test_rho_examples():
    for a in (0.0, 0.3, 1.0, 17.0):
        assert rho(a, a) == 0.0
    assert rho(0.0, 0.4) == 0.4
    assert rho(1.0, 2.0) == pytest.approx(1 - math.log(2), abs=1e-15)
    assert rho(0.3, 0.0) == math.inf


def test_marginal_violation_examples():
    r = np.array([0.3, 0.7])
    c = np.array([0.6, 0.4])
    assert marginal_violation(product_plan(r, c), r, c) == pytest.approx(0.0, abs=1e-16)
    assert marginal_violation(np.zeros((2, 2)), r, c) == pytest.approx(2.0)
    half = [0.5, 0.5]
    assert marginal_violation([[0.5, 0.3], [0.1, 0.1]], half, half) == pytest.approx(0.8, abs=1e-15)
    with pytest.raises(DimensionError):
        marginal_violation(np.zeros((3, 3)), half, half)


def test_marginal_validation():
    m = Marginal([0.25, 0.75])
    assert m.n == 2
    with pytest.raises(DomainError):
        Marginal([0.5, 0.6])
    with pytest.raises(DomainError):
        Marginal([1.2, -0.2])
    with pytest.raises(DimensionError):
        Marginal(np.ones((2, 2)) / 4)
    # within the normalisation slack: rescaled to exactly 1
    m = Marginal([0.5, 0.5 + 5e-7], normalize=True)
    assert m.values.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(DomainError):
        Marginal([0.5, 0.5 + 1e-4], normalize=True)
    # tolerance is overridable
    Marginal([0.5, 0.5 + 1e-4], tol=1e-3)


def test_marginal_is_immutable():
    m = Marginal([0.25, 0.75])
    with pytest.raises(ValueError):
        m.values[0] = 1.0


def test_cost_matrix():
    C = CostMatrix([[0, 2.5], [1, 0]])
    assert C.max_abs == 2.5
    with pytest.raises(DomainError):
        CostMatrix([[0, -1], [1, 0]])
    with pytest.raises(DomainError):
        CostMatrix([[0, np.inf], [1, 0]])
    with pytest.raises(DimensionError):
        CostMatrix(np.zeros((2, 3)))


def test_transport_plan_certification():
    r, c = Marginal([0.7, 0.3]), Marginal([0.4, 0.6])
    P = TransportPlan([[0.4, 0.3], [0.0, 0.3]], feasible_for=(r, c))
    assert P.certified
    with pytest.raises(DomainError):
        TransportPlan([[0.4, 0.3], [0.0, 0.3 + 1e-9]], feasible_for=(r, c))
    with pytest.raises(DomainError):
        TransportPlan([[-0.1, 0.1], [0.0, 0.0]])
    assert not TransportPlan(np.zeros((2, 2))).certified


def test_text_round_trip(tmp_path):
    M = np.array([[0.1, 1 / 3], [2e-17, 5.0]])
    path = tmp_path / "m.txt"
    write_matrix(path, M)
    np.testing.assert_array_equal(read_matrix(path), M)
    assert format_matrix([[1.0, 0.5]]) == "1.0 0.5\n"
    (tmp_path / "v.txt").write_text("0.25\n0.75\n")
    np.testing.assert_array_equal(read_vector(tmp_path / "v.txt"), [0.25, 0.75])


def test_text_format_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\n3 x\n")
    with pytest.raises(FormatError):
        read_matrix(bad)
    bad.write_text("1 2\n3\n")
    with pytest.raises(FormatError):
        read_matrix(bad)
    bad.write_text("")
    with pytest.raises(FormatError):
        read_matrix(bad)
    bad.write_text("1 2\n3 4\n")
    with pytest.raises(FormatError):
        read_vector(bad)


# Properties


def test_kl_nonnegative_and_zero_only_at_equality(rng):
    for _ in range(500):
        n = rng.integers(2, 12)
        p, q = random_simplex(rng, n), random_simplex(rng, n, floor=1e-3)
        assert kl_divergence(p, q) >= 0.0
        assert kl_divergence(p, p) == 0.0


def test_pinsker(rng):
    worst = -np.inf
    for _ in range(1000):
        n = rng.integers(2, 20)
        p = random_simplex(rng, n)
        q = random_simplex(rng, n, floor=1e-6)
        worst = max(worst, l1_distance(p, q) - math.sqrt(2 * kl_divergence(p, q)))
    assert worst <= 1e-12


def test_extended_pinsker(rng):
    worst = -np.inf
    trials = 0
    while trials < 1000:
        n = rng.integers(2, 20)
        alpha = random_simplex(rng, n)
        beta = alpha * rng.uniform(0.0, 3.0, n)
        total = float(np.sum(rho(alpha, beta)))
        if total > 1.0:
            continue
        trials += 1
        worst = max(worst, l1_distance(alpha, beta) - math.sqrt(7 * total))
    assert worst <= 1e-12


@settings(max_examples=300, deadline=None)
@given(
    st.floats(min_value=0.0, max_value=1e3, allow_nan=False),
    st.floats(min_value=0.0, max_value=1e3, allow_nan=False),
)
def test_rho_nonnegative(a, b):
    v = rho(a, b)
    assert v >= 0.0
    if a == b:
        assert v == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-6, max_value=10.0), st.floats(min_value=1e-3, max_value=0.5))
def test_rho_positive_off_diagonal(a, rel):
    assert rho(a, a * (1 + rel)) > 0.0
    assert rho(a, a * (1 - rel)) > 0.0


def test_rho_vectorised_matches_scalar(rng):
    a = rng.random(50)
    b = rng.random(50)
    a[:5] = 0.0
    np.testing.assert_allclose(rho(a, b), [rho(float(x), float(y)) for x, y in zip(a, b)], rtol=1e-14)
