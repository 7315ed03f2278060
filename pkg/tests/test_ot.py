import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ganrates import ot
from ganrates.measures import EmpiricalMeasure
from ganrates.rates import RateSeries


def M(points, weights=None):
    return EmpiricalMeasure(np.asarray(points, float), None if weights is None else np.asarray(weights, float))


def random_weighted(rng, n, D):
    w = rng.random(n) + 0.05
    return M(rng.random((n, D)), w / w.sum())


def test_identical_measures():
    mu = M(np.random.default_rng(0).random((5, 2)))
    assert ot.w1_exact(mu, mu).cost == pytest.approx(0.0, abs=1e-12)
    assert ot.w2_exact(mu, mu) == pytest.approx(0.0, abs=1e-12)


def test_dirac_distance():
    assert ot.w1_exact(M([[0.0, 0.0]]), M([[3.0, 4.0]])).cost == pytest.approx(5.0)
    assert ot.w2_exact(M([[0.0, 0.0]]), M([[3.0, 4.0]])) == pytest.approx(5.0)
    assert ot.w1_bruteforce(M([[0.0, 0.0]]), M([[3.0, 4.0]])) == pytest.approx(5.0)


def test_two_atom_line():
    # couplings of two atoms enumerated by hand: identity 0.5, swap 1.5
    assert ot.w1_exact(M([[0.0], [1.0]]), M([[0.0], [2.0]]), "simplex").cost == pytest.approx(0.5)
    assert ot.w1(M([[0.0], [1.0]]), M([[0.0], [2.0]])) == pytest.approx(0.5)


def test_bruteforce_limits():
    with pytest.raises(ot.TooLarge):
        ot.w1_bruteforce(M(np.zeros((9, 1))), M(np.zeros((9, 1))))


def test_degenerate_input():
    mu = M([[0.0]])
    mu.weights = np.zeros(1)
    with pytest.raises(ot.DegenerateInput):
        ot.w1_exact(mu, M([[1.0]]))


@pytest.mark.parametrize("method", ["simplex", "assignment"])
def test_all_routes_match_bruteforce(method):
    rng = np.random.default_rng(11)
    for _ in range(60):
        n, D = int(rng.integers(1, 7)), int(rng.integers(1, 4))
        mu, nu = M(rng.random((n, D))), M(rng.random((n, D)))
        assert abs(ot.w1_exact(mu, nu, method).cost - ot.w1_bruteforce(mu, nu)) <= 1e-9


def check_plan(plan, mu, nu):
    P = plan.coupling.toarray()
    assert np.allclose(P.sum(axis=1), mu.weights, atol=1e-9)
    assert np.allclose(P.sum(axis=0), nu.weights, atol=1e-9)
    C = ot.cost_matrix(mu.points, nu.points)
    assert np.all(plan.source_potential[:, None] - plan.target_potential[None, :] <= C + 1e-9)
    assert abs(plan.cost - plan.dual_value) <= 1e-6


@pytest.mark.parametrize("n", [7, 40, 128])
def test_simplex_plan_invariants(n):
    rng = np.random.default_rng(n)
    mu, nu = random_weighted(rng, n, 2), random_weighted(rng, n + 3, 2)
    check_plan(ot.w1_exact(mu, nu), mu, nu)


def test_assignment_plan_invariants():
    rng = np.random.default_rng(2)
    mu, nu = M(rng.random((300, 3))), M(rng.random((300, 3)))
    check_plan(ot.w1_exact(mu, nu, "assignment"), mu, nu)


def test_large_assignment_routes_agree():
    rng = np.random.default_rng(3)
    x, y = rng.random((700, 2)), rng.random((700, 2))
    col_d, _, _ = ot.assignment(x, y, duals=False)
    col_a, u, v = ot.assignment(x, y, duals=True)
    cost = lambda c: np.linalg.norm(x - y[c], axis=1).sum()  # noqa: E731
    assert cost(col_a) == pytest.approx(cost(col_d), abs=1e-9)
    C = ot.cost_matrix(x, y)
    assert np.all(u[:, None] + v[None, :] <= C + 1e-9)
    assert abs(u.sum() + v.sum() - cost(col_d)) <= 1e-6


def test_w1_below_w2():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n, D = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        mu, nu = random_weighted(rng, n, D), random_weighted(rng, int(rng.integers(1, 8)), D)
        assert ot.w1(mu, nu) <= ot.w2_exact(mu, nu) + 1e-9


def test_metric_axioms():
    rng = np.random.default_rng(5)
    for _ in range(100):
        D = int(rng.integers(1, 4))
        a, b, c = (random_weighted(rng, int(rng.integers(1, 8)), D) for _ in range(3))
        ab, ba = ot.w1(a, b), ot.w1(b, a)
        assert abs(ab - ba) <= 1e-9
        assert ab <= ot.w1(a, c) + ot.w1(c, b) + 1e-9


def test_potential_single_edge():
    x, y = M([[0.2, 0.1]]), M([[0.9, 0.5]])
    f = ot.kantorovich_potential(x, y)
    assert f(x.points)[0] - f(y.points)[0] == pytest.approx(np.linalg.norm(x.points - y.points))
    assert f(np.zeros((1, 2)))[0] == pytest.approx(0.0, abs=1e-12)


def test_potential_equal_measures_constant():
    mu = M(np.random.default_rng(0).random((4, 2)))
    f = ot.kantorovich_potential(mu, mu)
    assert mu.integrate(f) - mu.integrate(f) == 0.0
    assert f(np.zeros((1, 2)))[0] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("D", [1, 2, 3])
def test_potential_attains_w1(D):
    rng = np.random.default_rng(D)
    for _ in range(20):
        mu, nu = random_weighted(rng, 10, D), random_weighted(rng, 10, D)
        f = ot.kantorovich_potential(mu, nu)
        assert mu.integrate(f) - nu.integrate(f) >= ot.w1(mu, nu) - 1e-6


@pytest.mark.parametrize("D", [1, 2])
def test_potential_is_one_lipschitz(D):
    rng = np.random.default_rng(10 + D)
    f = ot.kantorovich_potential(random_weighted(rng, 30, D), random_weighted(rng, 25, D))
    a, b = rng.uniform(-1, 2, (10_000, D)), rng.uniform(-1, 2, (10_000, D))
    assert np.all(np.abs(f(a) - f(b)) <= np.linalg.norm(a - b, axis=1) + 1e-12)


def test_potential_values_at_anchors():
    # anchor values that are 1-Lipschitz are reproduced exactly
    anchors = np.array([[0.0], [1.0], [3.0]])
    f = ot.PotentialFn(anchors, np.array([0.0, 0.5, 1.0]))
    assert np.allclose(f(anchors), [0.0, 0.5, 1.0])
    g = ot.PotentialFn(anchors, np.array([0.0, 5.0, 1.0]))
    assert g(anchors)[1] == pytest.approx(1.0)


def test_potential_gradient_matches_difference_quotient():
    rng = np.random.default_rng(3)
    for D in (1, 2):
        f = ot.kantorovich_potential(random_weighted(rng, 12, D), random_weighted(rng, 9, D))
        x = rng.random((200, D))
        h = 1e-7
        e = np.zeros(D)
        e[0] = h
        fd = (f(x + e) - f(x)) / h
        assert np.allclose(fd, f.gradient(x)[:, 0], atol=1e-5)


def test_potential_json_round_trip():
    f = ot.PotentialFn(np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([0.1, 0.2]), 0.05)
    g = ot.PotentialFn.from_dict(f.to_dict())
    x = np.random.default_rng(0).random((5, 2))
    assert np.array_equal(f(x), g(x))


def test_rate_table_single_n_flagged():
    s = ot.empirical_rate_table(1, [64], 3, seed=1)
    assert s.flagged and s.slope is None


def test_rate_table_requires_increasing_grid():
    with pytest.raises(ValueError):
        ot.empirical_rate_table(1, [64, 32], 2)


def test_rate_table_deterministic():
    a = ot.empirical_rate_table(2, [16, 32, 64], 3, seed=4)
    b = ot.empirical_rate_table(2, [16, 32, 64], 3, seed=4)
    assert a.to_csv() == b.to_csv()
    assert isinstance(a, RateSeries) and a.sizes() == [16, 32, 64]


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2 ** 31))
def test_w1_exact_equals_bruteforce_property(n, D, seed):
    rng = np.random.default_rng(seed)
    mu, nu = M(rng.random((n, D))), M(rng.random((n, D)))
    assert abs(ot.w1_exact(mu, nu).cost - ot.w1_bruteforce(mu, nu)) <= 1e-9


def test_constant_potential():
    f = ot.PotentialFn.constant(2, 0.7)
    x = np.random.default_rng(0).random((4, 2))
    assert np.all(f(x) == 0.7) and np.all(f.gradient(x) == 0.0)
    assert np.array_equal(ot.PotentialFn.from_dict(f.to_dict())(x), f(x))


@pytest.mark.parametrize("n", [32, 100])
def test_assignment_on_tied_points(n):
    # every pairing is optimal; the certificate must still close quickly
    x, y = np.tile([[0.1, 0.2]], (n, 1)), np.tile([[0.7, 0.9]], (n, 1))
    col, u, v = ot._sparse_auction(x, y, 1, 1e-10, 16)
    assert sorted(col) == list(range(n))
    assert abs(u.sum() + v.sum() - n * math.hypot(0.6, 0.7)) <= 1e-8
