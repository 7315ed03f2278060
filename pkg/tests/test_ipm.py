import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ganrates import ipm, ot
from ganrates.ipm import (ConstructedClass, EmptyClass, FiniteSet, LipschitzNet, QuadraticFeature,
                          SmoothFeatureSet, build_constructed_discriminator, chi_mean, deviation_check,
                          lipschitz_gap_curve, smooth_gap_curve)
from ganrates.measures import EmpiricalMeasure
from ganrates.netgen import random_net
from ganrates.rates import fit_exponent


class Const:
    latent_dim = 1

    def __init__(self, c):
        self.c = np.atleast_1d(np.asarray(c, float))

    def __call__(self, z):
        return np.tile(self.c, (len(z), 1))


class Segment:
    """``z -> (z, 1/2)``: a singular law in the plane."""

    latent_dim = 1

    def __call__(self, z):
        return np.column_stack([z[:, 0], np.full(len(z), 0.5)])


def rand_measure(rng, n=20, D=2):
    return EmpiricalMeasure(rng.random((n, D)))


def random_potentials(rng, k=5, D=2):
    return [ot.PotentialFn(rng.random((6, D)), rng.random(6)) for _ in range(k)]


def test_equal_measures_zero():
    rng = np.random.default_rng(0)
    mu = rand_measure(rng)
    F = FiniteSet(random_potentials(rng))
    assert ipm.ipm(F, mu, mu) == 0.0
    S = SmoothFeatureSet.random_fourier(2, 4, 3.0, rng)
    assert ipm.ipm(S, mu, mu) == 0.0


def test_sign_symmetric_pair():
    rng = np.random.default_rng(1)
    f = ot.PotentialFn(rng.random((4, 2)), rng.random(4))
    neg = ot.PotentialFn(f.anchors, f.values)
    mu, nu = rand_measure(rng), rand_measure(rng)
    assert ipm.ipm(FiniteSet([f]), mu, nu) == pytest.approx(abs(mu.integrate(f) - nu.integrate(f)))
    assert ipm.ipm(FiniteSet([f, neg]), mu, nu) == ipm.ipm(FiniteSet([f]), mu, nu)


def test_exhaustive_member_evaluation():
    rng = np.random.default_rng(2)
    members = random_potentials(rng)
    mu, nu = rand_measure(rng), rand_measure(rng)
    want = max(abs(float(np.mean(f(mu.points))) - float(np.mean(f(nu.points)))) for f in members)
    assert ipm.ipm(FiniteSet(members), mu, nu) == pytest.approx(want, abs=1e-15)


def test_empty_class():
    mu = rand_measure(np.random.default_rng(0))
    with pytest.raises(EmptyClass):
        ipm.ipm(FiniteSet([]), mu, mu)
    with pytest.raises(EmptyClass):
        ipm.ipm(SmoothFeatureSet([]), mu, mu)


def test_finite_class_below_w1():
    rng = np.random.default_rng(3)
    for _ in range(30):
        mu, nu = rand_measure(rng, 8), rand_measure(rng, 11)
        F = FiniteSet(random_potentials(rng, 6))
        assert ipm.ipm(F, mu, nu) <= ot.w1(mu, nu) + 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_pseudometric(seed):
    rng = np.random.default_rng(seed)
    F = FiniteSet(random_potentials(rng, 4))
    a, b, c = (rand_measure(rng, 6) for _ in range(3))
    ab = ipm.ipm(F, a, b)
    assert ab >= 0 and ab == pytest.approx(ipm.ipm(F, b, a), abs=1e-12)
    assert ab <= ipm.ipm(F, a, c) + ipm.ipm(F, c, b) + 1e-12


def test_lipschitz_net_value_and_bound():
    rng = np.random.default_rng(4)
    net = random_net((2, 4, 1), 20, 10.0, rng, scale=0.3)
    crit = LipschitzNet(net, 2.0)
    mu, nu = rand_measure(rng), rand_measure(rng)
    assert ipm.ipm(crit, mu, nu) == pytest.approx(abs(np.mean(crit(mu.points)) - np.mean(crit(nu.points))))
    with pytest.raises(ValueError):
        LipschitzNet(net, 1e-6)


def test_feature_bounds_hold():
    rng = np.random.default_rng(5)
    S = SmoothFeatureSet.random_fourier(2, 8, 4.0, rng)
    x = rng.uniform(-2, 2, (2000, 2))
    for f in S.features:
        assert np.all(np.linalg.norm(f.gradient(x), axis=1) <= f.grad_bound + 1e-12)
        assert np.all(np.abs(f(x)) <= f.sup_bound + 1e-12)
    assert S.lipschitz_bound() <= 4.0
    q = QuadraticFeature(np.zeros(2), 1.0, 1.5)
    y = rng.uniform(-1, 1, (500, 2)) * 1.5 / math.sqrt(2)
    assert np.all(np.linalg.norm(q.gradient(y), axis=1) <= q.grad_bound + 1e-12)
    assert SmoothFeatureSet.from_dict(SmoothFeatureSet([q] + S.features).to_dict()).to_dict() == \
        SmoothFeatureSet([q] + S.features).to_dict()


def test_single_candidate_zero_class():
    F = build_constructed_discriminator([Const(0.4)], 64, 0.01)
    assert len(F) == 1
    rng = np.random.default_rng(0)
    assert ipm.ipm(F, rand_measure(rng, 5, 1), rand_measure(rng, 7, 1)) == 0.0


def test_constant_generators_recover_distance():
    F = build_constructed_discriminator([Const([0.1, 0.2]), Const([0.7, 0.9])], 32, 0.01)
    a = EmpiricalMeasure(np.array([[0.1, 0.2]]))
    b = EmpiricalMeasure(np.array([[0.7, 0.9]]))
    assert len(F) == 4
    assert ipm.ipm(F, a, b) == pytest.approx(math.hypot(0.6, 0.7), abs=1e-9)


def test_constructed_class_net_gap():
    rng = np.random.default_rng(6)
    eps = 0.05
    cands = [random_net((1, 6, 2), 12, 1.0, rng) for _ in range(4)]
    F = build_constructed_discriminator(cands, 256, eps, rng)
    assert isinstance(F, ConstructedClass)
    assert len(F) == len(F.net) ** 2
    pf = [F.pushforward(g) for g in cands]
    for i in F.net:
        for j in F.net:
            w = ot.w1(pf[i], pf[j])
            d = ipm.ipm(F, pf[i], pf[j])
            assert d <= w + 1e-9 and d >= w - 2 * eps - 1e-9
    # members recentered at the origin
    assert all(abs(f(np.zeros((1, 2)))[0]) < 1e-12 for f in F.members)


def test_deviation_check_bounds():
    rng = np.random.default_rng(7)
    eps = 0.05
    cands = [random_net((1, 6, 2), 12, 1.0, rng) for _ in range(5)]
    F = build_constructed_discriminator(cands, 128, eps, rng)
    pf = [F.pushforward(g) for g in cands]
    pairs = [(pf[i], pf[j]) for i in range(5) for j in range(i + 1, 5)]
    assert deviation_check(F, pairs) <= 5 * eps + 1e-6
    assert deviation_check(F, [(pf[0], pf[0])]) == 0.0


def test_deviation_zero_with_exact_potentials():
    rng = np.random.default_rng(8)
    ms = [rand_measure(rng, 10) for _ in range(3)]
    pairs = [(ms[0], ms[1]), (ms[1], ms[2])]
    F = FiniteSet([ot.kantorovich_potential(a, b) for a, b in pairs])
    assert deviation_check(F, pairs) <= 1e-6


def test_finite_set_round_trip():
    rng = np.random.default_rng(9)
    F = FiniteSet(random_potentials(rng, 3), [(0, 1), (1, 0), (1, 1)])
    G = FiniteSet.from_dict(F.to_dict())
    mu, nu = rand_measure(rng), rand_measure(rng)
    assert ipm.ipm(F, mu, nu) == ipm.ipm(G, mu, nu) and G.pairs == F.pairs


def test_smooth_gap_trivial_cases():
    rng = np.random.default_rng(10)
    # antithetic noise cancels a linear test function exactly
    pts = smooth_gap_curve(Segment(), lambda x: x @ np.array([0.3, -0.7]), [0.0, 0.1, 0.5], 500, rng)
    assert pts[0].gap == 0.0
    assert all(p.gap <= 1e-12 for p in pts)


def test_quadratic_constant_identity():
    sigma = 0.3
    D = 2
    pts = smooth_gap_curve(Const([0.5, 0.5]), QuadraticFeature(np.zeros(2)), [sigma], 20_000, np.random.default_rng(1))
    assert abs(pts[0].gap - D * sigma ** 2) <= 4 * pts[0].stderr


def test_chi_mean_frozen():
    # sqrt(2) Gamma(3/2) / Gamma(1) and sqrt(2) Gamma(2) / Gamma(3/2)
    assert chi_mean(2) == pytest.approx(1.2533141373155003, abs=1e-14)
    assert chi_mean(3) == pytest.approx(1.5957691216057308, abs=1e-14)


def test_lipschitz_gap_curve_bound_and_zero():
    rng = np.random.default_rng(11)
    pts = lipschitz_gap_curve(Segment(), [0.0, 0.05, 0.2], 800, rng)
    assert pts[0].gap == pytest.approx(0.0, abs=1e-12)
    for p in pts[1:]:
        assert p.bound == pytest.approx(p.sigma * chi_mean(2))
        assert p.gap <= p.bound * 1.1


def test_lipschitz_gap_slope_short():
    sig = [0.02, 0.05, 0.1, 0.2]
    pts = lipschitz_gap_curve(Segment(), sig, 1500, np.random.default_rng(12))
    slope, _ = fit_exponent([(p.sigma, p.gap) for p in pts])
    assert abs(slope - 1.0) <= 0.15


def test_holder_feature_rate_parametric():
    """For smooth features the IPM between a sample and its law decays like n^(-1/2)."""
    rng = np.random.default_rng(13)
    S = SmoothFeatureSet.random_fourier(3, 20, 2.0, rng)
    big = EmpiricalMeasure(rng.random((50_000, 3)))
    rows = []
    for n in (64, 256, 1024):
        vals = [ipm.ipm(S, EmpiricalMeasure(rng.random((n, 3))), big) for _ in range(30)]
        rows.append((n, float(np.mean(vals))))
    slope, _ = fit_exponent(rows)
    assert abs(slope + 0.5) <= 0.1
