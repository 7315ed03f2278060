import math

import numpy as np
import pytest
from scipy import stats

from ganrates import ot
from ganrates.composite import identity_truth
from ganrates.measures import (EmpiricalMeasure, LatentSpec, NoisyModel, noisy_sample, perturb, pushforward_sample,
                               sample_latent, stream)


class Const:
    latent_dim = 1

    def __init__(self, c):
        self.c = np.atleast_1d(np.asarray(c, float))

    def __call__(self, z):
        return np.tile(self.c, (len(z), 1))


class Double:
    latent_dim = 1

    def __call__(self, z):
        return 2 * z


def test_latent_mean_and_ks():
    z = sample_latent(LatentSpec(1), 10_000, stream(1, 0))
    assert abs(z.mean() - 0.5) <= 3 / math.sqrt(12 * 10_000)
    assert stats.kstest(z[:, 0], "uniform").statistic < 1.63 / math.sqrt(10_000)


def test_stream_replays():
    assert np.array_equal(sample_latent(2, 5, stream(9, 1, 2)), sample_latent(2, 5, stream(9, 1, 2)))
    assert not np.array_equal(sample_latent(2, 5, stream(9, 1, 2)), sample_latent(2, 5, stream(9, 1, 3)))


def test_latent_spec_validation():
    with pytest.raises(ValueError):
        LatentSpec(0)


def test_pushforward_identity_and_constant():
    mu = pushforward_sample(identity_truth(1), 5000, stream(2))
    assert stats.kstest(mu.points[:, 0], "uniform").pvalue > 0.01
    c = pushforward_sample(Const([0.3, 0.7]), 50, stream(2))
    assert ot.w1(c, EmpiricalMeasure(np.array([[0.3, 0.7]]))) == pytest.approx(0.0, abs=1e-12)


def test_pushforward_mean_doubling():
    mu = pushforward_sample(Double(), 20_000, stream(3))
    assert abs(mu.mean()[0] - 1.0) <= 4 * math.sqrt(4 / 12 / 20_000)


def test_noisy_sample_zero_noise_matches_pushforward():
    a = noisy_sample(NoisyModel(identity_truth(2), 0.0), 30, stream(4))
    b = pushforward_sample(identity_truth(2), 30, stream(4))
    assert np.array_equal(a.points, b.points)


def test_noisy_sample_covariance_for_constant():
    sigma = 0.3
    x = noisy_sample(NoisyModel(Const([1.0, -1.0]), sigma), 40_000, stream(5)).points
    cov = np.cov(x.T)
    assert np.allclose(cov, sigma ** 2 * np.eye(2), atol=5 * sigma ** 2 * math.sqrt(2 / 40_000))


def test_perturb_moments():
    base = EmpiricalMeasure(np.random.default_rng(0).random((30_000, 2)))
    assert np.array_equal(perturb(base, 0.0, stream(6)).points, base.points)
    out = perturb(base, 0.2, stream(6))
    shift = out.points - base.points
    assert np.all(np.abs(shift.mean(axis=0)) < 4 * 0.2 / math.sqrt(30_000))
    assert np.allclose(out.points.var(axis=0) - base.points.var(axis=0), 0.04, atol=0.004)
    assert np.array_equal(out.weights, base.weights)


def test_noise_equals_pushforward_plus_perturbation_energy():
    """Energy distance between the two constructions stays under its permutation 5% level."""
    g = identity_truth(1)
    n = 2000
    a = noisy_sample(NoisyModel(g, 0.1), n, stream(7)).points[:, 0]
    b = perturb(pushforward_sample(g, n, stream(8)), 0.1, stream(9)).points[:, 0]
    stat = stats.energy_distance(a, b)
    rng = np.random.default_rng(0)
    pooled = np.concatenate([a, b])
    null = []
    for _ in range(200):
        rng.shuffle(pooled)
        null.append(stats.energy_distance(pooled[:n], pooled[n:]))
    assert stat <= np.quantile(null, 0.95)


def test_constant_integration_exact():
    rng = np.random.default_rng(1)
    w = rng.random(7)
    mu = EmpiricalMeasure(rng.random((7, 3)), w / w.sum())
    assert mu.integrate(lambda x: np.full(len(x), 2.5)) == pytest.approx(2.5, abs=1e-15)


def test_weight_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 1)), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.array([[np.nan]]))


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    w = rng.random(5)
    mu = EmpiricalMeasure(rng.random((5, 2)), w / w.sum())
    mu.save_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "w,x1,x2"
    back = EmpiricalMeasure.load_csv(tmp_path / "m.csv")
    assert np.array_equal(back.points, mu.points) and np.array_equal(back.weights, mu.weights)
