import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ganrates.netgen import (ShapeMismatch, SparseReluNet, backward, covering_bound, forward, project, random_net,
                             size_for, zero_net)


def reference_forward(net, z):
    """Per-unit loops; clamp at the end."""
    x = list(z)
    for j, W in enumerate(net.weights):
        y = [sum(W[r, c] * x[c] for c in range(W.shape[1])) for r in range(W.shape[0])]
        if j < net.depth:
            y = [max(v - net.shifts[j][r], 0.0) for r, v in enumerate(y)]
        x = y
    return np.clip(x, -net.sup_bound, net.sup_bound)


def test_zero_net_outputs_zero():
    net = zero_net((2, 4, 1), 5, 1.0)
    assert np.all(forward(net, np.random.default_rng(0).random((6, 2))) == 0)


def test_affine_only():
    net = SparseReluNet([np.eye(1)], [], 0, 1.0)
    assert forward(net, np.array([0.3]))[0] == 0.3


def test_forward_matches_reference():
    rng = np.random.default_rng(1)
    net = random_net((3, 5, 4, 2), 30, 1.5, rng)
    z = rng.random((25, 3))
    want = np.array([reference_forward(net, row) for row in z])
    assert np.max(np.abs(forward(net, z) - want)) <= 1e-12


def test_shape_mismatch():
    net = random_net((2, 3, 1), 5, 1.0, np.random.default_rng(0))
    with pytest.raises(ShapeMismatch):
        forward(net, np.zeros((3, 3)))
    with pytest.raises(ShapeMismatch):
        backward(net, np.zeros((3, 2)), np.zeros((3, 2)))


def test_zero_upstream():
    net = random_net((2, 3, 1), 8, 1.0, np.random.default_rng(0))
    g = backward(net, np.ones((4, 2)), np.zeros((4, 1)))
    assert all(np.all(p == 0) for p in g.parameters())


def test_linear_neuron_gradient():
    net = SparseReluNet([np.array([[0.4]])], [], 0, 10.0)
    g = backward(net, np.array([[0.7]]), np.array([[1.0]]))
    assert g.weights[0][0, 0] == pytest.approx(0.7)


def _far_from_kinks(net, z, tol=1e-6):
    x = z @ net.weights[0].T
    for j in range(1, net.depth + 1):
        if np.any(np.abs(x - net.shifts[j - 1]) < tol):
            return False
        x = np.maximum(x - net.shifts[j - 1], 0) @ net.weights[j].T
    return np.all(np.abs(x) < net.sup_bound - tol)


def finite_difference_error(net, z, up, h=1e-5):
    g = backward(net, z, up).parameters()
    params = net.parameters()
    worst = 0.0
    for k, p in enumerate(params):
        for idx in np.ndindex(p.shape):
            plus = [q.copy() for q in params]
            minus = [q.copy() for q in params]
            plus[k][idx] += h
            minus[k][idx] -= h
            fp = np.sum(up * forward(net.with_parameters(plus), z))
            fm = np.sum(up * forward(net.with_parameters(minus), z))
            fd = (fp - fm) / (2 * h)
            worst = max(worst, abs(fd - g[k][idx]) / max(1.0, abs(fd), abs(g[k][idx])))
    return worst


def random_gradient_case(rng):
    depth = int(rng.integers(1, 4))
    widths = [int(rng.integers(1, 4))] + [int(rng.integers(2, 6)) for _ in range(depth)] + [int(rng.integers(1, 3))]
    net = random_net(widths, 10_000, 50.0, rng)
    # dense nets: the sparsity mask would make finite differences leave the class
    while True:
        z = rng.random((4, widths[0]))
        if _far_from_kinks(net, z):
            break
    return net, z, rng.standard_normal((4, widths[-1]))


def test_gradient_finite_differences_small():
    rng = np.random.default_rng(3)
    for _ in range(10):
        net, z, up = random_gradient_case(rng)
        assert finite_difference_error(net, z, up) <= 1e-4


def test_project_clips():
    net = SparseReluNet([np.array([[2.5]]), np.array([[-3.0]])], [np.array([0.2])], 5, 1.0)
    p = project(net)
    assert p.weights[0][0, 0] == 1.0 and p.weights[1][0, 0] == -1.0


def test_project_top_s():
    W1 = np.array([[0.1, -0.9, 0.5, 0.0, -0.3]])
    v = np.array([0.7, 0.0, 0.0, 0.0, 0.0])
    net = SparseReluNet([np.ones((5, 1)), W1], [v], 3, 1.0)
    p = project(net)
    flat = np.concatenate([W1.ravel(), v])
    keep = np.sort(np.argsort(-np.abs(flat), kind="stable")[:3])
    got = np.concatenate([p.weights[1].ravel(), p.shifts[0]])
    assert np.flatnonzero(got).tolist() == keep.tolist()
    # first layer is exempt
    assert np.all(p.weights[0] == 1.0)


def test_project_idempotent_on_feasible():
    net = random_net((2, 4, 1), 6, 1.0, np.random.default_rng(5))
    p = project(net)
    assert all(np.array_equal(a, b) for a, b in zip(p.parameters(), net.parameters()))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 12), st.floats(0.1, 5.0))
def test_project_properties(seed, s, F):
    rng = np.random.default_rng(seed)
    net = random_net((2, 3, 3, 2), 1000, F, rng, scale=3.0).with_parameters(
        [rng.uniform(-3, 3, p.shape) for p in random_net((2, 3, 3, 2), 1000, F, rng).parameters()])
    net = SparseReluNet(net.weights, net.shifts, s, F)
    p = project(net)
    assert p.max_entry() <= 1.0 and p.nonzeros() <= s
    assert np.all(np.abs(forward(p, rng.random((10, 2)))) <= F)
    q = project(p)
    assert all(np.array_equal(a, b) for a, b in zip(p.parameters(), q.parameters()))


def test_piecewise_linear_along_ray():
    rng = np.random.default_rng(7)
    net = random_net((2, 6, 1), 100, 100.0, rng)
    d = rng.standard_normal(2)
    lam = np.linspace(0.0, 1.0, 1000)
    f = forward(net, lam[:, None] * d[None, :])[:, 0]
    second = np.abs(np.diff(f, 2))
    kinks = int(np.sum(second > 1e-9 * max(1.0, np.abs(f).max())))
    assert kinks <= 2 * (6 + 1)  # a kink can straddle two stencils
    assert np.max(np.abs(np.diff(f))) < 1.0  # continuity


def test_size_for_arithmetic():
    s = size_for(403, 1.0, 1.0)
    assert s.width == math.ceil(403 ** (1 / 3) * math.log(403)) == 45
    assert s.depth == math.ceil(math.log(403))


def test_size_for_exponent_beta_two():
    a, b = size_for(10 ** 6, 2.0, 1.0), size_for(10 ** 7, 2.0, 1.0)
    ratio = (b.width / math.log(1e7)) / (a.width / math.log(1e6))
    assert ratio == pytest.approx(10 ** 0.2, rel=1e-3)


def test_size_for_depth_ratio():
    n = 10 ** 12
    assert size_for(n, 1, 1, c_depth=0.5).depth / math.log(n) == pytest.approx(0.5, abs=1 / math.log(n))


def test_covering_bound_frozen():
    # independent arithmetic: 11 * (log 2 + log 10 + log 3 + 2 (log 2 + log 6 + log 6 + log 2))
    assert covering_bound(2, (1, 5, 5, 1), 10, 0.1) == pytest.approx(154.37368277511512, abs=1e-9)
    assert covering_bound(0, (1, 1), 0, 1.0) == pytest.approx(3.4657359027997265, abs=1e-12)


@given(st.integers(0, 50), st.integers(0, 50))
def test_covering_monotone_in_s(s1, s2):
    a, b = sorted((s1, s2))
    assert covering_bound(1, (2, 3, 1), a, 0.05) <= covering_bound(1, (2, 3, 1), b, 0.05)


def test_json_round_trip(tmp_path):
    net = random_net((2, 3, 1), 4, 1.0, np.random.default_rng(0))
    net.save(tmp_path / "n.json")
    back = SparseReluNet.load(tmp_path / "n.json")
    assert all(np.array_equal(a, b) for a, b in zip(net.parameters(), back.parameters()))
    assert back.sparsity == 4 and back.sup_bound == 1.0
