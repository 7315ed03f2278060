"""Sparse ReLU networks of the class D(L, p, s, F).

A network with architecture ``(L, p)`` maps ``R^{p_0} -> R^{p_{L+1}}`` as

    z -> W_L rho_{v_L} W_{L-1} ... W_1 rho_{v_1} W_0 z

with the shifted ReLU ``rho_v(x) = max(x - v, 0)``.  Class membership requires
every weight and shift entry to lie in ``[-1, 1]``, at most ``s`` nonzero
parameters among ``W_j, v_j`` for ``j >= 1`` and ``|f|_inf <= F``.  The last
constraint is enforced by clamping the output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class ShapeMismatch(ValueError):
    """Input or cotangent dimensions do not match the architecture."""


@dataclass
class SparseReluNet:
    weights: list[np.ndarray]
    shifts: list[np.ndarray]
    sparsity: int
    sup_bound: float

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=float) for w in self.weights]
        self.shifts = [np.asarray(v, dtype=float) for v in self.shifts]
        if len(self.shifts) != len(self.weights) - 1:
            raise ShapeMismatch("need one shift vector per hidden layer")
        for j, v in enumerate(self.shifts, start=1):
            if self.weights[j].shape[1] != v.shape[0] or self.weights[j - 1].shape[0] != v.shape[0]:
                raise ShapeMismatch(f"layer {j}: shift length {v.shape[0]} does not match widths")

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1],) + tuple(w.shape[0] for w in self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    def parameters(self) -> list[np.ndarray]:
        """Weights ``W_0..W_L`` followed by shifts ``v_1..v_L``."""
        return self.weights + self.shifts

    def with_parameters(self, params: Sequence[np.ndarray]) -> "SparseReluNet":
        k = len(self.weights)
        return SparseReluNet(
            [np.array(p, dtype=float) for p in params[:k]],
            [np.array(p, dtype=float) for p in params[k:]],
            self.sparsity,
            self.sup_bound,
        )

    def copy(self) -> "SparseReluNet":
        return self.with_parameters(self.parameters())

    def nonzeros(self) -> int:
        """Nonzero count over ``W_j, v_j`` for ``j >= 1`` (the sparsity budget)."""
        return int(sum(np.count_nonzero(w) for w in self.weights[1:])
                   + sum(np.count_nonzero(v) for v in self.shifts))

    def max_entry(self) -> float:
        return float(max(np.max(np.abs(p), initial=0.0) for p in self.parameters()))

    def is_feasible(self) -> bool:
        return self.max_entry() <= 1.0 and self.nonzeros() <= self.sparsity

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return forward(self, z)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "widths": list(self.widths),
            "sparsity": int(self.sparsity),
            "sup_bound": float(self.sup_bound),
            "weights": [w.tolist() for w in self.weights],
            "shifts": [v.tolist() for v in self.shifts],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SparseReluNet":
        net = cls(
            [np.array(w, dtype=float).reshape(data["widths"][j + 1], data["widths"][j])
             for j, w in enumerate(data["weights"])],
            [np.array(v, dtype=float) for v in data["shifts"]],
            int(data["sparsity"]),
            float(data["sup_bound"]),
        )
        if list(net.widths) != list(data["widths"]):
            raise ShapeMismatch("serialized widths disagree with weight shapes")
        return net

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "SparseReluNet":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class NetGrad:
    """Parameter gradients, laid out like :meth:`SparseReluNet.parameters`."""

    weights: list[np.ndarray]
    shifts: list[np.ndarray]
    inputs: np.ndarray = field(repr=False)

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.shifts


def _as_batch(net: SparseReluNet, z) -> tuple[np.ndarray, bool]:
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != net.in_dim:
        raise ShapeMismatch(f"expected inputs of dimension {net.in_dim}, got shape {z.shape}")
    return z, single


def _forward_cache(net: SparseReluNet, z: np.ndarray):
    pre = [z @ net.weights[0].T]
    hidden = []
    for j in range(1, net.depth + 1):
        h = np.maximum(pre[-1] - net.shifts[j - 1], 0.0)
        hidden.append(h)
        pre.append(h @ net.weights[j].T)
    return pre, hidden


def forward_unclamped(net: SparseReluNet, z) -> np.ndarray:
    zb, single = _as_batch(net, z)
    out = _forward_cache(net, zb)[0][-1]
    return out[0] if single else out


def forward(net: SparseReluNet, z) -> np.ndarray:
    """Evaluate the network on one point or a batch (rows), clamped to [-F, F]."""
    out = forward_unclamped(net, z)
    return np.clip(out, -net.sup_bound, net.sup_bound)


def backward(net: SparseReluNet, z, upstream) -> NetGrad:
    """Reverse-mode gradient of ``sum(upstream * forward(net, z))``.

    ReLU kinks get subgradient 0; the output clamp passes gradients where
    ``|f| <= F`` and blocks them outside.
    """
    zb, single = _as_batch(net, z)
    g = np.asarray(upstream, dtype=float)
    if single:
        g = g[None, :]
    if g.shape != (zb.shape[0], net.out_dim):
        raise ShapeMismatch(f"cotangent shape {g.shape} != {(zb.shape[0], net.out_dim)}")
    pre, hidden = _forward_cache(net, zb)
    g = g * (np.abs(pre[-1]) <= net.sup_bound)

    L = net.depth
    dW = [None] * (L + 1)
    dv = [None] * L
    for j in range(L, 0, -1):
        h = hidden[j - 1]
        dW[j] = g.T @ h
        dh = g @ net.weights[j]
        dh = dh * (h > 0)
        dv[j - 1] = -dh.sum(axis=0)
        g = dh
    dW[0] = g.T @ zb
    dz = g @ net.weights[0]
    return NetGrad(dW, dv, dz[0] if single else dz)


def project(net: SparseReluNet) -> SparseReluNet:
    """Map a network into D(L, p, s, F).

    Entries are clipped to [-1, 1]; then all but the ``s`` largest-magnitude
    entries among the layers ``j >= 1`` (weights and shifts pooled) are zeroed.
    ``W_0`` is exempt from the sparsity count.  Idempotent.
    """
    params = [np.clip(p, -1.0, 1.0) for p in net.parameters()]
    k = len(net.weights)
    pooled = params[1:k] + params[k:]
    flat = np.concatenate([p.ravel() for p in pooled]) if pooled else np.zeros(0)
    nnz = np.count_nonzero(flat)
    if nnz > net.sparsity:
        # stable sort keeps the choice deterministic under ties
        order = np.argsort(-np.abs(flat), kind="stable")
        keep = np.zeros(flat.size, dtype=bool)
        keep[order[: max(net.sparsity, 0)]] = True
        flat = np.where(keep, flat, 0.0)
        offset = 0
        for idx, p in enumerate(pooled):
            pooled[idx] = flat[offset: offset + p.size].reshape(p.shape)
            offset += p.size
        params = [params[0]] + pooled[: k - 1] + pooled[k - 1:]
    return net.with_parameters(params)


def random_net(widths: Sequence[int], sparsity: int, sup_bound: float,
               rng: np.random.Generator, scale: float = 1.0) -> SparseReluNet:
    """Draw uniform entries in ``[-scale, scale]`` and project onto the class."""
    widths = list(widths)
    weights = [rng.uniform(-scale, scale, size=(widths[j + 1], widths[j]))
               for j in range(len(widths) - 1)]
    shifts = [rng.uniform(-scale, scale, size=widths[j]) for j in range(1, len(widths) - 1)]
    return project(SparseReluNet(weights, shifts, sparsity, sup_bound))


def zero_net(widths: Sequence[int], sparsity: int, sup_bound: float) -> SparseReluNet:
    widths = list(widths)
    return SparseReluNet(
        [np.zeros((widths[j + 1], widths[j])) for j in range(len(widths) - 1)],
        [np.zeros(widths[j]) for j in range(1, len(widths) - 1)],
        sparsity,
        sup_bound,
    )


@dataclass(frozen=True)
class NetSize:
    depth: int
    width: int
    sparsity: int

    def widths(self, in_dim: int, out_dim: int) -> tuple[int, ...]:
        return (in_dim,) + (self.width,) * self.depth + (out_dim,)


def size_for(n: int, beta_star: float, t_star: float,
             c_depth: float = 1.0, c_width: float = 1.0, c_sparsity: float = 1.0) -> NetSize:
    """Generator architecture matched to sample size ``n``.

    Depth grows like ``log n``; width and sparsity like ``n^{t/(2b+t)} log n``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    logn = math.log(n)
    growth = n ** (t_star / (2.0 * beta_star + t_star)) * logn
    return NetSize(
        depth=max(int(math.ceil(c_depth * logn)), 0),
        width=max(int(math.ceil(c_width * growth)), 1),
        sparsity=max(int(math.ceil(c_sparsity * growth)), 0),
    )


def covering_bound(depth: int, widths: Sequence[int], sparsity: int, eps: float) -> float:
    """Upper bound on ``log N(eps, D(L, p, s, inf), ||.||_inf)``.

    ``(s + 1) * (log 2 + log(1/eps) + log(L + 1) + 2 * sum_l log(p_l + 1))``
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    widths = list(widths)
    if len(widths) != depth + 2:
        raise ShapeMismatch("widths must have length depth + 2")
    inner = (math.log(2.0) + math.log(1.0 / eps) + math.log(depth + 1)
             + 2.0 * sum(math.log(p + 1) for p in widths))
    return (sparsity + 1) * inner
