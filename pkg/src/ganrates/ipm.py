"""Integral probability metrics ``d_F(mu, nu) = sup_{f in F} |mu f - nu f|``.

Three discriminator classes are provided:

* :class:`FiniteSet` of 1-Lipschitz potentials (exact max over members),
* :class:`LipschitzNet`, a sparse ReLU critic with a certified Lipschitz bound,
* :class:`SmoothFeatureSet` of bounded smooth features with declared
  gradient and Hessian bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import ot
from .measures import EmpiricalMeasure, _apply, latent_dim, sample_latent
from .netgen import SparseReluNet, forward


class EmptyClass(ValueError):
    """A discriminator class with no members."""


# ---------------------------------------------------------------------------
# classes
# ---------------------------------------------------------------------------

@dataclass
class FiniteSet:
    """Finite class of 1-Lipschitz potentials.

    ``pairs`` optionally records, for member ``k``, the indices ``(j, l)`` of
    the netted generators whose potential it is.
    """

    members: list[ot.PotentialFn]
    pairs: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)

    def differences(self, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> np.ndarray:
        """``mu f_k - nu f_k`` for every member."""
        if not self.members:
            raise EmptyClass("finite class has no members")
        return np.array([mu.integrate(f) - nu.integrate(f) for f in self.members])

    def to_dict(self) -> dict:
        return {"members": [f.to_dict() for f in self.members], "pairs": [list(p) for p in self.pairs]}

    @classmethod
    def from_dict(cls, data: dict) -> "FiniteSet":
        return cls([ot.PotentialFn.from_dict(m) for m in data["members"]],
                   [tuple(p) for p in data.get("pairs", [])])


def spectral_bound(net: SparseReluNet) -> float:
    """Product of layer spectral norms, an upper bound on the Lipschitz constant."""
    return float(np.prod([np.linalg.norm(w, 2) for w in net.weights]))


@dataclass
class LipschitzNet:
    """Scalar sparse ReLU critic whose certified Lipschitz bound is at most ``lipschitz``."""

    net: SparseReluNet
    lipschitz: float

    def __post_init__(self):
        if self.net.out_dim != 1:
            raise ValueError("critic must be scalar-valued")
        if self.certified_bound() > self.lipschitz * (1 + 1e-12):
            raise ValueError(f"spectral bound {self.certified_bound():.6g} exceeds {self.lipschitz}")

    def certified_bound(self) -> float:
        return spectral_bound(self.net)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return forward(self.net, x)[:, 0]


@dataclass(frozen=True)
class FourierFeature:
    """``amp * cos(freq . x + phase)``."""

    freq: np.ndarray
    phase: float
    amp: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.amp * np.cos(np.asarray(x, float) @ np.asarray(self.freq) + self.phase)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        w = np.asarray(self.freq)
        return -self.amp * np.sin(np.asarray(x, float) @ w + self.phase)[:, None] * w[None, :]

    @property
    def grad_bound(self) -> float:
        return abs(self.amp) * float(np.linalg.norm(self.freq))

    @property
    def hessian_bound(self) -> float:
        return abs(self.amp) * float(np.dot(self.freq, self.freq))

    @property
    def sup_bound(self) -> float:
        return abs(self.amp)


@dataclass(frozen=True)
class QuadraticFeature:
    """``scale * |x - center|^2``, with bounds declared on the ball of ``radius``."""

    center: np.ndarray
    scale: float = 1.0
    radius: float = 1.0

    def __call__(self, x: np.ndarray) -> np.ndarray:
        d = np.asarray(x, float) - np.asarray(self.center)
        return self.scale * np.einsum("ij,ij->i", d, d)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * self.scale * (np.asarray(x, float) - np.asarray(self.center))

    @property
    def grad_bound(self) -> float:
        return 2.0 * abs(self.scale) * self.radius

    @property
    def hessian_bound(self) -> float:
        return 2.0 * abs(self.scale)

    @property
    def sup_bound(self) -> float:
        return abs(self.scale) * self.radius ** 2


@dataclass
class SmoothFeatureSet:
    features: list

    def __len__(self) -> int:
        return len(self.features)

    def lipschitz_bound(self) -> float:
        return max(f.grad_bound for f in self.features)

    def hessian_bound(self) -> float:
        return max(f.hessian_bound for f in self.features)

    def differences(self, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> np.ndarray:
        if not self.features:
            raise EmptyClass("feature set has no members")
        return np.array([mu.integrate(f) - nu.integrate(f) for f in self.features])

    @classmethod
    def random_fourier(cls, dim: int, count: int, freq_cap: float,
                       rng: np.random.Generator) -> "SmoothFeatureSet":
        """``count`` cosines with frequencies uniform in the ball of radius ``freq_cap``."""
        dirs = rng.standard_normal((count, dim))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        radii = freq_cap * rng.random(count) ** (1.0 / dim)
        phases = rng.uniform(0.0, 2 * math.pi, count)
        return cls([FourierFeature(d * r, float(p)) for d, r, p in zip(dirs, radii, phases)])

    def to_dict(self) -> dict:
        out = []
        for f in self.features:
            if isinstance(f, FourierFeature):
                out.append({"kind": "fourier", "freq": np.asarray(f.freq).tolist(),
                            "phase": f.phase, "amp": f.amp})
            else:
                out.append({"kind": "quadratic", "center": np.asarray(f.center).tolist(),
                            "scale": f.scale, "radius": f.radius})
        return {"features": out}

    @classmethod
    def from_dict(cls, data: dict) -> "SmoothFeatureSet":
        feats = []
        for f in data["features"]:
            if f["kind"] == "fourier":
                feats.append(FourierFeature(np.array(f["freq"], float), float(f["phase"]), float(f["amp"])))
            else:
                feats.append(QuadraticFeature(np.array(f["center"], float), float(f["scale"]), float(f["radius"])))
        return cls(feats)


DiscriminatorClass = FiniteSet | LipschitzNet | SmoothFeatureSet


def ipm(F: DiscriminatorClass, mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """``d_F(mu, nu)``.

    Exact for finite and feature classes.  For a :class:`LipschitzNet` it is
    the value at the given parameters, a lower bound on the sup over the class.
    """
    if isinstance(F, LipschitzNet):
        return abs(mu.integrate(F) - nu.integrate(F))
    return float(np.max(np.abs(F.differences(mu, nu))))


# ---------------------------------------------------------------------------
# constructed discriminator
# ---------------------------------------------------------------------------

def _outputs(g, z: np.ndarray) -> np.ndarray:
    return _apply(g, z)


def l2_distances(outputs: Sequence[np.ndarray]) -> np.ndarray:
    """Pairwise empirical ``L2(P_Z)`` distances between generator outputs."""
    k = len(outputs)
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            out[i, j] = out[j, i] = math.sqrt(np.mean(np.sum((outputs[i] - outputs[j]) ** 2, axis=1)))
    return out


def greedy_net(dist: np.ndarray, eps: float) -> list[int]:
    """Greedy farthest-point eps-net: every index lies within ``eps`` of a chosen one."""
    k = dist.shape[0]
    chosen = [0]
    gap = dist[0].copy()
    while gap.max() > eps:
        nxt = int(np.argmax(gap))
        chosen.append(nxt)
        gap = np.minimum(gap, dist[nxt])
    return chosen if k else []


@dataclass
class ConstructedClass(FiniteSet):
    """Finite class built from an eps-net of candidate generators.

    ``latent`` is the common latent sample defining both the net distance and
    the pushforwards the potentials were solved on; ``net`` indexes the
    netted candidates.
    """

    latent: np.ndarray | None = None
    net: list[int] = field(default_factory=list)
    eps: float = 0.0

    def pushforward(self, g) -> EmpiricalMeasure:
        return EmpiricalMeasure(_outputs(g, self.latent))


def build_constructed_discriminator(candidates: Sequence, m_atoms: int, eps: float,
                                    rng: np.random.Generator | None = None,
                                    latent: np.ndarray | None = None) -> ConstructedClass:
    """``{f_jk}``: Kantorovich potentials between every ordered pair of an
    eps-net of ``candidates``, each recentered so ``f(0) = 0``.

    One latent sample of ``m_atoms`` points drives both the net distance and
    the pushforward measures, so any two candidates are compared on exactly
    the atoms their netted representatives were solved on.
    """
    if not candidates:
        raise EmptyClass("no candidate generators")
    if latent is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        latent = sample_latent(latent_dim(candidates[0]), m_atoms, rng)
    outs = [_outputs(g, latent) for g in candidates]
    net = greedy_net(l2_distances(outs), eps)
    measures = [EmpiricalMeasure(outs[j]) for j in net]
    members, pairs = [], []
    for a, ma in enumerate(measures):
        for b, mb in enumerate(measures):
            if a == b:
                f = ot.PotentialFn.constant(ma.points.shape[1])
            else:
                f = ot.kantorovich_potential(ma, mb)
            members.append(f)
            pairs.append((net[a], net[b]))
    return ConstructedClass(members, pairs, latent=latent, net=list(net), eps=float(eps))


def deviation_check(F: FiniteSet, pairs: Sequence[tuple[EmpiricalMeasure, EmpiricalMeasure]]) -> float:
    """``max |W1(mu, nu) - d_F(mu, nu)|`` over the given measure pairs."""
    worst = 0.0
    for mu, nu in pairs:
        worst = max(worst, abs(ot.w1(mu, nu) - ipm(F, mu, nu)))
    return worst


# ---------------------------------------------------------------------------
# noise-level curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapPoint:
    sigma: float
    gap: float
    stderr: float
    bound: float = float("nan")


def smooth_gap_curve(g, f_smooth: Callable[[np.ndarray], np.ndarray], sigma_grid: Sequence[float],
                     n_mc: int, rng: np.random.Generator) -> list[GapPoint]:
    """``|E f(Y + sigma xi) - E f(Y)|`` with ``Y = g(Z)`` per noise level.

    One draw of ``(Z, xi)`` is shared across the grid and noise enters in
    antithetic pairs ``+-xi``, which removes every odd-order term exactly.
    """
    y = _outputs(g, sample_latent(latent_dim(g), n_mc, rng))
    xi = rng.standard_normal(y.shape)
    base = f_smooth(y)
    out = []
    for s in sigma_grid:
        diff = 0.5 * (f_smooth(y + s * xi) + f_smooth(y - s * xi)) - base
        se = float(diff.std(ddof=1) / math.sqrt(n_mc)) if n_mc > 1 else float("nan")
        out.append(GapPoint(float(s), abs(float(diff.mean())), se))
    return out


def chi_mean(D: int) -> float:
    """``E|xi|_2`` for a standard normal ``xi`` in ``R^D``."""
    return math.sqrt(2.0) * math.exp(math.lgamma((D + 1) / 2.0) - math.lgamma(D / 2.0))


def lipschitz_gap_curve(g, sigma_grid: Sequence[float], n_mc: int, rng: np.random.Generator,
                        F: DiscriminatorClass | None = None) -> list[GapPoint]:
    """Distance between ``g(Z) + sigma xi`` and ``g(Z)`` on matched latent draws.

    The gap is the exact W1 between the two samples, or ``d_F`` when a class
    ``F`` is given; ``bound`` is the matched-coupling value ``sigma E|xi|``.
    """
    y = _outputs(g, sample_latent(latent_dim(g), n_mc, rng))
    xi = rng.standard_normal(y.shape)
    mean_norm = chi_mean(y.shape[1])
    clean = EmpiricalMeasure(y)
    out = []
    for s in sigma_grid:
        noisy = EmpiricalMeasure(y + s * xi)
        gap = ot.w1(noisy, clean) if F is None else ipm(F, noisy, clean)
        out.append(GapPoint(float(s), float(gap), float("nan"), float(s) * mean_norm))
    return out
