"""Composite Hölder generators ``g = h_q o ... o h_0`` and their complexity indices.

Each component ``h_ij`` is a bounded-frequency trigonometric polynomial in
``t_i`` of the layer's inputs,

    h(x) = offset + sum_k c_k cos(2 pi <k, u> + theta_k),   u = (x_S - lo) / (hi - lo),

whose beta-Hölder norm has a closed-form upper bound in terms of ``|c_k|`` and
the angular frequencies.  Every layer maps the open unit cube into itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DomainError(ValueError):
    """Input point outside the declared domain cube."""


class RangeViolation(ArithmeticError):
    """A component left its declared output range by more than the tolerance."""


class InfeasibleSpec(ValueError):
    """No nonconstant member fits under the requested Hölder bound."""


RANGE_TOL = 1e-9


@dataclass(frozen=True)
class CompositeSpec:
    depth: int
    widths: tuple[int, ...]
    arities: tuple[int, ...]
    smoothnesses: tuple[float, ...]
    bound: float

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "arities", tuple(int(t) for t in self.arities))
        object.__setattr__(self, "smoothnesses", tuple(float(b) for b in self.smoothnesses))
        q = self.depth
        if q < 0:
            raise ValueError("depth must be >= 0")
        if len(self.widths) != q + 2 or len(self.arities) != q + 1 or len(self.smoothnesses) != q + 1:
            raise ValueError("need q+2 widths and q+1 arities/smoothnesses")
        if any(w < 1 for w in self.widths):
            raise ValueError("widths must be >= 1")
        if any(t < 1 or t > self.widths[i] for i, t in enumerate(self.arities)):
            raise ValueError("arities must satisfy 1 <= t_i <= d_i")
        if any(b <= 0 for b in self.smoothnesses):
            raise ValueError("smoothnesses must be positive")
        if self.bound <= 0:
            raise ValueError("bound must be positive")

    @property
    def latent_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "widths": list(self.widths),
            "arities": list(self.arities),
            "smoothnesses": list(self.smoothnesses),
            "bound": self.bound,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompositeSpec":
        return cls(int(data["depth"]), tuple(data["widths"]), tuple(data["arities"]),
                   tuple(data["smoothnesses"]), float(data["bound"]))


def adjusted_smoothness(spec: CompositeSpec) -> list[float]:
    """``beta_j * prod_{l > j} min(beta_l, 1)`` for every layer ``j``."""
    b = spec.smoothnesses
    return [b[j] * math.prod(min(x, 1.0) for x in b[j + 1:]) for j in range(len(b))]


def effective_smoothness(spec: CompositeSpec) -> tuple[int, float, int]:
    """Return ``(j_star, beta_star, t_star)``; ties go to the smallest layer index."""
    bt = adjusted_smoothness(spec)
    ratios = [t / b for t, b in zip(spec.arities, bt)]
    j = int(np.argmax(ratios))  # first maximizer
    return j, bt[j], spec.arities[j]


def _holder_split(beta: float) -> tuple[int, float]:
    """Integer part strictly below ``beta`` and the remaining exponent in (0, 1]."""
    k = int(math.ceil(beta)) - 1
    return k, beta - k


@dataclass(frozen=True)
class HolderComponent:
    smoothness: float
    active: tuple[int, ...]
    freqs: np.ndarray = field(repr=False)     # (K, t) integer frequency vectors
    coeffs: np.ndarray = field(repr=False)    # (K,)
    phases: np.ndarray = field(repr=False)    # (K,)
    offset: float = 0.5
    domain: tuple[float, float] = (0.0, 1.0)
    out_range: tuple[float, float] = (0.0, 1.0)

    @property
    def arity(self) -> int:
        return len(self.active)

    def angular(self) -> np.ndarray:
        lo, hi = self.domain
        return 2.0 * math.pi * np.asarray(self.freqs, dtype=float) / (hi - lo)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.domain
        u = (x[:, list(self.active)] - lo) / (hi - lo)
        arg = 2.0 * math.pi * u @ np.asarray(self.freqs, dtype=float).T + self.phases
        return self.offset + np.cos(arg) @ self.coeffs

    def sup_bound(self) -> float:
        return abs(self.offset) + float(np.abs(self.coeffs).sum())

    def lipschitz_bound(self) -> float:
        """Bound on ``sup |grad h|_2`` in the layer's own coordinates."""
        return float(np.abs(self.coeffs) @ np.linalg.norm(self.angular(), axis=1))

    def holder_norm_bound(self) -> float:
        """Certified upper bound on the beta-Hölder norm.

        Sums ``sup |D^a h|`` over ``|a| <= k`` plus the gamma-Hölder seminorm of
        the order-``k`` derivatives, using ``|cos s - cos r| <= 2^{1-g} |s-r|^g``.
        """
        k, gamma = _holder_split(self.smoothness)
        w = np.abs(self.angular())
        wn = np.linalg.norm(w, axis=1)
        total = abs(self.offset)
        t = w.shape[1]
        for c, wk, wnk in zip(np.abs(self.coeffs), w, wn):
            deriv = 0.0
            top = 0.0
            for order in range(k + 1):
                s = sum(math.prod(wk ** np.array(a)) for a in _multi_indices(t, order))
                deriv += s
                if order == k:
                    top = s
            total += c * (deriv + top * 2.0 ** (1.0 - gamma) * wnk ** gamma)
        return float(total)


def _multi_indices(t: int, order: int):
    """All ``a in N^t`` with ``|a| = order``."""
    if t == 1:
        yield (order,)
        return
    for first in range(order + 1):
        for rest in _multi_indices(t - 1, order - first):
            yield (first,) + rest


@dataclass(frozen=True)
class CompositeFunction:
    spec: CompositeSpec
    layers: tuple[tuple[HolderComponent, ...], ...]

    def __post_init__(self):
        if len(self.layers) != self.spec.depth + 1:
            raise ValueError("one layer of components per composition level")
        for i, layer in enumerate(self.layers):
            if len(layer) != self.spec.widths[i + 1]:
                raise ValueError(f"layer {i} needs {self.spec.widths[i + 1]} components")
            for h in layer:
                if h.arity != self.spec.arities[i]:
                    raise ValueError(f"layer {i}: component arity {h.arity} != {self.spec.arities[i]}")
                if any(a < 0 or a >= self.spec.widths[i] for a in h.active):
                    raise ValueError(f"layer {i}: active index out of range")

    @property
    def latent_dim(self) -> int:
        return self.spec.latent_dim

    @property
    def out_dim(self) -> int:
        return self.spec.out_dim

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return eval_composite(self, z)

    def holder_norm_bound(self) -> float:
        return max(h.holder_norm_bound() for layer in self.layers for h in layer)

    def lipschitz_bound(self) -> float:
        """Product over layers of the Euclidean Lipschitz bound of each ``h_i``."""
        return math.prod(math.sqrt(sum(h.lipschitz_bound() ** 2 for h in layer)) for layer in self.layers)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            **self.spec.to_dict(),
            "layers": [[{
                "smoothness": h.smoothness,
                "active": list(h.active),
                "freqs": np.asarray(h.freqs).tolist(),
                "coefficients": np.asarray(h.coeffs).tolist(),
                "phases": np.asarray(h.phases).tolist(),
                "offset": h.offset,
                "domain": list(h.domain),
                "out_range": list(h.out_range),
            } for h in layer] for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CompositeFunction":
        spec = CompositeSpec.from_dict(data)
        layers = tuple(tuple(HolderComponent(
            smoothness=float(c["smoothness"]),
            active=tuple(c["active"]),
            freqs=np.array(c["freqs"], dtype=int).reshape(-1, len(c["active"])),
            coeffs=np.array(c["coefficients"], dtype=float),
            phases=np.array(c["phases"], dtype=float),
            offset=float(c["offset"]),
            domain=tuple(c["domain"]),
            out_range=tuple(c["out_range"]),
        ) for c in layer) for layer in data["layers"])
        return cls(spec, layers)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "CompositeFunction":
        return cls.from_dict(json.loads(Path(path).read_text()))


def eval_composite(g: CompositeFunction, z) -> np.ndarray:
    """Evaluate layer by layer on a point or a batch of rows in the latent cube."""
    x = np.asarray(z, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != g.spec.widths[0]:
        raise DomainError(f"expected latent dimension {g.spec.widths[0]}, got {x.shape[1]}")
    lo, hi = g.layers[0][0].domain
    if np.any(x < lo) or np.any(x > hi):
        raise DomainError(f"latent point outside [{lo}, {hi}]^{x.shape[1]}")
    for i, layer in enumerate(g.layers):
        out = np.empty((x.shape[0], len(layer)))
        for j, h in enumerate(layer):
            v = h(x)
            a, b = h.out_range
            over = np.maximum(a - v, v - b).max()
            if over > RANGE_TOL:
                raise RangeViolation(f"layer {i} component {j} overshoots its range by {over:.3g}")
            out[:, j] = np.clip(v, a, b)
        x = out
    return x[0] if single else x


def identity_truth(d: int) -> CompositeFunction:
    """``q = 0`` composite ``z -> z``; uses a dedicated exact component type."""
    spec = CompositeSpec(0, (d, d), (1,), (1.0,), 2.0)
    layer = tuple(_IdentityComponent(smoothness=1.0, active=(j,), freqs=np.zeros((0, 1), dtype=int),
                                     coeffs=np.zeros(0), phases=np.zeros(0), offset=0.0)
                  for j in range(d))
    return CompositeFunction(spec, (layer,))


@dataclass(frozen=True)
class _IdentityComponent(HolderComponent):
    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x[:, self.active[0]].copy()

    def sup_bound(self) -> float:
        return 1.0

    def lipschitz_bound(self) -> float:
        return 1.0

    def holder_norm_bound(self) -> float:
        return 2.0


def make_synthetic_truth(seed: int, spec: CompositeSpec, max_freq: int = 2,
                         n_terms: int = 3, margin: float = 0.05) -> CompositeFunction:
    """Draw a member of ``G_0(q, d, t, beta, K)`` deterministically from ``seed``.

    Coefficients are scaled so that the certified Hölder norm is at most ``K``
    and every component stays inside ``(margin, 1 - margin)``.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x5EED])))
    offset = 0.5
    if spec.bound <= offset:
        raise InfeasibleSpec(f"K = {spec.bound} leaves no room above the constant offset {offset}")
    layers = []
    for i in range(spec.depth + 1):
        t, beta, d_in = spec.arities[i], spec.smoothnesses[i], spec.widths[i]
        comps = []
        for _ in range(spec.widths[i + 1]):
            active = tuple(sorted(rng.choice(d_in, size=t, replace=False).tolist()))
            freqs = rng.integers(0, max_freq + 1, size=(n_terms, t))
            freqs[np.all(freqs == 0, axis=1), 0] = 1
            raw = rng.uniform(-1.0, 1.0, size=n_terms)
            phases = rng.uniform(0.0, 2.0 * math.pi, size=n_terms)
            unit = HolderComponent(beta, active, freqs, raw / np.abs(raw).sum(), phases, offset=0.0)
            # amplitude limits: output range and Hölder budget
            amp_range = 0.5 - margin
            amp_norm = (spec.bound - offset) / unit.holder_norm_bound()
            amp = min(amp_range, amp_norm)
            comps.append(HolderComponent(beta, active, freqs, amp * raw / np.abs(raw).sum(), phases,
                                         offset=offset))
        layers.append(tuple(comps))
    g = CompositeFunction(spec, tuple(layers))
    if g.holder_norm_bound() > spec.bound * (1 + 1e-12):
        raise InfeasibleSpec("certified norm exceeds K")
    return g
