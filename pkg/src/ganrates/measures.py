"""Latent sampling, pushforwards, Gaussian convolution and empirical measures."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Union

import numpy as np


def stream(seed: int, *task: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, *task)``.

    Distinct task tuples give independent streams, so work can be split
    across workers without changing any draw.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(t) for t in task]])
    return np.random.Generator(np.random.Philox(ss))


def fmt(x: float) -> str:
    """Shortest round-trip float text; used for every delimited output."""
    return repr(float(x))


@dataclass
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("points must be a nonempty (n, D) array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts
        if self.weights is None:
            self.weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (pts.shape[0],) or np.any(w < 0):
                raise ValueError("weights must be nonnegative, one per atom")
            total = w.sum()
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"weights sum to {total!r}, not 1")
            self.weights = w

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """``sum_i w_i f(x_i)`` for a vectorized ``f`` taking an (n, D) array."""
        vals = np.asarray(f(self.points), dtype=float).reshape(-1)
        if vals.shape[0] == 1 and self.n > 1:
            vals = np.full(self.n, vals[0])
        return float(np.dot(self.weights, vals))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    # -- CSV: header w,x1,...,xD --------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["w"] + [f"x{k + 1}" for k in range(self.dim)])
        for w, row in zip(self.weights, self.points):
            writer.writerow([fmt(w)] + [fmt(v) for v in row])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "EmpiricalMeasure":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if not header or header[0] != "w" or header[1:] != [f"x{k + 1}" for k in range(len(header) - 1)]:
            raise ValueError(f"bad header {header}")
        data = np.array(body, dtype=float)
        w = data[:, 0]
        # renormalize rounding drift from external writers
        return cls(data[:, 1:], w / w.sum())

    @classmethod
    def load_csv(cls, path) -> "EmpiricalMeasure":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class LatentSpec:
    """Uniform law on ``[0, 1]^dim``."""

    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("latent dimension must be >= 1")


Generator = Union[Callable[[np.ndarray], np.ndarray], object]


def _apply(g, z: np.ndarray) -> np.ndarray:
    out = np.asarray(g(z), dtype=float)
    return out[:, None] if out.ndim == 1 else out


def latent_dim(g) -> int:
    for attr in ("in_dim", "latent_dim"):
        if hasattr(g, attr):
            return int(getattr(g, attr))
    raise TypeError("generator does not expose its latent dimension")


@dataclass(frozen=True)
class NoisyModel:
    """``P_{g, sigma} = Q_g * N(0, sigma^2 I_D)``."""

    generator: object
    noise_sd: float = 0.0

    def __post_init__(self):
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")


def sample_latent(spec: LatentSpec | int, n: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.dim if isinstance(spec, LatentSpec) else int(spec)
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng.random((n, d))


def pushforward_sample(g, n: int, rng: np.random.Generator, latent: np.ndarray | None = None) -> EmpiricalMeasure:
    """Sample ``Q_g``: points ``g(Z_i)`` with ``Z_i`` uniform on the latent cube."""
    z = sample_latent(latent_dim(g), n, rng) if latent is None else latent
    return EmpiricalMeasure(_apply(g, z))


def noisy_sample(model: NoisyModel, n: int, rng: np.random.Generator) -> EmpiricalMeasure:
    z = sample_latent(latent_dim(model.generator), n, rng)
    y = _apply(model.generator, z)
    if model.noise_sd > 0:
        y = y + model.noise_sd * rng.standard_normal(y.shape)
    return EmpiricalMeasure(y)


def perturb(data: EmpiricalMeasure, sigma_tilde: float, rng: np.random.Generator) -> EmpiricalMeasure:
    """Add i.i.d. ``N(0, sigma_tilde^2 I)`` to every atom; weights are kept."""
    if sigma_tilde < 0:
        raise ValueError("sigma_tilde must be nonnegative")
    if sigma_tilde == 0:
        return EmpiricalMeasure(data.points.copy(), data.weights.copy())
    pts = data.points + sigma_tilde * rng.standard_normal(data.points.shape)
    return EmpiricalMeasure(pts, data.weights.copy())
