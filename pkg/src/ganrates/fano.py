"""Lower-bound construction: bump-perturbed generators, their densities,
divergence and transport bounds, Hamming packings and the Fano bound."""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
import sympy as sp

from . import ot
from .measures import EmpiricalMeasure


class AmplitudeTooLarge(ValueError):
    """The cell map is not monotone enough (Jacobian below the 0.5 floor)."""


class QuadratureFailure(RuntimeError):
    pass


class BudgetExceeded(RuntimeError):
    pass


JACOBIAN_FLOOR = 0.5
GRID_PER_CELL = 64


# ---------------------------------------------------------------------------
# bump
# ---------------------------------------------------------------------------

def bump(z) -> np.ndarray:
    """``exp(4 - 1/(z(1-z)))`` on (0, 1), zero elsewhere; smooth with maximum 1 at 1/2."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = (z > 0) & (z < 1)
    zi = z[inside]
    out[inside] = np.exp(4.0 - 1.0 / (zi * (1.0 - zi)))
    return out


def bump_prime(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    inside = (z > 0) & (z < 1)
    zi = z[inside]
    w = zi * (1.0 - zi)
    out[inside] = np.exp(4.0 - 1.0 / w) * (1.0 - 2.0 * zi) / (w * w)
    return out


@functools.lru_cache(maxsize=None)
def bump_constants() -> tuple[float, float, float]:
    """``(sup |phi'|, int phi, int |phi'|)`` on a fine grid."""
    u = np.linspace(0.0, 1.0, 200_001)
    dp = np.abs(bump_prime(u))
    h = u[1] - u[0]
    return float(dp.max()), float(np.trapezoid(bump(u), dx=h)), float(np.trapezoid(dp, dx=h))


# ---------------------------------------------------------------------------
# configuration and maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FanoConfig:
    m: int
    d: int
    beta: float
    c1: float

    def __post_init__(self):
        if self.m < 1 or self.d < 1 or self.beta <= 0 or self.c1 < 0:
            raise ValueError("need m >= 1, d >= 1, beta > 0, c1 >= 0")

    @property
    def cells(self) -> int:
        return self.m ** self.d

    @property
    def amplitude(self) -> float:
        """``c1 / m^beta``, the displacement scale of the first coordinate."""
        return self.c1 / self.m ** self.beta

    @property
    def slope_amplitude(self) -> float:
        """``c1 / m^(beta - 1)``, the scale of the Jacobian perturbation."""
        return self.c1 / self.m ** (self.beta - 1.0)

    def cell_index(self, j: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(j, (self.m,) * self.d))

    def min_jacobian(self) -> float:
        """Minimum of ``dy1/dz1`` over a 64-per-cell grid, worst case over signs."""
        u = (np.arange(GRID_PER_CELL) + 0.5) / GRID_PER_CELL
        worst = np.max(np.abs(bump_prime(u)))
        # other factors peak at 1, so the worst sign pattern gives this value
        return 1.0 - self.slope_amplitude * worst

    def check(self) -> None:
        if self.min_jacobian() < JACOBIAN_FLOOR:
            raise AmplitudeTooLarge(f"c1={self.c1} gives Jacobian {self.min_jacobian():.4f} < {JACOBIAN_FLOOR}")


def auto_c1(m: int, d: int, beta: float, kmax: int = 60) -> float:
    """Largest ``2^-k`` meeting the Jacobian floor at this ``m``."""
    for k in range(kmax + 1):
        c1 = 2.0 ** -k
        if FanoConfig(m, d, beta, c1).min_jacobian() >= JACOBIAN_FLOOR:
            return c1
    raise AmplitudeTooLarge("no admissible amplitude")


def _split(cfg: FanoConfig, pts: np.ndarray):
    """Cell multi-index and local coordinates ``m (x - j/m)`` of every point."""
    idx = np.clip(np.floor(pts * cfg.m).astype(int), 0, cfg.m - 1)
    return idx, pts * cfg.m - idx


def _sign_of(cfg: FanoConfig, alpha: np.ndarray, idx: np.ndarray) -> np.ndarray:
    flat = np.ravel_multi_index(tuple(idx.T), (cfg.m,) * cfg.d)
    return np.asarray(alpha, dtype=float)[flat]


def _as_points(cfg: FanoConfig, z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None] if cfg.d == 1 else z[None, :]
    if z.shape[1] != cfg.d:
        raise ValueError(f"points must have dimension {cfg.d}")
    return z


def _check_alpha(cfg: FanoConfig, alpha) -> np.ndarray:
    a = np.asarray(alpha, dtype=float).ravel()
    if a.size != cfg.cells or not np.all(np.abs(a) == 1):
        raise ValueError(f"alpha must be a +-1 vector of length {cfg.cells}")
    return a


def fano_g(cfg: FanoConfig, alpha):
    """``g_alpha``: perturbs the first coordinate by ``c1/m^beta * alpha_j * prod phi``."""
    cfg.check()
    a = _check_alpha(cfg, alpha)

    def g(z):
        z = _as_points(cfg, z)
        idx, loc = _split(cfg, z)
        prod = np.prod(bump(loc[:, 1:]), axis=1) if cfg.d > 1 else 1.0
        out = z.copy()
        out[:, 0] = z[:, 0] + cfg.amplitude * _sign_of(cfg, a, idx) * bump(loc[:, 0]) * prod
        return out

    g.latent_dim = cfg.d
    return g


def _invert_first(cfg: FanoConfig, a: np.ndarray, y: np.ndarray, tol: float = 1e-12):
    """Bisection for ``z1`` with ``g_alpha(z1, y_2..) = y``, cell by cell."""
    idx, loc = _split(cfg, y)
    prod = np.prod(bump(loc[:, 1:]), axis=1) if cfg.d > 1 else np.ones(len(y))
    s = _sign_of(cfg, a, idx) * prod * cfg.amplitude
    lo = idx[:, 0] / cfg.m
    hi = (idx[:, 0] + 1) / cfg.m
    target = y[:, 0]
    lo = lo.astype(float).copy()
    hi = hi.astype(float).copy()
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        val = mid + s * bump(cfg.m * mid - idx[:, 0])
        below = val < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    z1 = 0.5 * (lo + hi)
    return z1, idx, s / cfg.amplitude if cfg.amplitude else s


def fano_density(cfg: FanoConfig, alpha, y) -> np.ndarray:
    """``q_alpha(y) = (1 + c1/m^(beta-1) * alpha_j * phi'(.) prod phi(.))^-1``."""
    cfg.check()
    a = _check_alpha(cfg, alpha)
    y = _as_points(cfg, y)
    if np.any((y < 0) | (y > 1)):
        raise ValueError("y must lie in the unit cube")
    z1, idx, signed = _invert_first(cfg, a, y)
    jac = 1.0 + cfg.slope_amplitude * signed * bump_prime(cfg.m * z1 - idx[:, 0])
    return 1.0 / jac


# ---------------------------------------------------------------------------
# quadrature: KL and Hellinger
# ---------------------------------------------------------------------------

def _cell_rule(cfg: FanoConfig, order: int):
    """Tensor Gauss-Legendre nodes and weights covering every cell of the cube."""
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    nodes_1d = ((np.arange(cfg.m)[:, None] + x[None, :]) / cfg.m).ravel()
    w_1d = np.tile(w / cfg.m, cfg.m)
    grids = np.meshgrid(*([nodes_1d] * cfg.d), indexing="ij")
    wgrids = np.meshgrid(*([w_1d] * cfg.d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts


def integrate_density(cfg: FanoConfig, alpha, order: int = 24) -> float:
    pts, wts = _cell_rule(cfg, order)
    return float(wts @ fano_density(cfg, alpha, pts))


def kl_pair(cfg: FanoConfig, alpha, alpha_prime, order: int = 16, rtol: float = 1e-6,
            max_order: int = 256) -> tuple[float, float]:
    """``(KL(q_alpha, q_alpha'), Hellinger^2)`` by per-cell tensor quadrature.

    The order doubles until consecutive KL values agree to ``rtol`` (relative,
    with an absolute floor of 1e-15).  Hellinger is ``int (sqrt p - sqrt q)^2``.
    """
    prev = None
    while order <= max_order:
        pts, wts = _cell_rule(cfg, order)
        p = fano_density(cfg, alpha, pts)
        q = fano_density(cfg, alpha_prime, pts)
        kl = float(wts @ (p * np.log(p / q)))
        h2 = float(wts @ (np.sqrt(p) - np.sqrt(q)) ** 2)
        if prev is not None and abs(kl - prev) <= rtol * abs(kl) + 1e-15:
            return max(kl, 0.0), h2
        prev = kl
        order *= 2
    raise QuadratureFailure(f"KL quadrature did not settle by order {max_order}")


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------

@dataclass
class PackingSet:
    codewords: np.ndarray  # (k, J) entries +-1

    def __len__(self) -> int:
        return self.codewords.shape[0]

    def min_distance(self) -> int:
        c = self.codewords
        if len(c) < 2:
            return c.shape[1]
        diff = (c[:, None, :] != c[None, :, :]).sum(axis=2)
        diff[np.diag_indices(len(c))] = c.shape[1]
        return int(diff.min())


def packing_target(J_size: int) -> int:
    return int(math.ceil(math.exp(J_size / 16.0)))


def gv_packing(J_size: int, rng: np.random.Generator, budget: int = 200_000) -> PackingSet:
    """Greedy Gilbert-Varshamov packing at Hamming distance ``J/4``."""
    if J_size < 16:
        raise ValueError("J_size must be at least 16")
    need = packing_target(J_size)
    radius = J_size / 4.0
    kept = np.empty((0, J_size), dtype=np.int8)
    for _ in range(budget):
        cand = rng.choice(np.array([-1, 1], dtype=np.int8), size=J_size)
        if len(kept) == 0 or np.min(np.sum(kept != cand, axis=1)) >= radius:
            kept = np.vstack([kept, cand])
            if len(kept) >= need:
                return PackingSet(kept)
    raise BudgetExceeded(f"found {len(kept)} of {need} codewords within {budget} draws")


# ---------------------------------------------------------------------------
# transport lower bound
# ---------------------------------------------------------------------------

def hamming(alpha, alpha_prime) -> int:
    return int(np.sum(np.asarray(alpha).ravel() != np.asarray(alpha_prime).ravel()))


def w1_between(cfg: FanoConfig, alpha, alpha_prime, n_mc: int, rng: np.random.Generator) -> float:
    """``W1(Q_alpha, Q_alpha')``.

    On the line ``g_alpha`` is increasing, hence it is the quantile function
    and W1 is ``int |g_alpha - g_alpha'|`` (midpoint rule on ``n_mc`` nodes).
    In two dimensions it is the exact transport cost between pushforwards of
    one shared latent sample.
    """
    ga, gb = fano_g(cfg, alpha), fano_g(cfg, alpha_prime)
    if cfg.d == 1:
        u = ((np.arange(n_mc) + 0.5) / n_mc)[:, None]
        return float(np.mean(np.abs(ga(u)[:, 0] - gb(u)[:, 0])))
    if cfg.d > 2:
        raise ValueError("transport check supports d <= 2")
    z = rng.random((n_mc, cfg.d))
    return ot.w1(EmpiricalMeasure(ga(z)), EmpiricalMeasure(gb(z)))


def excess_rhs(cfg: FanoConfig, H: int, c3: float) -> float:
    """``c1 c3 H / m^(beta + d)``."""
    return cfg.c1 * c3 * H / cfg.m ** (cfg.beta + cfg.d)


CALIBRATION_MC = 4096
C3_FRACTION = 0.5


@functools.lru_cache(maxsize=None)
def calibrate_c3(beta: float, d: int, c1: float, m: int = 2, n_mc: int = CALIBRATION_MC) -> float:
    """``c3`` from a full flip at ``m = 2``: half the measured ratio ``W1 m^(beta+d) / (c1 H)``.

    The factor one half stands in for the fraction of excess mass that must
    travel a cell-scale distance.
    """
    cfg = FanoConfig(m, d, beta, c1)
    plus = np.ones(cfg.cells)
    w = w1_between(cfg, plus, -plus, n_mc, np.random.default_rng(0x5EED))
    return C3_FRACTION * w * m ** (beta + d) / (c1 * cfg.cells)


def w1_excess_check(cfg: FanoConfig, alpha, alpha_prime, n_mc: int,
                    rng: np.random.Generator) -> tuple[float, float]:
    """``(W1(Q_alpha, Q_alpha'), c1 c3 H / m^(beta+d))`` with ``c3`` frozen by :func:`calibrate_c3`."""
    if cfg.d > 2:
        raise ValueError("transport check supports d <= 2")
    lhs = w1_between(cfg, alpha, alpha_prime, n_mc, rng)
    c3 = calibrate_c3(float(cfg.beta), cfg.d, float(cfg.c1))
    return lhs, excess_rhs(cfg, hamming(alpha, alpha_prime), c3)


# ---------------------------------------------------------------------------
# Fano bound and rates
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def calibrate_kl(beta: float, d: int, c1: float, m: int = 2) -> float:
    """``C`` with ``KL = C c1^2 m^(-2(beta-1))`` at a full flip of the ``m``-grid."""
    cfg = FanoConfig(m, d, beta, c1)
    plus = np.ones(cfg.cells)
    kl, _ = kl_pair(cfg, plus, -plus)
    return kl / (c1 ** 2 * m ** (-2.0 * (beta - 1.0)))


def grid_size(n: float, beta: float, d: int) -> int:
    expo = d + 2.0 * (beta - 1.0)
    if expo <= 0:
        raise ValueError("need d + 2(beta - 1) > 0")
    return max(1, int(math.ceil(n ** (1.0 / expo) - 1e-12)))


def fano_bound(n: float, beta: float, d: int, c1: float | None = None,
               C: float | None = None, c3: float | None = None) -> float:
    """``(c1 c3 / m^beta) (1 - (n c1^2 C m^(-2(beta-1)) + log 2) / (m^d / 16))``, clamped at 0.

    ``m = ceil(n^(1/(d + 2(beta-1))))``.  Unless given, ``c1`` is the largest
    admissible power of two at ``m = 1``, and ``C``, ``c3`` come from the
    calibrations at ``m = 2``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    m = grid_size(n, beta, d)
    if c1 is None:
        c1 = auto_c1(1, d, beta) if beta >= 1 else auto_c1(m, d, beta)
    if C is None:
        C = calibrate_kl(float(beta), d, float(c1))
    if c3 is None:
        c3 = calibrate_c3(float(beta), d, float(c1)) if d <= 2 else 1.0
    inner = 1.0 - (n * c1 ** 2 * C * m ** (-2.0 * (beta - 1.0)) + math.log(2.0)) / (m ** d / 16.0)
    return max(0.0, c1 * c3 / m ** beta * inner)


def bound_exponent(beta, d) -> sp.Expr:
    """Exponent of ``n`` in the Fano bound along ``m = n^(1/(d + 2(beta-1)))``.

    Evaluated symbolically as ``lim log(bound) / log(n)`` with small fixed
    constants; inputs may be sympy rationals or symbols-free numbers.
    """
    n = sp.Symbol("n", positive=True)
    beta = sp.nsimplify(beta)
    d = sp.nsimplify(d)
    c1, C, c3 = sp.Rational(1, 8), sp.Rational(1, 2), sp.Rational(1, 3)
    m = n ** (1 / (d + 2 * (beta - 1)))
    B = c1 * c3 / m ** beta * (1 - (n * c1 ** 2 * C * m ** (-2 * (beta - 1)) + sp.log(2)) / (m ** d / 16))
    return sp.limit(sp.log(B) / sp.log(n), n, sp.oo)


def rate_exponents(beta_star: float, t_star: float, d: int | None = None) -> dict:
    """Exponents of ``n`` for the GAN rate, the likelihood rate and the lower bound.

    ``lower`` uses ``beta_star`` and ``d`` (defaults to ``t_star``); it is
    flagged when it is faster than ``n^(-1/2)`` or undefined.
    """
    if beta_star <= 0 or t_star <= 0:
        raise ValueError("positive inputs required")
    d = t_star if d is None else d
    gan = -beta_star / (2 * beta_star + t_star)
    mle = -beta_star / (2 * (beta_star + t_star))
    denom = 2 * beta_star + d - 2
    lower = -beta_star / denom if denom > 0 else float("nan")
    flagged = not (denom > 0) or lower < -0.5
    return {"gan": gan, "mle": mle, "lower": lower, "lower_flagged": bool(flagged)}


def all_signs(J_size: int):
    """Every sign vector of length ``J_size`` (small ``J`` only)."""
    for bits in itertools.product((-1, 1), repeat=J_size):
        yield np.array(bits, dtype=float)
