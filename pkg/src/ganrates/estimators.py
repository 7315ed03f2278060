"""GAN-type estimator, perturbed-data sieve MLE and the oracle-inequality audit."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import ot
from .ipm import (ConstructedClass, DiscriminatorClass, FiniteSet, LipschitzNet,
                  SmoothFeatureSet, ipm, spectral_bound)
from .measures import (EmpiricalMeasure, NoisyModel, _apply, fmt, latent_dim, noisy_sample, perturb,
                       sample_latent)
from .netgen import SparseReluNet, backward, forward, project, random_net


class NonFiniteLoss(FloatingPointError):
    """The objective or a gradient became NaN or infinite."""


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray], sign: float = -1.0) -> list[np.ndarray]:
        """One update; ``sign=-1`` descends, ``+1`` ascends."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        out = []
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k, (p, g) in enumerate(zip(params, grads)):
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            out.append(p + sign * self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps))
        return out


# ---------------------------------------------------------------------------
# GAN-type estimator
# ---------------------------------------------------------------------------

@dataclass
class GanConfig:
    """Generator class ``D(L, p, s, F)`` plus optimizer knobs.

    ``discriminator=None`` means the full 1-Lipschitz class: the inner sup is
    the exact W1 critic, recomputed by optimal transport at every step.
    """

    widths: tuple[int, ...]
    sparsity: int
    sup_bound: float
    discriminator: DiscriminatorClass | None = None
    outer_steps: int = 200
    step_size: float = 0.01
    m_latent: int = 256
    restarts: int = 1
    init_scale: float = 0.5
    eval_latent: int = 1024
    search_factor: int = 10
    critic_steps: int = 5
    critic_step_size: float = 0.05
    lr_floor: float = 1.0

    def __post_init__(self):
        if self.outer_steps < 0 or self.restarts < 1 or self.m_latent < 1:
            raise ValueError("outer_steps >= 0, restarts >= 1 and m_latent >= 1 required")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.lr_floor <= 1:
            raise ValueError("lr_floor must lie in (0, 1]")


@dataclass
class GanResult:
    net: SparseReluNet
    objective: float
    eps_opt: float
    trace: list[tuple[int, float, int]]

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "objective", "nonzeros"])
        for step, obj, nnz in self.trace:
            w.writerow([step, fmt(obj), nnz])
        return buf.getvalue()


def _critic(F, fake: np.ndarray, data: EmpiricalMeasure, data_means):
    """Maximizing member for ``d_F(fake, data)``: returns (value, signed gradient fn)."""
    mu = EmpiricalMeasure(fake)
    if F is None:
        f = ot.kantorovich_potential(mu, data)
        return mu.integrate(f) - data.integrate(f), f.gradient
    if isinstance(F, LipschitzNet):
        val = mu.integrate(F) - data.integrate(F)
        s = 1.0 if val >= 0 else -1.0

        def grad(y):
            return s * backward(F.net, y, np.ones((y.shape[0], 1))).inputs
        return abs(val), grad
    members = F.members if isinstance(F, FiniteSet) else F.features
    diffs = np.array([mu.integrate(f) for f in members]) - data_means
    k = int(np.argmax(np.abs(diffs)))
    s = 1.0 if diffs[k] >= 0 else -1.0
    return abs(float(diffs[k])), (lambda y: s * members[k].gradient(y))


def _critic_ascent(F: LipschitzNet, fake: np.ndarray, data: EmpiricalMeasure, steps: int, lr: float) -> LipschitzNet:
    """A few ascent steps on ``|mu f - nu f|``, rescaled back inside the Lipschitz budget."""
    net = F.net
    for _ in range(steps):
        val = np.mean(forward(net, fake)) - np.mean(forward(net, data.points))
        s = 1.0 if val >= 0 else -1.0
        gp = backward(net, fake, np.full((fake.shape[0], 1), s / fake.shape[0]))
        gq = backward(net, data.points, np.full((data.n, 1), -s / data.n))
        params = [p + lr * (a + b) for p, a, b in zip(net.parameters(), gp.parameters(), gq.parameters())]
        net = net.with_parameters([np.clip(p, -1, 1) for p in params])
        bound = spectral_bound(net)
        if bound > F.lipschitz:
            scale = (F.lipschitz / bound) ** (1.0 / len(net.weights))
            net = net.with_parameters([w * scale for w in net.weights] + net.shifts)
    return LipschitzNet(net, F.lipschitz)


def _data_means(F, data: EmpiricalMeasure):
    if isinstance(F, FiniteSet):
        return np.array([data.integrate(f) for f in F.members])
    if isinstance(F, SmoothFeatureSet):
        return np.array([data.integrate(f) for f in F.features])
    return None


def gan_objective(net, F, data: EmpiricalMeasure, latent: np.ndarray) -> float:
    """``d_F(Q_hat_net, P_n)`` on a fixed latent sample (W1 when ``F`` is None)."""
    fake = EmpiricalMeasure(forward(net, latent))
    if F is None:
        return ot.w1(fake, data)
    return ipm(F, fake, data)


def cosine_lr(base: float, step: int, total: int, floor: float) -> float:
    """Cosine decay from ``base`` to ``floor * base`` over ``total`` steps."""
    if total <= 1 or floor >= 1:
        return base
    frac = (step - 1) / (total - 1)
    return base * (floor + (1 - floor) * 0.5 * (1 + math.cos(math.pi * frac)))


def _fit_once(data, cfg: GanConfig, rng, eval_z, means, step_offset, trace):
    net = random_net(cfg.widths, cfg.sparsity, cfg.sup_bound, rng, cfg.init_scale)
    F = cfg.discriminator
    opt = Adam(cfg.step_size)
    best_net, best = net, gan_objective(net, F, data, eval_z)
    if not math.isfinite(best):
        raise NonFiniteLoss("objective at initialization is not finite")
    trace.append((step_offset, best, net.nonzeros()))
    batch = data
    for step in range(1, cfg.outer_steps + 1):
        z = sample_latent(net.in_dim, cfg.m_latent, rng)
        fake = forward(net, z)
        if F is None and data.dim > 1 and data.n != cfg.m_latent:
            # equal-size minibatch keeps the exact critic on the assignment route
            batch = EmpiricalMeasure(data.points[rng.choice(data.n, cfg.m_latent, replace=data.n < cfg.m_latent)])
        if isinstance(F, LipschitzNet):
            F = _critic_ascent(F, fake, data, cfg.critic_steps, cfg.critic_step_size)
        _, grad_fn = _critic(F, fake, batch, means)
        up = grad_fn(fake) / fake.shape[0]
        grads = backward(net, z, up)
        gp = grads.parameters()
        opt.lr = cosine_lr(cfg.step_size, step, cfg.outer_steps, cfg.lr_floor)
        if not all(np.all(np.isfinite(g)) for g in gp):
            raise NonFiniteLoss("non-finite gradient")
        net = project(net.with_parameters(opt.step(net.parameters(), gp)))
        obj = gan_objective(net, F, data, eval_z)
        if not math.isfinite(obj):
            raise NonFiniteLoss(f"objective became {obj} at step {step}")
        trace.append((step_offset + step, obj, net.nonzeros()))
        if obj < best:
            best_net, best = net, obj
    return best_net, best


def gan_fit(data: EmpiricalMeasure, cfg: GanConfig, rng: np.random.Generator) -> GanResult:
    """Projected-Adam fit of ``argmin_g d_F(Q_g, P_n)`` over ``D(L, p, s, F)``.

    Each step draws fresh latent points for the gradient; the trace and the
    best-so-far choice use one fixed evaluation latent set.  ``eps_opt`` is the
    gap between the returned objective and the best value seen anywhere,
    including a random search over ``search_factor * restarts`` class members.
    """
    if cfg.widths[-1] != data.dim:
        raise ValueError("generator output dimension must match the data")
    eval_n = data.n if (cfg.discriminator is None and data.dim > 1) else cfg.eval_latent
    eval_z = sample_latent(cfg.widths[0], eval_n, rng)
    means = _data_means(cfg.discriminator, data)
    trace: list[tuple[int, float, int]] = []
    best_net, best = None, math.inf
    for r in range(cfg.restarts):
        try:
            net, obj = _fit_once(data, cfg, rng, eval_z, means, r * (cfg.outer_steps + 1), trace)
        except NonFiniteLoss:
            continue
        if obj < best:
            best_net, best = net, obj
    if best_net is None:
        raise NonFiniteLoss("every restart diverged")
    searched = math.inf
    for _ in range(cfg.search_factor * cfg.restarts):
        cand = random_net(cfg.widths, cfg.sparsity, cfg.sup_bound, rng, float(rng.uniform(0.05, 1.0)))
        val = gan_objective(cand, cfg.discriminator, data, eval_z)
        if math.isfinite(val):
            searched = min(searched, val)
    eps_opt = max(0.0, best - min(best, searched))
    return GanResult(best_net, best, eps_opt, trace)


# ---------------------------------------------------------------------------
# sieve MLE on perturbed data
# ---------------------------------------------------------------------------

SIGMA_MIN, SIGMA_MAX = 1e-3, 1.0


def mc_loglik(y_gen: np.ndarray, x: np.ndarray, sigma: float) -> float:
    """Mean over data of ``log[(1/M) sum_m phi_sigma(x_i - y_m)]``."""
    D = x.shape[1]
    d2 = np.sum((x[:, None, :] - y_gen[None, :, :]) ** 2, axis=2)
    ll = logsumexp(-d2 / (2 * sigma ** 2), axis=1) - math.log(y_gen.shape[0])
    return float(np.mean(ll) - 0.5 * D * math.log(2 * math.pi * sigma ** 2))


def _loglik_grads(y_gen, x, sigma):
    D = x.shape[1]
    diff = x[:, None, :] - y_gen[None, :, :]
    d2 = np.sum(diff ** 2, axis=2)
    a = -d2 / (2 * sigma ** 2)
    lse = logsumexp(a, axis=1, keepdims=True)
    w = np.exp(a - lse)  # posterior weights over latent draws
    n = x.shape[0]
    obj = float(np.mean(lse) - math.log(y_gen.shape[0]) - 0.5 * D * math.log(2 * math.pi * sigma ** 2))
    g_y = np.einsum("im,imd->md", w, diff) / (sigma ** 2 * n)
    g_s2 = float(np.sum(w * d2) / (2 * sigma ** 4 * n) - D / (2 * sigma ** 2))
    return obj, g_y, g_s2


@dataclass
class MleResult:
    net: SparseReluNet
    sigma_fit: float
    sigma_tilde: float
    objective: float
    trace: list[tuple[int, float, int]]


def _mle_once(x, sigma_tilde, widths, sparsity, sup_bound, M_latent, steps, rng,
              step_size, sigma_fit, init_scale, batch, warmup, lr_floor):
    net = random_net(widths, sparsity, sup_bound, rng, init_scale)
    opt = Adam(step_size)
    opt_s = Adam(step_size)
    s_fit = float(np.clip(sigma_fit, SIGMA_MIN, SIGMA_MAX))
    trace = []
    for step in range(1, steps + 1):
        z = sample_latent(widths[0], M_latent, rng)
        y = forward(net, z)
        xb = x if batch is None or batch >= len(x) else x[rng.choice(len(x), batch, replace=False)]
        sigma = math.sqrt(sigma_tilde ** 2 + s_fit ** 2)
        obj, g_y, g_s2 = _loglik_grads(y, xb, sigma)
        if not math.isfinite(obj):
            raise NonFiniteLoss(f"log-likelihood became {obj} at step {step}")
        grads = backward(net, z, g_y).parameters()
        opt.lr = opt_s.lr = cosine_lr(step_size, step, steps, lr_floor)
        net = project(net.with_parameters(opt.step(net.parameters(), grads, sign=+1.0)))
        if step > warmup * steps:
            s_fit = float(np.clip(opt_s.step([np.array(s_fit)], [np.array(g_s2 * 2 * s_fit)], sign=+1.0)[0],
                                  SIGMA_MIN, SIGMA_MAX))
        trace.append((step, obj, net.nonzeros()))
    return net, s_fit, trace


def mle_fit(data: EmpiricalMeasure, sigma_tilde: float, widths: Sequence[int], sparsity: int,
            sup_bound: float, M_latent: int, steps: int, rng: np.random.Generator,
            step_size: float = 0.01, sigma_fit: float = 0.1, init_scale: float = 0.5,
            batch: int | None = None, warmup: float = 0.0, lr_floor: float = 1.0,
            restarts: int = 1) -> MleResult:
    """Sieve MLE of ``P_{g, sigma}`` on data perturbed by ``N(0, sigma_tilde^2 I)``.

    The model density at ``x`` is the Monte Carlo mixture
    ``(1/M) sum_m phi_s(x - g(z_m))`` with ``s^2 = sigma_tilde^2 + sigma_fit^2``;
    ``g`` and ``sigma_fit`` ascend its log-likelihood with projection after
    every step and ``sigma_fit`` kept in ``[1e-3, 1]``.  During the first
    ``warmup`` fraction of steps ``sigma_fit`` is held at its initial value,
    which keeps an early wide-noise fit from absorbing the spread of the data.
    With several restarts the fit with the largest full-data log-likelihood
    (on one shared latent sample of ``4 M`` points) is returned.
    """
    if sigma_tilde <= 0:
        raise ValueError("sigma_tilde must be positive")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    widths = tuple(widths)
    x = perturb(data, sigma_tilde, rng).points
    z_eval = sample_latent(widths[0], 4 * M_latent, rng)
    best = None
    trace: list[tuple[int, float, int]] = []
    for r in range(restarts):
        net, s_fit, tr = _mle_once(x, sigma_tilde, widths, sparsity, sup_bound, M_latent, steps, rng,
                                   step_size, sigma_fit, init_scale, batch, warmup, lr_floor)
        trace.extend((r * steps + k, o, nz) for k, o, nz in tr)
        score = mc_loglik(forward(net, z_eval), x, math.sqrt(sigma_tilde ** 2 + s_fit ** 2))
        if best is None or score > best[0]:
            best = (score, net, s_fit)
    return MleResult(best[1], best[2], float(sigma_tilde), best[0], trace)


def mle_perturbation(n: int, beta_star: float, t_star: float, scale: float = 1.0) -> float:
    """Perturbation level ``scale * n^{-beta/(2(beta + t))}`` matched to the likelihood rate."""
    return scale * n ** (-beta_star / (2.0 * (beta_star + t_star)))


# ---------------------------------------------------------------------------
# evaluation and the oracle audit
# ---------------------------------------------------------------------------

def _w1_samples(a: np.ndarray, b: np.ndarray) -> float:
    return ot.w1(EmpiricalMeasure(a), EmpiricalMeasure(b))


def evaluate_estimator(net, truth: NoisyModel | object, n_eval: int, rng: np.random.Generator,
                       common_latent: bool = False) -> float:
    """``W1(Q_net, Q_0)`` between fresh ``n_eval``-sample pushforwards (no noise)."""
    g0 = truth.generator if isinstance(truth, NoisyModel) else truth
    z = sample_latent(latent_dim(g0), n_eval, rng)
    z2 = z if common_latent else sample_latent(latent_dim(net), n_eval, rng)
    return _w1_samples(_apply(net, z2), _apply(g0, z))


@dataclass
class OracleTerms:
    eps1: float
    eps2: float
    eps3: float
    eps4: float
    base: float
    se: dict = field(default_factory=dict)

    def bound(self) -> float:
        return 2 * self.base + 5 * self.eps1 + self.eps2 + 2 * self.eps3 + 2 * self.eps4

    def bound_se(self) -> float:
        w = {"base": 2, "eps1": 5, "eps2": 1, "eps3": 2, "eps4": 2}
        return math.sqrt(sum((w[k] * self.se.get(k, 0.0)) ** 2 for k in w))


@dataclass
class AuditReport:
    terms: OracleTerms
    lhs: float
    lhs_se: float
    slack: float
    verdict: bool

    def to_dict(self) -> dict:
        t = self.terms
        return {"eps1": t.eps1, "eps2": t.eps2, "eps3": t.eps3, "eps4": t.eps4, "base": t.base,
                "bound": t.bound(), "lhs": self.lhs, "lhs_se": self.lhs_se, "slack": self.slack,
                "verdict": self.verdict, "se": dict(t.se)}


def _mean_se(vals) -> tuple[float, float]:
    v = np.asarray(vals, float)
    return float(v.mean()), (float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0)


def oracle_audit(truth: NoisyModel, candidates: Sequence, F: DiscriminatorClass, data: EmpiricalMeasure,
                 fitted, rng: np.random.Generator, n_eval: int = 4096, n_datasets: int = 8,
                 eval_reps: int = 4, eps_opt: float = 0.0) -> AuditReport:
    """Measure the four oracle terms and check the resulting bound.

    The generator class is ``candidates`` plus the fitted net.  ``eps1`` is
    the best W1 from the class to ``Q_0``; ``eps2`` how far the fit is from
    the best class member in ``d_F(., P_n)`` (or ``eps_opt``, if larger);
    ``eps3`` the mean of ``d_F(P_n', P_0)`` over fresh datasets of the same
    size; ``eps4`` the largest ``|W1 - d_F|`` over pairs in the class and
    ``Q_0`` (on the constructed latent atoms when ``F`` carries them);
    ``base`` is ``d_F(P_0, Q_0)``.  The verdict allows 1.1 combined standard
    errors of slack.
    """
    g0 = truth.generator
    sigma0 = truth.noise_sd
    d = latent_dim(g0)
    klass = list(candidates) + [fitted]

    lhs_v, e1_v, base_v = [], [], []
    for _ in range(eval_reps):
        z = sample_latent(d, n_eval, rng)
        q0 = _apply(g0, z)
        lhs_v.append(_w1_samples(_apply(fitted, z), q0))
        e1_v.append(min(_w1_samples(_apply(g, z), q0) for g in klass))
        p0 = q0 + sigma0 * rng.standard_normal(q0.shape) if sigma0 > 0 else q0
        base_v.append(ipm(F, EmpiricalMeasure(p0), EmpiricalMeasure(q0)) if sigma0 > 0 else 0.0)
    lhs, lhs_se = _mean_se(lhs_v)
    eps1, se1 = _mean_se(e1_v)
    base, se_b = _mean_se(base_v)

    z = sample_latent(d, n_eval, rng)
    vals = [ipm(F, EmpiricalMeasure(_apply(g, z)), data) for g in klass]
    eps2 = max(0.0, vals[-1] - min(vals), eps_opt)

    big = NoisyModel(g0, sigma0)
    p0_big = noisy_sample(big, n_eval, rng)
    e3_v = [ipm(F, noisy_sample(big, data.n, rng), p0_big) for _ in range(n_datasets)]
    eps3, se3 = _mean_se(e3_v)

    if isinstance(F, ConstructedClass):
        meas = [F.pushforward(g) for g in klass + [g0]]
    else:
        zc = sample_latent(d, min(n_eval, 1024), rng)
        meas = [EmpiricalMeasure(_apply(g, zc)) for g in klass + [g0]]
    pairs = [(meas[i], meas[j]) for i in range(len(meas)) for j in range(i + 1, len(meas))]
    eps4 = max((abs(ot.w1(a, b) - ipm(F, a, b)) for a, b in pairs), default=0.0)

    terms = OracleTerms(eps1, eps2, eps3, eps4, base, {"eps1": se1, "eps3": se3, "base": se_b})
    slack = 1.1 * math.sqrt(lhs_se ** 2 + terms.bound_se() ** 2)
    return AuditReport(terms, lhs, lhs_se, slack, bool(lhs <= terms.bound() + slack))
