"""Experiment runner and the ``lab`` command line.

Every mode reads a JSON config, splits its work into cells keyed by
``(seed, cell index)``, evaluates them on a bounded thread pool and appends
CSV rows in cell order as results arrive.  A JSON summary and a log-log
figure are written at the end; wall-clock stamps live only under the
summary's ``metadata`` key.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import composite, estimators, fano, ipm, netgen, ot
from .measures import EmpiricalMeasure, NoisyModel, fmt, noisy_sample, stream
from .rates import DegenerateFit, RateSeries

MODES = ("rates", "gan", "mle", "fano", "ot-bench", "audit")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

DEFAULT_TRUTH = {
    "spec": {"depth": 0, "widths": [1, 1], "arities": [1], "smoothnesses": [1.0], "bound": 4.0},
    "sigma0": 0.0,
    "seed": 7,
}

# mode-specific knobs and their defaults; unknown keys are rejected
DEFAULT_PARAMS: dict[str, dict] = {
    "rates": {"dim": 1},
    "gan": {
        "c_depth": 0.12, "c_width": 0.5, "c_sparsity": 1.0, "sup_bound": 2.0,
        "outer_steps": 300, "step_size": 0.05, "latent_factor": 1, "eval_factor": 4,
        "lr_floor": 0.02, "restarts": 2, "search_factor": 1, "n_eval": 20000,
    },
    "mle": {
        "c_depth": 0.12, "c_width": 0.5, "c_sparsity": 1.0, "sup_bound": 2.0,
        "steps": 300, "step_size": 0.05, "M_latent": 512, "batch": 1024, "warmup": 0.5,
        "sigma_fit": 0.05, "lr_floor": 0.02, "restarts": 2, "perturbation_scale": 0.5,
        "n_eval": 20000,
    },
    "fano": {
        "beta": 2.0, "d": 2, "m_grid": [2, 4, 8], "w1_m_grid": [2, 4], "n_mc": 4096,
        "packing_J": 64, "bound_n": [16, 64, 256, 1024, 4096, 16384, 65536, 262144, 1048576],
    },
    "ot-bench": {"instances": 200, "max_atoms": 6, "max_dim": 3, "dual_sizes": [16, 64, 256]},
    "audit": {
        "instances": 50, "n": 256, "eps": 0.02, "m_atoms": 256, "random_nets": 6,
        "perturbed": 12, "shift_range": 0.1, "tilt_range": 0.2, "sigma0": 0.02, "n_eval": 2048,
        "n_datasets": 8, "eval_reps": 4,
    },
}

DEFAULT_OUTPUTS = {"csv": "results.csv", "json": "summary.json", "figure": "figure.svg"}

NEEDS_GRID = ("rates", "gan", "mle")


@dataclass
class TruthConfig:
    spec: composite.CompositeSpec
    sigma0: float
    seed: int

    def generator(self) -> composite.CompositeFunction:
        return composite.make_synthetic_truth(self.seed, self.spec)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "sigma0": self.sigma0, "seed": self.seed}


@dataclass
class ExperimentConfig:
    mode: str
    truth: TruthConfig
    n_grid: list[int] = field(default_factory=list)
    replicates: int = 1
    params: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        extra = set(data) - {"mode", "truth", "n_grid", "replicates", "params", "outputs"}
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        mode = data.get("mode")
        if mode not in MODES:
            raise ConfigError("mode", f"must be one of {', '.join(MODES)}")

        t = {**DEFAULT_TRUTH, **data.get("truth", {})}
        try:
            spec = composite.CompositeSpec.from_dict(t["spec"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("truth.spec", str(exc)) from None
        sigma0 = _number(t["sigma0"], "truth.sigma0", lo=0.0)
        seed = _integer(t["seed"], "truth.seed", lo=0)
        truth = TruthConfig(spec, sigma0, seed)

        n_grid = data.get("n_grid", [])
        if not isinstance(n_grid, list) or not all(isinstance(n, int) and not isinstance(n, bool) for n in n_grid):
            raise ConfigError("n_grid", "must be a list of integers")
        if mode in NEEDS_GRID and len(n_grid) == 0:
            raise ConfigError("n_grid", "required for this mode")
        if any(n < 2 for n in n_grid):
            raise ConfigError("n_grid", "entries must be >= 2")
        if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
            raise ConfigError("n_grid", "must be strictly increasing")
        replicates = _integer(data.get("replicates", 1), "replicates", lo=1)

        given = data.get("params", {})
        if not isinstance(given, dict):
            raise ConfigError("params", "must be an object")
        defaults = DEFAULT_PARAMS[mode]
        for key, val in given.items():
            if key not in defaults:
                raise ConfigError(f"params.{key}", f"unknown parameter for mode {mode}")
            if isinstance(defaults[key], list) != isinstance(val, list):
                raise ConfigError(f"params.{key}", "type mismatch")
        params = {**defaults, **given}

        outputs = {**DEFAULT_OUTPUTS, **data.get("outputs", {})}
        for key, val in outputs.items():
            if key not in DEFAULT_OUTPUTS:
                raise ConfigError(f"outputs.{key}", "unknown output")
            if val is not None and (not isinstance(val, str) or "/" in val or val.startswith(".")):
                raise ConfigError(f"outputs.{key}", "must be a plain file name or null")
        return cls(mode, truth, list(n_grid), replicates, params, outputs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("<file>", f"{path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {"mode": self.mode, "truth": self.truth.to_dict(), "n_grid": self.n_grid,
                "replicates": self.replicates, "params": self.params, "outputs": self.outputs}


def _number(x, path, lo=None) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError(path, "must be a finite number")
    if lo is not None and x < lo:
        raise ConfigError(path, f"must be >= {lo}")
    return float(x)


def _integer(x, path, lo=None) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(path, "must be an integer")
    if lo is not None and x < lo:
        raise ConfigError(path, f"must be >= {lo}")
    return int(x)


# ---------------------------------------------------------------------------
# experiment cells
# ---------------------------------------------------------------------------

def truth_exponents(spec: composite.CompositeSpec) -> dict:
    _, beta_star, t_star = composite.effective_smoothness(spec)
    return fano.rate_exponents(beta_star, t_star, spec.latent_dim)


def gan_cell(truth: TruthConfig, params: dict, n: int, rep: int, seed: int) -> float:
    """Fit the exact-critic GAN on ``n`` truth samples; return ``W1(Q_hat, Q_0)``."""
    g0 = truth.generator()
    _, beta_star, t_star = composite.effective_smoothness(truth.spec)
    rng = stream(seed, 1, n, rep)
    data = noisy_sample(NoisyModel(g0, truth.sigma0), n, rng)
    size = netgen.size_for(n, beta_star, t_star, params["c_depth"], params["c_width"], params["c_sparsity"])
    cfg = estimators.GanConfig(
        size.widths(truth.spec.latent_dim, truth.spec.out_dim), size.sparsity, params["sup_bound"], None,
        outer_steps=params["outer_steps"], step_size=params["step_size"],
        m_latent=params["latent_factor"] * n, eval_latent=params["eval_factor"] * n,
        lr_floor=params["lr_floor"], restarts=params["restarts"], search_factor=params["search_factor"])
    fit = estimators.gan_fit(data, cfg, rng)
    return estimators.evaluate_estimator(fit.net, NoisyModel(g0), params["n_eval"], rng)


def mle_cell(truth: TruthConfig, params: dict, n: int, rep: int, seed: int) -> float:
    """Fit the perturbed-data sieve MLE; return ``W1(Q_hat, Q_0)``.

    The data stream matches :func:`gan_cell` so both estimators see the same sample.
    """
    g0 = truth.generator()
    _, beta_star, t_star = composite.effective_smoothness(truth.spec)
    rng = stream(seed, 1, n, rep)
    data = noisy_sample(NoisyModel(g0, truth.sigma0), n, rng)
    size = netgen.size_for(n, beta_star, t_star, params["c_depth"], params["c_width"], params["c_sparsity"])
    sigma_tilde = estimators.mle_perturbation(n, beta_star, t_star, params["perturbation_scale"])
    fit = estimators.mle_fit(
        data, sigma_tilde, size.widths(truth.spec.latent_dim, truth.spec.out_dim), size.sparsity,
        params["sup_bound"], params["M_latent"], params["steps"], rng, step_size=params["step_size"],
        sigma_fit=params["sigma_fit"], batch=params["batch"], warmup=params["warmup"],
        lr_floor=params["lr_floor"], restarts=params["restarts"])
    return estimators.evaluate_estimator(fit.net, NoisyModel(g0), params["n_eval"], rng)


@dataclass(frozen=True)
class ShiftedGenerator:
    """``z -> g(z) + shift + tilt (z - 1/2)``; a misspecified class member."""

    base: object
    shift: float
    tilt: float = 0.0

    @property
    def latent_dim(self) -> int:
        return self.base.latent_dim

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.asarray(self.base(z)) + self.shift + self.tilt * (z - 0.5)


def audit_instance(index: int, seed: int, truth_spec: composite.CompositeSpec, params: dict) -> dict:
    """One synthetic oracle-inequality instance on the line.

    The generator class holds random sparse nets and shifted, tilted copies
    of the truth; the discriminator is built from an ``eps``-net of that class plus
    the truth; the estimator is the exact ``d_F`` minimizer over the class.
    """
    rng = stream(seed, 7, index)
    g0 = composite.make_synthetic_truth(seed * 1000 + index, truth_spec)
    truth = NoisyModel(g0, params["sigma0"])
    data = noisy_sample(truth, params["n"], rng)
    cands = [netgen.random_net((1, 8, 1), 16, 2.0, rng) for _ in range(params["random_nets"])]
    shifts = rng.uniform(-params["shift_range"], params["shift_range"], params["perturbed"])
    tilts = rng.uniform(-params["tilt_range"], params["tilt_range"], params["perturbed"])
    cands += [ShiftedGenerator(g0, float(s), float(t)) for s, t in zip(shifts, tilts)]
    F = ipm.build_constructed_discriminator(cands + [g0], params["m_atoms"], params["eps"], rng)
    scores = [ipm.ipm(F, F.pushforward(g), data) for g in cands]
    fitted = cands[int(np.argmin(scores))]
    rep = estimators.oracle_audit(truth, cands, F, data, fitted, rng, n_eval=params["n_eval"],
                                  n_datasets=params["n_datasets"], eval_reps=params["eval_reps"])
    out = rep.to_dict()
    out.pop("se")
    out["eps"] = params["eps"]
    out["eps4_ok"] = bool(rep.terms.eps4 <= 5 * params["eps"] + 1e-3)
    out["instance"] = index
    return out


AUDIT_COLUMNS = ["instance", "eps", "eps1", "eps2", "eps3", "eps4", "base", "bound", "lhs", "lhs_se",
                 "slack", "verdict", "eps4_ok"]


def ot_bench_instance(index: int, seed: int, params: dict) -> dict:
    rng = stream(seed, 5, index)
    n = int(rng.integers(1, params["max_atoms"] + 1))
    D = int(rng.integers(1, params["max_dim"] + 1))
    mu, nu = EmpiricalMeasure(rng.random((n, D))), EmpiricalMeasure(rng.random((n, D)))
    brute = ot.w1_bruteforce(mu, nu)
    errs = {}
    for method in ("simplex", "assignment") + (("monotone",) if D == 1 else ()):
        errs[method] = abs(ot.w1_exact(mu, nu, method).cost - brute)
    return {"instance": index, "n": n, "D": D, "bruteforce": brute, "max_abs_err": max(errs.values())}


def duality_gap(n_atoms: int, seed: int) -> tuple[float, float]:
    """``(|primal - dual|, worst dual infeasibility)`` for random weighted measures in 2-D."""
    rng = stream(seed, 6, n_atoms)
    a = rng.random(n_atoms) + 0.1
    b = rng.random(n_atoms) + 0.1
    mu = EmpiricalMeasure(rng.random((n_atoms, 2)), a / a.sum())
    nu = EmpiricalMeasure(rng.random((n_atoms, 2)), b / b.sum())
    plan = ot.w1_exact(mu, nu, "simplex")
    C = ot.cost_matrix(mu.points, nu.points)
    viol = float(np.max(plan.source_potential[:, None] - plan.target_potential[None, :] - C))
    return abs(plan.cost - plan.dual_value), max(viol, 0.0)


# ---------------------------------------------------------------------------
# output plumbing
# ---------------------------------------------------------------------------

class CsvAppender:
    """Single-consumer CSV writer that flushes every row."""

    def __init__(self, path: Path, columns: Sequence[str]):
        self.columns = list(columns)
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._w.writerow([_cell_text(row[c]) for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _cell_text(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return fmt(x)
    return str(x)


def ordered_map(fn: Callable, items: Sequence, threads: int) -> Iterable:
    """Apply ``fn`` over ``items``; results come back in input order."""
    if threads <= 1:
        for it in items:
            yield fn(it)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(fn, items)


def plot_loglog(path: Path, series: dict[str, RateSeries], title: str) -> None:
    """Means with standard-error bars and fitted lines on log-log axes."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for label, s in series.items():
        n = np.array([p[0] for p in s.means()], float)
        m = np.array([p[1] for p in s.means()], float)
        se = np.nan_to_num(np.array([p[1] for p in s.stderrs()], float))
        line = ax.errorbar(n, m, yerr=se, fmt="o", ms=4, capsize=2, label=label)
        fit = s.fit()
        if fit is not None and np.all(m > 0):
            x = np.log(n)
            icpt = np.mean(np.log(m)) - fit[0] * np.mean(x)
            ax.plot(n, np.exp(icpt + fit[0] * x), "-", color=line[0].get_color(), lw=1,
                    label=f"slope {fit[0]:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("mean value")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_fig(fig, path)
    plt.close(fig)


def _save_fig(fig, path: Path) -> None:
    import matplotlib

    with matplotlib.rc_context({"svg.hashsalt": "lab"}):
        meta = {"Date": None} if path.suffix == ".svg" else {}
        fig.savefig(path, metadata=meta)


def plot_curve(path: Path, x, y, xlabel: str, ylabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    x, y = np.asarray(x, float), np.asarray(y, float)
    keep = y > 0
    ax.loglog(x[keep], y[keep], "o-", ms=4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)
    plt.close(fig)


def plot_histogram(path: Path, values, xlabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.hist(np.asarray(values, float), bins=20)
    ax.axvline(0.0, color="k", lw=1)
    ax.set_xlabel(xlabel)
    ax.set_title(title)
    fig.tight_layout()
    _save_fig(fig, path)
    plt.close(fig)


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------

def _rate_mode(cfg: ExperimentConfig, seed: int, out: Path, threads: int, cell_fn, label: str) -> dict:
    cells = [(n, r) for n in cfg.n_grid for r in range(cfg.replicates)]
    writer = CsvAppender(out / cfg.outputs["csv"], ["n", "rep", "value"])
    rows = []
    try:
        for (n, r), v in zip(cells, ordered_map(cell_fn, cells, threads)):
            if not math.isfinite(v):
                raise FloatingPointError(f"non-finite value at n={n}, rep={r}")
            writer.write({"n": n, "rep": r, "value": float(v)})
            rows.append((n, r, float(v)))
    finally:
        writer.close()
    series = RateSeries.from_rows(rows)
    if cfg.outputs["figure"]:
        plot_loglog(out / cfg.outputs["figure"], {label: series}, f"{label} vs n")
    summary = {"fitted": series.summary(), "flagged": series.flagged,
               "means": [[n, m] for n, m in series.means()]}
    return summary


def run_rates(cfg, seed, out, threads):
    D = int(cfg.params["dim"])
    if D < 1:
        raise ConfigError("params.dim", "must be >= 1")
    proxy = ot.PROXY_FACTOR * max(cfg.n_grid)
    summary = _rate_mode(cfg, seed, out, threads,
                         lambda c: ot.rate_cell(D, c[0], c[1], seed, None, proxy), "W1(P_n, P)")
    summary["theoretical_empirical"] = -1.0 / max(D, 2)
    return summary


def run_gan(cfg, seed, out, threads):
    return _rate_mode(cfg, seed, out, threads,
                      lambda c: gan_cell(cfg.truth, cfg.params, c[0], c[1], seed), "GAN error")


def run_mle(cfg, seed, out, threads):
    return _rate_mode(cfg, seed, out, threads,
                      lambda c: mle_cell(cfg.truth, cfg.params, c[0], c[1], seed), "MLE error")


def run_fano(cfg, seed, out, threads):
    p = cfg.params
    beta, d = float(p["beta"]), int(p["d"])
    if d + 2 * (beta - 1) <= 0:
        raise ConfigError("params.beta", "need d + 2(beta - 1) > 0")
    c1 = fano.auto_c1(1, d, beta) if beta >= 1 else fano.auto_c1(max(p["m_grid"]), d, beta)
    C = fano.calibrate_kl(beta, d, c1)
    kl_rows = []
    for m in p["m_grid"]:
        fc = fano.FanoConfig(int(m), d, beta, c1)
        plus = np.ones(fc.cells)
        kl, h2 = fano.kl_pair(fc, plus, -plus)
        kl_rows.append({"m": int(m), "kl": kl, "hellinger2": h2,
                        "kl_scaled": kl / (c1 ** 2 * m ** (-2 * (beta - 1)))})
    w1_rows = []
    if d <= 2:
        for m in p["w1_m_grid"]:
            fc = fano.FanoConfig(int(m), d, beta, c1)
            plus = np.ones(fc.cells)
            single = plus.copy()
            single[0] = -1
            for tag, other in (("single", single), ("full", -plus)):
                lhs, rhs = fano.w1_excess_check(fc, plus, other, p["n_mc"], stream(seed, 8, int(m)))
                w1_rows.append({"m": int(m), "flip": tag, "H": fano.hamming(plus, other), "lhs": lhs, "rhs": rhs})
    packing = fano.gv_packing(int(p["packing_J"]), stream(seed, 9))
    ns = [int(n) for n in p["bound_n"]]
    writer = CsvAppender(out / cfg.outputs["csv"], ["n", "m", "bound"])
    curve = []
    try:
        for n in ns:
            b = fano.fano_bound(n, beta, d, c1)
            writer.write({"n": n, "m": fano.grid_size(n, beta, d), "bound": b})
            curve.append(b)
    finally:
        writer.close()
    if cfg.outputs["figure"]:
        plot_curve(out / cfg.outputs["figure"], ns, curve, "n", "lower bound", "Fano bound")
    return {"beta": beta, "d": d, "c1": c1, "C": C, "c3": fano.calibrate_c3(beta, d, c1) if d <= 2 else None,
            "packing": {"J": int(p["packing_J"]), "size": len(packing), "min_distance": packing.min_distance()},
            "kl_table": kl_rows, "w1_table": w1_rows,
            "bound_exponent": -beta / (2 * beta + d - 2)}


def run_ot_bench(cfg, seed, out, threads):
    p = cfg.params
    idx = list(range(int(p["instances"])))
    writer = CsvAppender(out / cfg.outputs["csv"], ["instance", "n", "D", "bruteforce", "max_abs_err"])
    worst = 0.0
    try:
        for row in ordered_map(lambda i: ot_bench_instance(i, seed, p), idx, threads):
            writer.write(row)
            worst = max(worst, row["max_abs_err"])
    finally:
        writer.close()
    gaps = [{"atoms": int(k), "gap": g, "infeasibility": v}
            for k, (g, v) in zip(p["dual_sizes"], (duality_gap(int(k), seed) for k in p["dual_sizes"]))]
    if cfg.outputs["figure"]:
        plot_curve(out / cfg.outputs["figure"], [g["atoms"] for g in gaps],
                   [max(g["gap"], 1e-18) for g in gaps], "atoms", "duality gap", "transport duality gap")
    return {"instances": len(idx), "max_abs_err": worst, "duality": gaps}


def run_audit(cfg, seed, out, threads):
    p = cfg.params
    idx = list(range(int(p["instances"])))
    writer = CsvAppender(out / cfg.outputs["csv"], AUDIT_COLUMNS)
    rows = []
    try:
        for row in ordered_map(lambda i: audit_instance(i, seed, cfg.truth.spec, p), idx, threads):
            writer.write(row)
            rows.append(row)
    finally:
        writer.close()
    if cfg.outputs["figure"]:
        plot_histogram(out / cfg.outputs["figure"], [r["bound"] + r["slack"] - r["lhs"] for r in rows],
                       "bound + slack - error", "oracle audit margins")
    return {"instances": len(rows), "verdict_rate": float(np.mean([r["verdict"] for r in rows])),
            "eps4_ok_rate": float(np.mean([r["eps4_ok"] for r in rows])),
            "max_eps4": max(r["eps4"] for r in rows)}


RUNNERS = {"rates": run_rates, "gan": run_gan, "mle": run_mle, "fano": run_fano,
           "ot-bench": run_ot_bench, "audit": run_audit}


def run(cfg: ExperimentConfig, seed: int, out, threads: int = 1) -> dict:
    """Execute ``cfg`` and write its CSV, JSON summary and figure under ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    result = RUNNERS[cfg.mode](cfg, seed, out, threads)
    summary = {
        "mode": cfg.mode,
        "seed": seed,
        "config": cfg.to_dict(),
        "theoretical": truth_exponents(cfg.truth.spec),
        "result": result,
        "metadata": {"started": started, "finished": time.time(), "threads": threads},
    }
    if cfg.outputs["json"]:
        (out / cfg.outputs["json"]).write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    return summary


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return None if not math.isfinite(x) else float(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

NUMERIC_ERRORS = (ArithmeticError, ot.SolverFailure, fano.QuadratureFailure, fano.BudgetExceeded,
                  estimators.NonFiniteLoss, DegenerateFit)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lab", description="Run a reproducible rate experiment.")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="experiment JSON")
    ap.add_argument("--seed", required=True, type=int, help="unsigned 64-bit seed")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        if args.threads < 1:
            raise ConfigError("--threads", "must be >= 1")
        cfg = ExperimentConfig.load(args.config)
        if cfg.mode != args.mode:
            raise ConfigError("mode", f"config is for {cfg.mode!r}, command asked for {args.mode!r}")
        summary = run(cfg, args.seed, args.out, args.threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(_jsonable(summary["result"]), sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
