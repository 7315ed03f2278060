"""Rate series: (n, replicate, value) rows and log-log exponent fits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .measures import fmt


class DegenerateFit(ValueError):
    """Fewer than three distinct sample sizes, or a nonpositive mean."""


def fit_exponent(series: "RateSeries | Iterable[tuple[float, float]]") -> tuple[float, float]:
    """OLS slope of ``log(mean value)`` on ``log n`` and its standard error.

    Accepts a :class:`RateSeries` (means are taken over replicates first) or
    an iterable of ``(n, mean)`` pairs.
    """
    pairs = series.means() if isinstance(series, RateSeries) else list(series)
    if len({n for n, _ in pairs}) < 3 or len(pairs) != len({n for n, _ in pairs}):
        raise DegenerateFit("need at least three distinct n with one mean each")
    n = np.array([p[0] for p in pairs], dtype=float)
    m = np.array([p[1] for p in pairs], dtype=float)
    if np.any(n <= 0) or np.any(m <= 0) or not np.all(np.isfinite(m)):
        raise DegenerateFit("means must be positive and finite")
    x = np.log(n)
    y = np.log(m)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx)
    resid = y - y.mean() - slope * xc
    dof = len(x) - 2
    stderr = math.sqrt(float(resid @ resid) / dof / sxx) if dof > 0 else float("nan")
    return slope, stderr


@dataclass
class RateSeries:
    """Replicated measurements indexed by sample size."""

    rows: list[tuple[int, int, float]] = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[int, int, float]]) -> "RateSeries":
        return cls(sorted((int(n), int(r), float(v)) for n, r, v in rows))

    def sizes(self) -> list[int]:
        return sorted({n for n, _, _ in self.rows})

    def means(self) -> list[tuple[int, float]]:
        out = []
        for n in self.sizes():
            vals = [v for m, _, v in self.rows if m == n]
            out.append((n, float(np.mean(vals))))
        return out

    def stderrs(self) -> list[tuple[int, float]]:
        out = []
        for n in self.sizes():
            vals = np.array([v for m, _, v in self.rows if m == n])
            out.append((n, float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else float("nan")))
        return out

    @property
    def flagged(self) -> bool:
        """True when the slope is undefined (fewer than three distinct n)."""
        return len(self.sizes()) < 3

    def fit(self) -> tuple[float, float] | None:
        """``(slope, stderr)``, or ``None`` when the series is flagged."""
        if self.flagged:
            return None
        return fit_exponent(self)

    @property
    def slope(self) -> float | None:
        f = self.fit()
        return None if f is None else f[0]

    @property
    def stderr(self) -> float | None:
        f = self.fit()
        return None if f is None else f[1]

    def summary(self) -> dict:
        f = self.fit()
        return {"slope": None if f is None else f[0], "stderr": None if f is None else f[1]}

    # -- I/O: CSV n,rep,value and JSON {slope, stderr} ---------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "rep", "value"])
        for n, r, v in self.rows:
            w.writerow([n, r, fmt(v)])
        return buf.getvalue()

    def save(self, csv_path, json_path=None) -> None:
        Path(csv_path).write_text(self.to_csv())
        if json_path is not None:
            Path(json_path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, text: str) -> "RateSeries":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["n", "rep", "value"]:
            raise ValueError(f"bad header {header}")
        return cls.from_rows((int(n), int(r), float(v)) for n, r, v in reader)

    @classmethod
    def load(cls, path) -> "RateSeries":
        return cls.from_csv(Path(path).read_text())
