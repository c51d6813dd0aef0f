"""Monte Carlo risk summaries: L_p and Orlicz norms, normality distances, rate fits."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from covfest.errors import InvalidInput

__all__ = [
    "RiskReport",
    "RateFit",
    "empirical_lp",
    "empirical_orlicz",
    "ks_to_standard_normal",
    "w2_to_standard_normal",
    "rate_slope",
    "normal_cdf",
    "normal_quantile",
    "make_report",
]

ORLICZ_GRID_RATIO = 1.25
DEFAULT_PS = (1.0, 2.0, 4.0)
DEFAULT_ALPHAS = (1.0, 2.0)


# Phi and Phi^{-1}: scipy's ndtr/ndtri are accurate to double precision
normal_cdf = ndtr
normal_quantile = ndtri


def _clean(values, what: str = "errors") -> np.ndarray:
    a = np.asarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        raise InvalidInput(f"{what} must be non-empty")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{what} must be finite")
    return a


def _lp(abs_e: np.ndarray, p: float) -> float:
    top = float(abs_e.max())
    if top == 0.0:
        return 0.0
    # scaled by the max to keep large p from overflowing
    return top * float(np.mean((abs_e / top) ** p)) ** (1.0 / p)


def empirical_lp(errors: Sequence[float], p: float) -> float:
    """(mean |e_i|^p)^(1/p)."""
    if not p >= 1:
        raise InvalidInput("p must be >= 1")
    return _lp(np.abs(_clean(errors)), p)


def orlicz_grid(p_max: float) -> list[float]:
    grid = [1.0]
    while grid[-1] * ORLICZ_GRID_RATIO < p_max:
        grid.append(grid[-1] * ORLICZ_GRID_RATIO)
    if p_max > grid[-1]:
        grid.append(float(p_max))
    return grid


def empirical_orlicz(errors: Sequence[float], alpha: float, p_max: float | None = None) -> float:
    """max over p in a geometric grid on [1, p_max] of p^(-1/alpha) ||e||_{L_p}.

    ``p_max`` defaults to log2 of the sample size (at least 1).
    """
    a = np.abs(_clean(errors))
    if not alpha > 0:
        raise InvalidInput("alpha must be positive")
    if p_max is None:
        p_max = max(1.0, math.log2(a.size))
    if not p_max >= 1:
        raise InvalidInput("p_max must be >= 1")
    return max(p ** (-1.0 / alpha) * _lp(a, p) for p in orlicz_grid(p_max))


def ks_to_standard_normal(samples: Sequence[float]) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF and Phi."""
    x = np.sort(_clean(samples, "samples"))
    m = x.size
    cdf = normal_cdf(x)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - cdf), np.max(cdf - (i - 1) / m)))


def w2_to_standard_normal(samples: Sequence[float]) -> float:
    """Quantile-coupling W2: sqrt(mean (x_(i) - Phi^{-1}((i - 0.5)/m))^2)."""
    x = np.sort(_clean(samples, "samples"))
    m = x.size
    q = normal_quantile((np.arange(1, m + 1) - 0.5) / m)
    return float(np.sqrt(np.mean((x - q) ** 2)))


class RateFit(NamedTuple):
    slope: float
    intercept: float
    r_squared: float


def rate_slope(points: Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares fit of log(risk) = intercept + slope * log(n)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise InvalidInput("rate_slope needs at least 3 (n, risk) pairs")
    if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
        raise InvalidInput("n and risk must be positive")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    xc, yc = x - x.mean(), y - y.mean()
    slope = float(np.dot(xc, yc) / np.dot(xc, xc))
    intercept = float(y.mean() - slope * x.mean())
    ss_tot = float(np.dot(yc, yc))
    resid = yc - slope * xc
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.dot(resid, resid)) / ss_tot
    return RateFit(slope, intercept, r2)


@dataclass
class RiskReport:
    estimator_label: str
    n: int
    replications: int
    failures: int
    bias: float
    bias_se: float
    lp_risks: dict[str, float]
    orlicz: dict[str, float]
    ks_to_normal: float
    w2_to_normal: float
    standardization: str
    slope: dict | None = field(default=None)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_header(self) -> list[str]:
        return list(self._flat())

    def csv_row(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            ["" if v is None else (repr(v) if isinstance(v, float) else v) for v in self._flat().values()]
        )
        return buf.getvalue()

    def _flat(self) -> dict:
        flat = {k: v for k, v in self.to_dict().items() if k not in ("lp_risks", "orlicz", "slope")}
        flat.update({f"L{p}": v for p, v in self.lp_risks.items()})
        flat.update({f"psi{a}": v for a, v in self.orlicz.items()})
        slope = self.slope or {}
        flat["slope"] = slope.get("slope")
        flat["slope_r2"] = slope.get("r_squared")
        return flat


def _key(x: float) -> str:
    return format(x, "g")


def make_report(
    label: str,
    errors: Sequence[float],
    *,
    n: int,
    failures: int = 0,
    scale: float | None = None,
    ps: Sequence[float] = DEFAULT_PS,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
) -> RiskReport:
    """Summarize estimation errors from R replications.

    Normality distances use errors / scale when ``scale`` is a positive
    number (typically sigma_f / sqrt(n)); otherwise errors are centered and
    divided by their sample standard deviation.
    """
    e = _clean(errors)
    r = e.size
    bias = float(np.mean(e))
    se = float(np.std(e, ddof=1) / math.sqrt(r)) if r > 1 else 0.0
    if scale is not None and scale > 0:
        z, how = e / scale, "scale"
    else:
        sd = float(np.std(e, ddof=1)) if r > 1 else 0.0
        z, how = (e - bias) / (sd if sd > 0 else 1.0), "studentized"
    ps = sorted(ps)
    return RiskReport(
        estimator_label=label,
        n=int(n),
        replications=r,
        failures=int(failures),
        bias=bias,
        bias_se=se,
        lp_risks={_key(p): empirical_lp(e, p) for p in ps},
        orlicz={_key(a): empirical_orlicz(e, a) for a in alphas},
        ks_to_normal=ks_to_standard_normal(z),
        w2_to_normal=w2_to_standard_normal(z),
        standardization=how,
    )
