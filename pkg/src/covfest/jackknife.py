"""Jackknife extrapolation plans and the bias-reduced estimators built on them.

Given sample sizes n_1 < ... < n_k = n, the weights

    C_j = prod_{i != j} n_j / (n_j - n_i)

satisfy sum_j C_j = 1 and sum_j C_j / n_j**l = 0 for l = 1, ..., k-1, so any
bias that expands in powers of 1/n up to order k-1 cancels in
sum_j C_j f(hat Sigma_{n_j}).
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from covfest import rng as _rng
from covfest.covariance import CovarianceMatrix, SampleBatch, _gram, sample_covariance
from covfest.errors import InvalidInput, PlanError
from covfest.functionals import Functional, evaluate

__all__ = [
    "JackknifePlan",
    "build_plan",
    "extrapolation_weights",
    "plugin_estimate",
    "estimate_t1",
    "estimate_t2",
    "u_statistic",
]

EXACT_SUBSET_LIMIT = 100_000
DEFAULT_M_SUBSETS = 200
IDENTITY_RTOL = 1e-9
# from this order on, weights are accumulated as log-magnitude plus sign
LOG_WEIGHTS_FROM_K = 8


def extrapolation_weights(sizes) -> list[float]:
    sizes = [int(s) for s in sizes]
    k = len(sizes)
    if k >= LOG_WEIGHTS_FROM_K:
        out = []
        for j, nj in enumerate(sizes):
            log_mag = sum(math.log(nj) - math.log(abs(nj - ni)) for i, ni in enumerate(sizes) if i != j)
            sign = -1.0 if (k - 1 - j) % 2 else 1.0  # one negative factor per larger size
            out.append(sign * math.exp(log_mag))
        return out
    out = []
    for j, nj in enumerate(sizes):
        c = 1.0
        for i, ni in enumerate(sizes):
            if i != j:
                c *= nj / (nj - ni)
        out.append(c)
    return out


@dataclass(frozen=True)
class JackknifePlan:
    n: int
    k: int
    q: float
    sizes: tuple[int, ...]
    weights: tuple[float, ...]

    @property
    def c(self) -> float:
        """Ratio n / n_1, so that n_1 >= n / c."""
        return self.n / self.sizes[0]

    def identity_residuals(self) -> list[float]:
        """[sum C_j - 1, sum C_j/n_j, ..., sum C_j/n_j^(k-1)], each scaled to relative form."""
        w = np.array(self.weights)
        nj = np.array(self.sizes, dtype=np.float64)
        res = [abs(float(np.sum(w)) - 1.0)]
        for ell in range(1, self.k):
            terms = w / nj**ell
            res.append(abs(float(np.sum(terms))) / float(np.max(np.abs(terms))))
        return res

    def check(self, rtol: float = IDENTITY_RTOL) -> None:
        if list(self.sizes) != sorted(set(self.sizes)) or self.sizes[-1] != self.n or self.sizes[0] < 1:
            raise PlanError(f"sizes must be strictly increasing, >= 1 and end at n: {self.sizes}")
        bad = [ell for ell, r in enumerate(self.identity_residuals()) if not r <= rtol]
        if bad:
            raise PlanError(f"weight identities fail for powers {bad}")

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "q": self.q, "sizes": list(self.sizes), "weights": list(self.weights)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> JackknifePlan:
        plan = cls(int(obj["n"]), int(obj["k"]), float(obj["q"]), tuple(obj["sizes"]), tuple(obj["weights"]))
        plan.check()
        return plan


def build_plan(n: int, k: int, q: float = 2.0) -> JackknifePlan:
    """Geometric schedule n_j = round(q^(j-k) n) with the product-formula weights."""
    if k < 1 or int(k) != k:
        raise PlanError("order k must be an integer >= 1")
    if not q > 1:
        raise PlanError("ratio q must exceed 1")
    if n < q ** (k - 1) * k:
        raise PlanError(f"n={n} is too small for k={k}, q={q} (need n >= q^(k-1) k)")
    sizes = [int(round(q ** (j - k) * n)) for j in range(1, k + 1)]
    sizes[-1] = int(n)
    for j in range(k - 2, -1, -1):
        if sizes[j] >= sizes[j + 1]:
            sizes[j] = sizes[j + 1] - 1
    if sizes[0] < 1:
        raise PlanError(f"cannot repair colliding sizes for n={n}, k={k}, q={q}")
    plan = JackknifePlan(int(n), int(k), float(q), tuple(sizes), tuple(extrapolation_weights(sizes)))
    plan.check()
    return plan


def plugin_estimate(f: Functional, batch: SampleBatch) -> float:
    return evaluate(f, sample_covariance(batch))


def _check_plan(plan: JackknifePlan, batch: SampleBatch) -> None:
    if plan.n != batch.n:
        raise PlanError(f"plan is for n={plan.n} but the batch has {batch.n} rows")


def estimate_t1(f: Functional, batch: SampleBatch, plan: JackknifePlan) -> float:
    """sum_j C_j f(hat Sigma_{n_j}), hat Sigma_{n_j} built from the first n_j rows."""
    _check_plan(plan, batch)
    x = batch.data
    total = 0.0
    for c, nj in zip(plan.weights, plan.sizes):
        total += c * f.value(CovarianceMatrix(_gram(x[:nj]), check=False))
    return total


def u_statistic(
    kernel: Callable[[NDArray[np.float64]], float | NDArray[np.float64]],
    data: NDArray[np.float64],
    m: int,
    *,
    m_subsets: int = DEFAULT_M_SUBSETS,
    seed: int = 0,
    exact_limit: int = EXACT_SUBSET_LIMIT,
):
    """Average of ``kernel(data[subset])`` over size-m row subsets.

    All C(n, m) subsets are enumerated when that count is at most
    ``max(exact_limit, m_subsets)``; otherwise ``m_subsets`` uniform random
    subsets are drawn from a stream keyed by ``seed`` (incomplete U-statistic).
    """
    n = data.shape[0]
    if not 1 <= m <= n:
        raise InvalidInput(f"subset size must be in [1, {n}], got {m}")
    if m_subsets < 1:
        raise InvalidInput("m_subsets must be at least 1")
    if m == n:
        return kernel(data)
    total_count = math.comb(n, m)
    acc = None
    if total_count <= max(exact_limit, m_subsets):
        for idx in itertools.combinations(range(n), m):
            val = kernel(data[list(idx)])
            acc = val if acc is None else acc + val
        return acc / total_count
    gen = _rng.generator(seed)
    for _ in range(m_subsets):
        idx = np.sort(gen.choice(n, size=m, replace=False))
        val = kernel(data[idx])
        acc = val if acc is None else acc + val
    return acc / m_subsets


def estimate_t2(
    f: Functional,
    batch: SampleBatch,
    plan: JackknifePlan,
    m_subsets: int = DEFAULT_M_SUBSETS,
    seed: int = 0,
    *,
    exact_limit: int = EXACT_SUBSET_LIMIT,
) -> float:
    """sum_j C_j U_n f(hat Sigma_{n_j}), the symmetrized jackknife estimator."""
    _check_plan(plan, batch)

    def kernel(rows):
        return f.value(CovarianceMatrix(_gram(rows), check=False))

    total = 0.0
    for j, (c, nj) in enumerate(zip(plan.weights, plan.sizes)):
        u = u_statistic(kernel, batch.data, nj, m_subsets=m_subsets, seed=_rng.mix(seed, j), exact_limit=exact_limit)
        total += c * u
    return total
