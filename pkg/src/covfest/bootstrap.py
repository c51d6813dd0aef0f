"""Bootstrap-chain bias reduction.

The chain starts at S_0 = Sigma and moves by S_{i+1} = sample covariance of
n draws from N(0, S_i).  With T the one-step expectation operator and
B = T - I, iterated biases are trajectory differences

    (B^j f)(Sigma) = E sum_{i=0}^{j} (-1)^(j-i) C(j, i) f(S_i),

and the order-k debiased estimator is f_k(hat Sigma) = sum_{j<=k} (-1)^j (B^j f)(hat Sigma).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from covfest import rng as _rng
from covfest.covariance import CovarianceMatrix, SampleBatch, _gram, gaussian_rows, sample_covariance
from covfest.errors import InvalidInput
from covfest.functionals import Functional

__all__ = ["ChainConfig", "MCEstimate", "simulate_chain", "b_power_estimate", "bootstrap_debiased"]

MAX_DEPTH = 6
DEFAULT_REPS = 2000


@dataclass(frozen=True)
class ChainConfig:
    """``n=None`` means: use the size of the observed batch."""

    depth: int = 1
    n: int | None = None
    reps: int = DEFAULT_REPS
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH:
            raise InvalidInput(f"chain depth must be in [0, {MAX_DEPTH}]")
        if self.reps < 1:
            raise InvalidInput("reps must be at least 1")
        if self.n is not None and self.n < 1:
            raise InvalidInput("per-step sample size must be at least 1")


class MCEstimate(NamedTuple):
    value: float
    stderr: float


def _step_size(cfg: ChainConfig) -> int:
    if cfg.n is None:
        raise InvalidInput("ChainConfig.n must be set when no batch is given")
    return cfg.n


def simulate_chain(start: CovarianceMatrix, cfg: ChainConfig, trajectory_index: int, depth: int | None = None):
    """States S_0 = start, ..., S_depth of one trajectory (depth defaults to cfg.depth).

    Draws come from a stream keyed by (cfg.seed, trajectory_index), so a
    shallower chain is always a prefix of a deeper one.
    """
    depth = cfg.depth if depth is None else depth
    n = _step_size(cfg)
    gen = _rng.generator(cfg.seed, trajectory_index)
    states = [start]
    for _ in range(depth):
        states.append(CovarianceMatrix(_gram(gaussian_rows(states[-1], n, gen)), check=False))
    return states


def _mc(values: np.ndarray) -> MCEstimate:
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return MCEstimate(mean, se)


def _trajectory_values(f: Functional, start: CovarianceMatrix, cfg: ChainConfig, coeffs: list[float]) -> np.ndarray:
    depth = len(coeffs) - 1
    f0 = coeffs[0] * f.value(start)
    out = np.empty(cfg.reps)
    for t in range(cfg.reps):
        states = simulate_chain(start, cfg, t, depth=depth)
        out[t] = f0 + sum(c * f.value(s) for c, s in zip(coeffs[1:], states[1:]))
    return out


def b_power_estimate(f: Functional, sigma: CovarianceMatrix, j: int, cfg: ChainConfig) -> MCEstimate:
    """MC estimate of (B^j f)(sigma) with its standard error."""
    if j < 0 or j > MAX_DEPTH:
        raise InvalidInput(f"order j must be in [0, {MAX_DEPTH}]")
    if j == 0:
        return MCEstimate(f.value(sigma), 0.0)
    coeffs = [(-1) ** (j - i) * math.comb(j, i) for i in range(j + 1)]
    return _mc(_trajectory_values(f, sigma, cfg, coeffs))


def bootstrap_debiased(f: Functional, batch: SampleBatch, cfg: ChainConfig) -> MCEstimate:
    """f_k(hat Sigma) with k = cfg.depth, all B^j terms sharing the same trajectories.

    Collecting terms, f_k = sum_i (-1)^i C(k+1, i+1) E f(S_i) along a chain started at hat Sigma.
    """
    start = sample_covariance(batch)
    k = cfg.depth
    if k == 0:
        return MCEstimate(f.value(start), 0.0)
    if cfg.n is None:
        cfg = ChainConfig(depth=k, n=batch.n, reps=cfg.reps, seed=cfg.seed)
    coeffs = [(-1) ** i * math.comb(k + 1, i + 1) for i in range(k + 1)]
    return _mc(_trajectory_values(f, start, cfg, coeffs))
