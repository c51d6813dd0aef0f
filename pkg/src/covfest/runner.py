"""Deterministic Monte Carlo replication over (estimator, n, replication).

Replication ``rep`` of estimator ``e`` at sample size ``n`` draws its batch
from seed ``mix(master_seed, e, n, rep)``; estimator-internal randomness
(subsets, bootstrap trajectories) uses ``mix(that_seed, 1)``.  Results land
in preallocated slots and are reduced in index order, so outputs do not
depend on the worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from covfest import rng as _rng
from covfest.bootstrap import ChainConfig, bootstrap_debiased
from covfest.config import EstimatorSpec, ExperimentConfig
from covfest.covariance import CovarianceMatrix, sample_gaussian
from covfest.diagnostics import RiskReport, make_report, rate_slope
from covfest.errors import CovfestError
from covfest.functionals import Functional, evaluate, sigma_f
from covfest.jackknife import build_plan, estimate_t1, estimate_t2, plugin_estimate

__all__ = ["run_experiment", "estimate_with", "ROWS_HEADER", "resolve_threads"]

log = logging.getLogger(__name__)

ROWS_HEADER = ["config_hash", "estimator", "n", "rep", "estimate", "error", "wall_ms"]
THREADS_ENV = "COVFEST_THREADS"


def resolve_threads(threads: int | None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise CovfestError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return max(1, threads or 1)


def estimate_with(spec: EstimatorSpec, f: Functional, batch, seed: int) -> float:
    if spec.kind == "plugin":
        return plugin_estimate(f, batch)
    if spec.kind == "bootstrap":
        return bootstrap_debiased(f, batch, ChainConfig(depth=spec.k, reps=spec.reps, seed=seed)).value
    plan = build_plan(batch.n, spec.k, spec.q)
    if spec.kind == "t1":
        return estimate_t1(f, batch, plan)
    return estimate_t2(f, batch, plan, m_subsets=spec.m_subsets, seed=seed)


def _replicate(sigma: CovarianceMatrix, cfg: ExperimentConfig, e: int, n: int, rep: int):
    seed = _rng.mix(cfg.master_seed, e, n, rep)
    t0 = time.perf_counter()
    try:
        batch = sample_gaussian(sigma, n, seed)
        est = estimate_with(cfg.estimators[e], cfg.functional, batch, _rng.mix(seed, 1))
        if not math.isfinite(est):
            raise ArithmeticError("non-finite estimate")
    except (CovfestError, ArithmeticError, np.linalg.LinAlgError) as exc:
        log.debug("replication (%d, %d, %d) failed: %s", e, n, rep, exc)
        est = None
    return est, (time.perf_counter() - t0) * 1e3


def _empty_report(label: str, n: int, r: int) -> RiskReport:
    # every replication failed; numeric fields serialize as null
    return RiskReport(label, n, 0, r, None, None, {}, {}, None, None, "none")


def run_experiment(
    config: ExperimentConfig,
    out_dir: str | Path | None = None,
    threads: int | None = 1,
) -> list[RiskReport]:
    """Run every (estimator, n, replication); write rows.csv, reports.json, summary.json, config.json."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    sigma = config.model.covariance()
    f = config.functional
    target = evaluate(f, sigma)
    try:
        sf = sigma_f(f, sigma)
    except CovfestError:
        sf = None

    tasks = [
        (e, n, rep)
        for e in range(len(config.estimators))
        for n in config.n_grid
        for rep in range(config.replications)
    ]
    slots: list = [None] * len(tasks)
    workers = resolve_threads(threads)
    # replication-level parallelism only; BLAS stays single-threaded
    with threadpool_limits(limits=1):
        if workers == 1:
            for i, t in enumerate(tasks):
                slots[i] = _replicate(sigma, config, *t)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                for i, res in enumerate(pool.map(lambda t: _replicate(sigma, config, *t), tasks)):
                    slots[i] = res

    chash = config.config_hash
    try:
        out.mkdir(parents=True, exist_ok=True)
        rows_path = out / "rows.csv"
        with open(rows_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ROWS_HEADER)
            for (e, n, rep), (est, ms) in zip(tasks, slots):
                w.writerow([
                    chash,
                    config.estimators[e].label,
                    n,
                    rep,
                    "" if est is None else repr(est),
                    "" if est is None else repr(est - target),
                    f"{ms:.3f}" if config.record_timing else "",
                ])
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc

    reports = []
    r = config.replications
    for e, spec in enumerate(config.estimators):
        per_est = []
        for gi, n in enumerate(config.n_grid):
            base = (e * len(config.n_grid) + gi) * r
            errs = [s[0] - target for s in slots[base:base + r] if s[0] is not None]
            failed = r - len(errs)
            if not errs:
                per_est.append(_empty_report(spec.label, n, r))
                continue
            scale = sf / math.sqrt(n) if sf else None
            per_est.append(make_report(spec.label, errs, n=n, failures=failed, scale=scale))
        pts = [(rep.n, rep.lp_risks["2"]) for rep in per_est if rep.replications]
        if len(pts) >= 3 and all(p[1] > 0 for p in pts):
            fit = rate_slope(pts)._asdict()
            for rep in per_est:
                rep.slope = fit
        reports.extend(per_est)

    try:
        (out / "reports.json").write_text(json.dumps([x.to_dict() for x in reports], indent=2, sort_keys=True) + "\n")
        (out / "summary.json").write_text(
            json.dumps({"config_hash": chash, "target": target, "sigma_f": sf}, indent=2, sort_keys=True) + "\n"
        )
        (out / "config.json").write_text(config.canonical_json() + "\n")
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return reports
