"""Head-to-head bias and L2 risk of plug-in, T1, T2 and bootstrap-chain estimators."""

import argparse
import math

import numpy as np

from covfest import (
    ChainConfig,
    SpikedModel,
    TracePower,
    bootstrap_debiased,
    build_plan,
    estimate_t1,
    estimate_t2,
    evaluate,
    plugin_estimate,
    sample_gaussian,
    spiked_covariance,
)
from covfest.rng import mix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=10)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--mu", type=float, default=0.5)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--p", type=int, default=3, help="functional tr(Sigma^p)")
    ap.add_argument("--k", type=int, default=2, help="jackknife order")
    ap.add_argument("--reps", type=int, default=1000)
    ap.add_argument("--chain-reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sigma = spiked_covariance(SpikedModel(args.dim, args.dim, args.lam, args.mu))
    f = TracePower(args.p)
    target = evaluate(f, sigma)
    plan = build_plan(args.n, args.k, 2.0)
    methods = {
        "plugin": lambda b, s: plugin_estimate(f, b),
        f"t1(k={args.k})": lambda b, s: estimate_t1(f, b, plan),
        f"t2(k={args.k})": lambda b, s: estimate_t2(f, b, plan, m_subsets=50, seed=s),
        "bootstrap(k=1)": lambda b, s: bootstrap_debiased(f, b, ChainConfig(depth=1, reps=args.chain_reps, seed=s)).value,
    }
    errs = {m: np.empty(args.reps) for m in methods}
    for r in range(args.reps):
        batch = sample_gaussian(sigma, args.n, seed=mix(args.seed, r))
        for m, fn in methods.items():
            errs[m][r] = fn(batch, mix(args.seed, r, 1)) - target
    print(f"f = tr(Sigma^{args.p}) = {target:.5f}, n = {args.n}, R = {args.reps}")
    for m, e in errs.items():
        se = e.std(ddof=1) / math.sqrt(e.size)
        print(f"{m:>16}  bias {e.mean():+.5f} +- {se:.5f}   L2 {math.sqrt(np.mean(e**2)):.5f}")


if __name__ == "__main__":
    main()
