"""Tabulate E||hat Sigma - Sigma|| against ||Sigma|| sqrt(r(Sigma)/n) on a spiked model."""

import argparse
import math

import numpy as np

from covfest import SpikedModel, effective_rank, operator_norm, sample_covariance, sample_gaussian, spiked_covariance
from covfest.diagnostics import empirical_orlicz, rate_slope
from covfest.rng import mix


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dim", type=int, default=50)
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--mu", type=float, default=0.1)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--n", type=int, nargs="+", default=[200, 400, 800, 1600, 3200])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sigma = spiked_covariance(SpikedModel(args.dim, args.dim, args.lam, args.mu))
    r = effective_rank(sigma)
    print(f"d={args.dim} r(Sigma)={r:.3f} ||Sigma||={sigma.norm:.3f}")
    print(f"{'n':>6} {'E||err||':>10} {'ratio':>7} {'psi1(dev)*sqrt(n)/||S||':>24}")
    means = []
    for n in args.n:
        v = np.array([
            operator_norm(sample_covariance(sample_gaussian(sigma, n, seed=mix(args.seed, n, i))).entries - sigma.entries)
            for i in range(args.reps)
        ])
        means.append(v.mean())
        ratio = v.mean() / (sigma.norm * math.sqrt(r / n))
        psi1 = empirical_orlicz(v - v.mean(), 1.0) * math.sqrt(n) / sigma.norm
        print(f"{n:>6} {v.mean():>10.5f} {ratio:>7.3f} {psi1:>24.3f}")
    fit = rate_slope(list(zip(args.n, means)))
    print(f"log-log slope {fit.slope:.3f} (r^2 {fit.r_squared:.4f})")


if __name__ == "__main__":
    main()
