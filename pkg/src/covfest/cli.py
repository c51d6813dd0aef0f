"""Command-line entry point: ``covfest {run,weights,estimate,diagnose}``.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections import defaultdict
from dataclasses import replace
from pathlib import Path

from covfest.bootstrap import ChainConfig, bootstrap_debiased
from covfest.config import EstimatorSpec, parse_config
from covfest.covariance import read_batch_csv
from covfest.diagnostics import make_report, rate_slope
from covfest.errors import CovfestError
from covfest.functionals import functional_from_json
from covfest.jackknife import DEFAULT_M_SUBSETS, build_plan, estimate_t1, estimate_t2, plugin_estimate
from covfest.runner import ROWS_HEADER, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="covfest", description="Jackknife bias-reduced estimation of covariance functionals.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run a Monte Carlo experiment from a TOML/JSON config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--seed", type=_u64, help="master seed (overrides master_seed)")
    r.add_argument("--threads", type=int, default=1, help="worker threads (COVFEST_THREADS overrides)")
    r.add_argument("--timing", action="store_true", help="fill the wall_ms column (breaks byte-reproducibility)")

    w = sub.add_parser("weights", help="print a jackknife plan as JSON")
    w.add_argument("--n", type=int, required=True)
    w.add_argument("--k", type=int, required=True)
    w.add_argument("--q", type=float, default=2.0)

    e = sub.add_parser("estimate", help="estimate f(Sigma) from a CSV sample")
    e.add_argument("--data", required=True, help="CSV with header x1,...,xd")
    e.add_argument("--functional", required=True, help="functional JSON, inline or a file path")
    e.add_argument(
        "--method",
        default="plugin",
        help="plugin | t1:k=2,q=2 | t2:k=2,q=2,m=200,seed=0 | bootstrap:k=1,reps=2000,seed=0",
    )

    d = sub.add_parser("diagnose", help="summarize a rows.csv into risk reports")
    d.add_argument("--rows", required=True)
    return p


def parse_method(text: str) -> tuple[EstimatorSpec, int]:
    name, _, rest = text.partition(":")
    opts = {}
    for item in filter(None, rest.split(",")):
        key, eq, val = item.partition("=")
        if not eq:
            raise UsageError(f"bad method option {item!r} (expected key=value)")
        opts[key.strip()] = val.strip()
    allowed = {"plugin": set(), "t1": {"k", "q"}, "t2": {"k", "q", "m", "seed"}, "bootstrap": {"k", "reps", "seed"}}
    if name not in allowed:
        raise UsageError(f"unknown method {name!r}; expected one of {sorted(allowed)}")
    extra = set(opts) - allowed[name]
    if extra:
        raise UsageError(f"unknown option(s) for {name}: {sorted(extra)}")
    try:
        spec = EstimatorSpec(
            name,
            k=int(opts.get("k", 1 if name == "bootstrap" else 2)),
            q=float(opts.get("q", 2.0)),
            m_subsets=int(opts.get("m", DEFAULT_M_SUBSETS)),
            reps=int(opts.get("reps", 2000)),
        )
        seed = int(opts.get("seed", 0), 0) if "seed" in opts else 0
    except ValueError as exc:
        raise UsageError(f"bad method option: {exc}") from None
    return spec, seed


def _load_functional(arg: str):
    p = Path(arg)
    text = p.read_text() if not arg.lstrip().startswith("{") and p.exists() else arg
    return functional_from_json(text)


def cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.timing:
        cfg = replace(cfg, record_timing=True)
    out = args.out or cfg.output_dir
    reports = run_experiment(cfg, out_dir=out, threads=args.threads)
    for rep in reports:
        if not rep.replications:
            print(f"{rep.estimator_label:32s} n={rep.n:<6d} all {rep.failures} replications failed")
            continue
        print(f"{rep.estimator_label:32s} n={rep.n:<6d} bias={rep.bias:+.4g} (se {rep.bias_se:.2g}) "
              f"L2={rep.lp_risks.get('2', float('nan')):.4g} failures={rep.failures}")
    print(f"wrote {Path(out) / 'rows.csv'} and {Path(out) / 'reports.json'}")
    return EXIT_OK


def cmd_weights(args) -> int:
    print(build_plan(args.n, args.k, args.q).to_json())
    return EXIT_OK


def cmd_estimate(args) -> int:
    spec, seed = parse_method(args.method)
    batch = read_batch_csv(args.data)
    f = _load_functional(args.functional)
    if spec.kind == "plugin":
        value = plugin_estimate(f, batch)
    elif spec.kind == "bootstrap":
        res = bootstrap_debiased(f, batch, ChainConfig(depth=spec.k, reps=spec.reps, seed=seed))
        print(f"stderr {res.stderr!r}", file=sys.stderr)
        value = res.value
    else:
        plan = build_plan(batch.n, spec.k, spec.q)
        if spec.kind == "t1":
            value = estimate_t1(f, batch, plan)
        else:
            value = estimate_t2(f, batch, plan, m_subsets=spec.m_subsets, seed=seed)
    print(repr(value))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    path = Path(args.rows)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ROWS_HEADER:
            raise CovfestError(f"{path}: expected header {','.join(ROWS_HEADER)}")
        groups: dict = defaultdict(lambda: [[], 0])
        for row in reader:
            g = groups[(row["estimator"], int(row["n"]))]
            if row["error"] == "":
                g[1] += 1
            else:
                g[0].append(float(row["error"]))
    reports = []
    for (label, n), (errs, failed) in groups.items():
        if errs:
            reports.append(make_report(label, errs, n=n, failures=failed))
    by_label = defaultdict(list)
    for rep in reports:
        by_label[rep.estimator_label].append(rep)
    for reps in by_label.values():
        pts = [(r.n, r.lp_risks["2"]) for r in reps]
        if len(pts) >= 3 and all(v > 0 for _, v in pts):
            fit = rate_slope(pts)._asdict()
            for r in reps:
                r.slope = fit
    print(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True))
    return EXIT_OK


_COMMANDS = {"run": cmd_run, "weights": cmd_weights, "estimate": cmd_estimate, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (CovfestError, OSError, KeyError, ValueError) as exc:
        print(f"covfest: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
