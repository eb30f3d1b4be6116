"""Command-line front end: run experiments, cross-check the solver,
re-verify a results file."""

import argparse
import json
import sys

import numpy as np

from .harness import (config_from_dict, default_config, run_experiment,
                      SCHEMES)
from .ofdma_alloc import brute_force_allocation, solve_quoted_allocation


def _load_config(args):
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = config_from_dict(json.load(fh))
    else:
        cfg = default_config()
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.scheme:
        for s in args.scheme:
            if s not in SCHEMES:
                raise SystemExit(f"unknown scheme: {s!r}")
        overrides["schemes"] = tuple(args.scheme)
    if overrides:
        from dataclasses import replace
        cfg = replace(cfg, **overrides)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_config(args)
    text = run_experiment(cfg, sweep=args.sweep, out_path=args.out)
    n_rows = text.count("\n") - 1
    print(f"wrote {args.out}: {n_rows} rows "
          f"({len(cfg.schemes)} schemes, {cfg.trials} trials)")
    return 0


def _cmd_oracle_check(args) -> int:
    """Random small instances: dual solver vs exhaustive enumeration."""
    rng = np.random.default_rng(args.seed if args.seed is not None else 7)
    trials = args.trials if args.trials is not None else 25
    bw = 39e3
    worst = 0.0
    for i in range(trials):
        n_msg = int(rng.integers(1, 4))
        n_sc = int(rng.integers(n_msg, 5))
        quotes = 10.0 ** rng.uniform(-10.0, -8.0, size=(n_msg, n_sc))
        demands = bw * rng.uniform(0.5, 4.0, size=n_msg)
        got = solve_quoted_allocation(demands, quotes, bw)
        want = brute_force_allocation(demands, quotes, bw)
        gap = (got.power_sum - want.power_sum) / want.power_sum
        worst = max(worst, gap)
        if gap > 1e-3:
            print(f"instance {i}: gap {gap:.3e} exceeds 1e-3")
            return 1
    print(f"{trials} instances checked; worst relative gap {worst:.3e}")
    return 0


def _cmd_audit(args) -> int:
    """Regenerate the experiment for the given config and compare bytes."""
    cfg = _load_config(args)
    with open(args.out, "r", encoding="utf-8", newline="") as fh:
        recorded = fh.read()
    regenerated = run_experiment(cfg, sweep=args.sweep, out_path=None)
    if recorded == regenerated:
        print(f"{args.out}: verified, regeneration is byte-identical")
        return 0
    rec_lines = recorded.splitlines()
    new_lines = regenerated.splitlines()
    for i, (a, b) in enumerate(zip(rec_lines, new_lines)):
        if a != b:
            print(f"{args.out}: first mismatch at line {i + 1}")
            print(f"  recorded:    {a}")
            print(f"  regenerated: {b}")
            return 1
    print(f"{args.out}: length mismatch "
          f"({len(rec_lines)} vs {len(new_lines)} lines)")
    return 1


def _add_common(p):
    p.add_argument("--config", help="JSON config mirroring ScenarioConfig")
    p.add_argument("--out", default="results.csv", help="CSV path")
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--trials", type=int, help="override trial count")
    p.add_argument("--scheme", action="append",
                   help="restrict to a scheme (repeatable)")
    p.add_argument("--sweep", choices=["k", "m", "delta"],
                   help="sweep user count, antennas, or concentration")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tilecast",
        description="Minimum-power transmission planning for multicast "
                    "streaming of tiled panoramic video.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a Monte-Carlo experiment")
    _add_common(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_oracle = sub.add_parser(
        "oracle-check",
        help="cross-validate the allocator against brute force")
    _add_common(p_oracle)
    p_oracle.set_defaults(func=_cmd_oracle_check)

    p_audit = sub.add_parser(
        "audit", help="re-verify a results file by regeneration")
    _add_common(p_audit)
    p_audit.set_defaults(func=_cmd_audit)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
