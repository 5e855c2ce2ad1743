"""Run one estimator over a parameter grid and write one CSV per grid point.

    python3 scripts/accuracy_sweep.py pstable --grid p=0.5,1,1.5 eps=0.2 --trials 50 --out sweeps/
    python3 scripts/accuracy_sweep.py lp_large --grid alpha=2,4,6 p=4 --source kind=random n=4096 M=100

Prints a summary line (success rate, median ratio, mean bits) per point.
"""

import argparse
import itertools
from pathlib import Path

import numpy as np

from coarse_sketch import bench


def parse_value(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def parse_pairs(items):
    return {k: [parse_value(x) for x in v.split(",")] for k, v in (item.split("=", 1) for item in items)}


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("estimator", choices=sorted(bench.ESTIMATORS))
    ap.add_argument("--grid", nargs="*", default=[], help="key=v1,v2 estimator parameters")
    ap.add_argument("--source", nargs="*", default=[], help="key=value source settings")
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args(argv)

    grid = parse_pairs(args.grid)
    source = {k: v[0] for k, v in parse_pairs(args.source).items()}
    keys = sorted(grid)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        cfg = bench.ExperimentConfig(args.estimator, params, source, args.trials, args.seed)
        results = bench.run_experiment(cfg)
        ratios = np.array([r.ratio for r in results])
        bits = np.mean([r.space.total_bits for r in results]) if results else 0
        tag = "_".join(f"{k}{v}" for k, v in params.items()) or "default"
        print(f"{args.estimator} {tag}: success {bench.success_rate(results):.3f} "
              f"median ratio {np.nanmedian(ratios):.4f} mean bits {bits:.0f}")
        if args.out:
            bench.write_csv(results, args.out / f"{args.estimator}_{tag}.csv")


if __name__ == "__main__":
    main()
