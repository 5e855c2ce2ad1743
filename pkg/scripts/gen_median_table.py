"""Tabulate median(|X_p|) for the p-stable generator on a 0.01 grid of p.

    python3 scripts/gen_median_table.py [--draws 10000000] [--seed 20240611]

Writes src/coarse_sketch/data/pstable_medians.txt.  Pass --check to compare a
few entries against scipy.stats.levy_stable (slow, optional).
"""

import argparse
from pathlib import Path

import numpy as np

from coarse_sketch.lp import sample_p_stable

OUT = Path(__file__).resolve().parents[1] / "src" / "coarse_sketch" / "data" / "pstable_medians.txt"


def median_abs(p: float, draws: int, rng: np.random.Generator, chunk: int = 2_000_000) -> float:
    parts = []
    left = draws
    while left > 0:
        m = min(chunk, left)
        parts.append(np.abs(sample_p_stable(p, m, rng)).astype(np.float32))
        left -= m
    return float(np.median(np.concatenate(parts)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--draws", type=int, default=10_000_000)
    ap.add_argument("--seed", type=int, default=20240611)
    ap.add_argument("--check", action="store_true")
    args = ap.parse_args()

    grid = np.round(np.arange(1, 201) * 0.01, 2)
    lines = [f"# median of |X| for the p-stable generator; seed={args.seed} draws={args.draws}", "# p median"]
    for i, p in enumerate(grid):
        rng = np.random.default_rng([args.seed, i])
        med = 1.0 if p == 1.0 else median_abs(float(p), args.draws, rng)
        lines.append(f"{p:.2f} {med:.8g}")
        print(lines[-1], flush=True)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n")

    if args.check:
        from scipy.stats import levy_stable

        for p in (0.5, 1.5, 1.9):
            rng = np.random.default_rng(0)
            ref = np.median(np.abs(levy_stable.rvs(p, 0.0, size=200_000, random_state=rng)))
            print(f"p={p}: table {float(np.interp(p, grid, [float(l.split()[1]) for l in lines[2:]])):.4f} scipy {ref:.4f}")


if __name__ == "__main__":
    main()
