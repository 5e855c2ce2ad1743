"""Print how sketch size scales with its accuracy knobs.

    python3 scripts/space_scaling.py

Three tables: rough distinct elements against the level count t, the p-stable
sketch against eps, and the large-p reduction against alpha.  The normalized
column should stay flat.
"""

from coarse_sketch.l0 import RoughL0Sketch, rough_config
from coarse_sketch.lp import PStableSketch
from coarse_sketch.lp_large import derive_q, plan_space


def table(title, header, rows):
    print(f"\n{title}")
    print("  ".join(f"{h:>14}" for h in header))
    for r in rows:
        print("  ".join(f"{v:>14.6g}" if isinstance(v, float) else f"{v:>14}" for v in r))


def main():
    rows = []
    for t in (2, 4, 8, 16):
        bits = RoughL0Sketch(1 << 16, 100, rough_config("full", t=t), 0).space().total_bits
        rows.append((t, bits, bits / t))
    table("rough l0, n = 2^16", ("t", "total bits", "bits / t"), rows)

    rows = []
    for eps in (0.4, 0.2, 0.1, 0.05, 0.025):
        bits = PStableSketch(1000, 20, 1.0, eps).space().total_bits
        rows.append((eps, bits, bits * eps ** 2))
    table("p-stable, p = 1", ("eps", "total bits", "bits * eps^2"), rows)

    rows = []
    for alpha in (1.0, 1.5, 2.0, 3.0, 4.0, 6.0):
        bits = plan_space(4096, 4.0, alpha).total_bits
        rows.append((alpha, derive_q(4096, 4.0, alpha), bits, bits * alpha ** 2))
    table("large p, n = 4096, p = 4", ("alpha", "q", "total bits", "bits * alpha^2"), rows)


if __name__ == "__main__":
    main()
