"""Tabulate guarantee and impossibility coefficients over (alpha, gamma).

Columns: the general guarantee at beta = alpha, the alpha-aggressive
correlated guarantee, the alpha/2-aggressive guarantee, the high-correlation
guarantee (blank where its condition fails) and the Markov ceiling.

    python scripts/bound_curves.py --out results/bound_curves.csv
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from dmmf import bounds


def rows(alphas, gammas):
    for a in alphas:
        for g in gammas:
            high = bounds.high_correlation(a, g)[0] if bounds.high_correlation_condition(a, g) else None
            ceiling = bounds.impossibility_markov(a, g) if g > 0 else None
            yield (a, g, bounds.guarantee_general(a, a, g), bounds.moderate_correlation(a, g),
                   bounds.arbitrary_correlation(g), high, ceiling)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=19, help="grid points per axis")
    ap.add_argument("--out", default="results/bound_curves.csv")
    args = ap.parse_args()
    grid = np.round(np.linspace(0.05, 0.95, args.points), 12)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "gamma", "general", "moderate", "half_alpha", "high", "markov_ceiling"])
        for r in rows(grid, grid):
            w.writerow(["" if x is None else "%.12g" % x for x in r])
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
