"""Sweep the temperature range (in units of the 1/N weight spacing) for ShuffleSoftSort."""
import argparse

import numpy as np

from shufflesort.config import TrainConfig
from shufflesort.data import generate_colors
from shufflesort.objective import GridShape, quality
from shufflesort.shuffler import run_shuffle_softsort


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=256)
    ap.add_argument("--starts", type=float, nargs="+", default=[1, 3, 10, 30])
    ap.add_argument("--ends", type=float, nargs="+", default=[0.1, 0.25, 1.0])
    ap.add_argument("--runs", type=int, default=TrainConfig.runs)
    ap.add_argument("--iters", type=int, default=TrainConfig.iters_per_run)
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    g = GridShape.square(args.n)
    print(f"{'start':>6} {'end':>6} {'median Q':>9}")
    for s in args.starts:
        for e in args.ends:
            if e > s:
                continue
            qs = []
            for seed in range(args.seeds):
                x = generate_colors(args.n, seed)
                cfg = TrainConfig(seed=seed, tau_start=s / args.n, tau_end=e / args.n,
                                  runs=args.runs, iters_per_run=args.iters)
                qs.append(quality(x, run_shuffle_softsort(x, g, cfg=cfg).perm, g))
            print(f"{s:>6g} {e:>6g} {np.median(qs):>9.4f}")


if __name__ == "__main__":
    main()
