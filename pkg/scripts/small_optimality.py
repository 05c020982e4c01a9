"""Compare ShuffleSoftSort on 3x3 grids against the exhaustive optimum over all 9! layouts."""
import argparse
import itertools

import numpy as np

from shufflesort.config import TrainConfig
from shufflesort.data import generate_colors
from shufflesort.objective import GridShape, neighbor_pairs
from shufflesort.shuffler import run_shuffle_softsort


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sets", type=int, default=10)
    ap.add_argument("--first-seed", type=int, default=100)
    args = ap.parse_args()

    g = GridShape(3, 3)
    a, b = neighbor_pairs(g)
    perms = np.array(list(itertools.permutations(range(9))))
    ratios = []
    for k in range(args.sets):
        x = generate_colors(9, args.first_seed + k)
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        costs = d[perms[:, a], perms[:, b]].sum(axis=1)
        res = run_shuffle_softsort(x, g, cfg=TrainConfig(seed=k))
        ratio = d[res.perm[a], res.perm[b]].sum() / costs.min()
        ratios.append(ratio)
        rank = int((costs < d[res.perm[a], res.perm[b]].sum() - 1e-12).sum())
        print(f"set {k}: ratio {ratio:.4f}, {rank} of {len(perms)} layouts are strictly better")
    print(f"worst ratio {max(ratios):.4f}, mean {np.mean(ratios):.4f}")


if __name__ == "__main__":
    main()
