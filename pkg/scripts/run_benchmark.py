"""Compare all four methods on seeded random colours and save report + table.

    python scripts/run_benchmark.py --n 1024 --seeds 0 1 2 3 4 --outdir results/
"""
import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from shufflesort import bench
from shufflesort.config import METHODS, TrainConfig
from shufflesort.data import generate_colors, render_grid_png
from shufflesort.objective import GridShape


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    ap.add_argument("--outdir", type=Path, default=Path("results"))
    ap.add_argument("--png", action="store_true", help="also render each arrangement")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO)

    args.outdir.mkdir(parents=True, exist_ok=True)
    g = GridShape.square(args.n)
    per_method = {m: [] for m in args.methods}
    for seed in args.seeds:
        x = generate_colors(args.n, seed)
        cfg = TrainConfig(seed=seed)
        rows = []
        for m in args.methods:
            res = bench.run_method(x, g, replace(cfg, method=m))
            rows.append(res.as_dict())
            per_method[m].append(res.quality)
            if args.png and res.valid:
                render_grid_png(x[res.perm], g, args.outdir / f"{m}_seed{seed}.png", cell_px=8)
        report = {"n": args.n, "seed": seed, "grid": str(g), "note": bench.LOSS_NOTE,
                  "config": cfg.resolve(args.n).as_dict(), "methods": rows}
        (args.outdir / f"report_seed{seed}.json").write_text(bench.dumps(report))
        print(f"seed {seed}\n{bench.format_table(report)}\n")

    summary = {m: {"median_quality": None if None in q else float(np.median(q)),
                   "qualities": q} for m, q in per_method.items()}
    (args.outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for m, s in summary.items():
        med = s["median_quality"]
        print(f"{m:<18} median quality {'-' if med is None else f'{med:.4f}'}")


if __name__ == "__main__":
    main()
