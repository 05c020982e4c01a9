"""Command line entry point: ``shufflesort sort | benchmark | gradcheck``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .config import METHODS, SHUFFLES, TrainConfig
from .data import CSVFormatError, generate_colors, load_csv, render_grid_png, write_csv
from .gradcheck import TOLERANCE, gradient_suite
from .objective import GridShape

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INVALID = 0, 1, 2, 3

log = logging.getLogger("shufflesort")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits 2 by default; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_data_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--input", type=Path, help="headerless CSV, one vector per row")
    src.add_argument("--random-colors", type=int, metavar="N", help="generate N random RGB colors")
    p.add_argument("--grid", help="grid as RxC (rows x columns); default: square")
    p.add_argument("--seed", type=int, default=0)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau-start", type=float, help="default 3/N")
    p.add_argument("--tau-end", type=float, help="default 0.25/N")
    p.add_argument("--runs", type=int, default=TrainConfig.runs)
    p.add_argument("--iters", type=int, default=TrainConfig.iters_per_run, help="steps per run")
    p.add_argument("--lr", type=float, help="default tau_start/3")
    p.add_argument("--block", type=int, default=TrainConfig.block)
    p.add_argument("--lambda-s", type=float, default=TrainConfig.lambda_s)
    p.add_argument("--lambda-sigma", type=float, default=TrainConfig.lambda_sigma)
    p.add_argument("--shuffle", choices=SHUFFLES, default="transpose")
    p.add_argument("--report", type=Path, help="write a JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="shufflesort", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("sort", help="sort vectors onto a grid")
    p.add_argument("--method", choices=METHODS, default="shuffle-softsort")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--out", type=Path, help="CSV of original row indices in grid order (default stdout)")
    p.add_argument("--png", type=Path)
    p.add_argument("--cell-px", type=int, default=16)
    p.add_argument("--project", action="store_true", help="render the first 3 dims when D > 3")
    p.set_defaults(func=cmd_sort)

    p = sub.add_parser("benchmark", help="compare all methods on the same data")
    p.add_argument("--method", choices=METHODS, action="append",
                   help="restrict to this method (repeatable)")
    _add_data_args(p)
    _add_train_args(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _load(args) -> tuple[np.ndarray, str]:
    if args.input is not None:
        try:
            return load_csv(args.input), str(args.input)
        except (OSError, UnicodeDecodeError) as exc:
            raise OSError(f"cannot read {args.input}: {exc}") from exc
    n = 1024 if args.random_colors is None else args.random_colors
    if n < 2:
        raise UsageError("--random-colors must be >= 2")
    return generate_colors(n, args.seed), f"random-colors:{n}"


def _grid(spec: str | None, n: int) -> GridShape:
    if spec is None:
        side = math.isqrt(n)
        if side * side != n:
            raise UsageError(f"{n} rows do not form a square grid; pass --grid RxC")
        return GridShape(side, side)
    try:
        g = GridShape.parse(spec)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if g.n != n:
        raise UsageError(f"grid size {g.n} ≠ {n} rows")
    return g


def _config(args, method: str) -> TrainConfig:
    cfg = TrainConfig(method=method, tau_start=args.tau_start, tau_end=args.tau_end,
                      runs=args.runs, iters_per_run=args.iters, lr=args.lr, seed=args.seed,
                      block=args.block, lambda_s=args.lambda_s, lambda_sigma=args.lambda_sigma,
                      shuffle=args.shuffle)
    try:
        return cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(bench.dumps(doc), encoding="utf-8", newline="\n")


def cmd_sort(args) -> int:
    x, source = _load(args)
    g = _grid(args.grid, x.shape[0])
    if args.png is not None and x.shape[1] != 3 and not (args.project and x.shape[1] > 3):
        raise UsageError(f"PNG rendering needs 3 columns, got {x.shape[1]}; "
                         f"use --project to render the first three dimensions")
    if args.cell_px < 1:
        raise UsageError("--cell-px must be >= 1")
    cfg = _config(args, args.method)
    res = bench.run_method(x, g, cfg)
    summary = {"source": source, "grid": str(g), **res.as_dict(),
               "config": cfg.resolve(x.shape[0]).as_dict()}
    if args.report is not None:
        _write_json(args.report, summary)
    if not res.valid:
        print(f"error: {args.method} produced an invalid permutation "
              f"(index {res.duplicate} repeated); nothing written", file=sys.stderr)
        return EXIT_INVALID
    if args.out is not None:
        write_csv(args.out, res.perm)
    else:
        sys.stdout.write("".join(f"{int(i)}\n" for i in res.perm))
    if args.png is not None:
        render_grid_png(x[res.perm], g, args.png, args.cell_px, args.project)
    print(f"{args.method}: quality {res.quality:.4f}, loss {res.loss['total']:.6f}, "
          f"{res.seconds:.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    x, source = _load(args)
    g = _grid(args.grid, x.shape[0])
    cfg = _config(args, "shuffle-softsort")
    start = time.perf_counter()
    report = bench.benchmark(x, g, cfg, tuple(args.method or METHODS), source=source)
    report["seconds"] = time.perf_counter() - start
    if args.report is not None:
        _write_json(args.report, report)
    print(bench.format_table(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    errs = gradient_suite(seed=args.seed)
    width = max(map(len, errs))
    for op, err in errs.items():
        print(f"{op:<{width}}  {err:.3e}  {'ok' if err < TOLERANCE else 'FAIL'}")
    return EXIT_OK if all(e < TOLERANCE for e in errs.values()) else EXIT_USAGE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, CSVFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
