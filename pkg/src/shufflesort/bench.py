"""Run each method on the same data and collect the comparison table."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .baselines import min_rank_for, parameter_count, train_gumbel_sinkhorn, train_kissing
from .config import METHODS, TrainConfig
from .objective import GridShape, quality
from .permutation import find_duplicate, is_valid
from .shuffler import run_shuffle_softsort, run_single_softsort

log = logging.getLogger(__name__)

TIMING_FIELDS = ("seconds",)
LOSS_NOTE = ("all methods are trained with the neighbourhood loss plus the column-sum and "
             "standard-deviation regularizers; the distance-matrix loss term is not used")


@dataclass
class MethodResult:
    method: str
    parameters: int
    seconds: float
    valid: bool
    quality: float | None
    loss: dict | None
    seed: int = 0
    repaired: bool = False
    duplicate: int | None = None
    error: str | None = None
    perm: np.ndarray | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("perm")
        return d


def run_method(x: np.ndarray, g: GridShape, cfg: TrainConfig) -> MethodResult:
    """Train one method and score its hardened permutation."""
    n = x.shape[0]
    rank = cfg.kissing_rank or (min_rank_for(n) if cfg.method == "kissing" else None)
    params = parameter_count(cfg.method, n, rank)
    start = time.perf_counter()
    repaired = False
    if cfg.method == "shuffle-softsort":
        res = run_shuffle_softsort(x, g, cfg=cfg)
        repaired = any(r.attempts > 1 or r.fallback for r in res.history)
    elif cfg.method == "softsort":
        res = run_single_softsort(x, g, cfg=cfg)
        repaired = any(r.attempts > 1 or r.fallback for r in res.history)
    elif cfg.method == "gumbel-sinkhorn":
        res = train_gumbel_sinkhorn(x, g, cfg)
        repaired = res.repaired
    elif cfg.method == "kissing":
        res = train_kissing(x, g, cfg)
    else:
        raise ValueError(f"unknown method {cfg.method!r}")
    seconds = time.perf_counter() - start
    perm = np.asarray(res.perm)
    valid = is_valid(perm, n)
    loss = res.final_loss
    return MethodResult(
        method=cfg.method, parameters=params, seconds=seconds, valid=valid,
        quality=quality(x, perm, g, seed=cfg.seed) if valid else None,
        loss=None if loss is None else loss.as_dict(), seed=cfg.seed, repaired=repaired,
        duplicate=None if valid else find_duplicate(perm), perm=perm)


def benchmark(x: np.ndarray, g: GridShape, cfg: TrainConfig, methods=METHODS,
              source: str = "") -> dict:
    """Run ``methods`` on identical data; a failing method is recorded, not raised."""
    rows = []
    for method in methods:
        mcfg = replace(cfg, method=method).validate()
        try:
            rows.append(run_method(x, g, mcfg).as_dict())
        except Exception as exc:  # one broken method must not sink the table
            log.exception("method %s failed", method)
            rows.append(MethodResult(method, parameter_count(method, x.shape[0], cfg.kissing_rank),
                                     0.0, False, None, None, seed=cfg.seed, error=str(exc)).as_dict())
    return {"n": int(x.shape[0]), "dims": int(x.shape[1]), "grid": str(g), "seed": cfg.seed,
            "source": source, "note": LOSS_NOTE, "config": cfg.resolve(x.shape[0]).as_dict(), "methods": rows}


def parameter_table(n: int, rank: int | None = None) -> dict[str, int]:
    return {m: parameter_count(m, n, rank) for m in METHODS}


def strip_timing(report: dict) -> dict:
    """Copy of ``report`` with wall-clock fields removed."""
    out = json.loads(json.dumps(report))
    for row in out.get("methods", []):
        for key in TIMING_FIELDS:
            row.pop(key, None)
    out.pop("seconds", None)
    return out


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def format_table(report: dict) -> str:
    header = f"{'method':<18} {'memory':>10} {'runtime[s]':>11} {'quality':>8} {'valid':>6}"
    lines = [header, "-" * len(header)]
    for row in report["methods"]:
        q = "-" if row["quality"] is None else f"{row['quality']:.3f}"
        flag = "yes" if row["valid"] else "no*"
        lines.append(f"{row['method']:<18} {row['parameters']:>10} {row['seconds']:>11.1f} "
                     f"{q:>8} {flag:>6}")
    if any(not r["valid"] for r in report["methods"]):
        lines.append("*) invalid permutation")
    return "\n".join(lines)
