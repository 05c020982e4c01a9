"""Run configuration shared by the training drivers, benchmark and CLI."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .objective import LAMBDA_S, LAMBDA_SIGMA, GridShape
from .permutation import DEFAULT_BLOCK

METHODS = ("shuffle-softsort", "softsort", "gumbel-sinkhorn", "kissing")
SHUFFLES = ("transpose", "random")


def auto_temperatures(n: int) -> tuple[float, float, float]:
    """Default ``(tau_start, tau_end, lr)`` for ``n`` weights spaced 1/n apart.

    SoftSort only reorders weights that lie within a few temperatures of each
    other, so the useful range is set by the spacing 1/n: start at 3 spacings,
    end at a quarter spacing, and step a third of the starting temperature.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    return 3.0 / n, 0.25 / n, 1.0 / n


@dataclass
class TrainConfig:
    method: str = "shuffle-softsort"
    grid: GridShape | None = None
    # None: derived from N by resolve(), see auto_temperatures
    tau_start: float | None = None
    tau_end: float | None = None
    runs: int = 150
    iters_per_run: int = 15
    lr: float | None = None
    lr_follows_tau: bool = True
    init_jitter: float = 0.01
    seed: int = 0
    block: int = DEFAULT_BLOCK
    lambda_s: float = LAMBDA_S
    lambda_sigma: float = LAMBDA_SIGMA
    shuffle: str = "transpose"
    repair_attempts: int = 5
    keep_best: bool = True
    # Gumbel-Sinkhorn
    gs_steps: int = 1500
    gs_lr: float = 0.05
    sinkhorn_iters: int = 20
    sinkhorn_final_iters: int = 100
    gs_tau_start: float = 1.0
    gs_tau_end: float = 0.03
    gs_noise: float = 1.0
    # Kissing
    kissing_rank: int | None = None
    kissing_scale: float = 10.0
    kissing_steps: int = 1000
    kissing_lr: float = 0.01

    def validate(self) -> "TrainConfig":
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.shuffle not in SHUFFLES:
            raise ValueError(f"unknown shuffle {self.shuffle!r}; choose from {', '.join(SHUFFLES)}")
        if (self.tau_start is not None and self.tau_end is not None
                and not self.tau_start >= self.tau_end > 0):
            raise ValueError("need tau_start >= tau_end > 0")
        checks = {"runs": self.runs >= 1, "iters_per_run": self.iters_per_run >= 0,
                  "tau_start": self.tau_start is None or self.tau_start > 0,
                  "tau_end": self.tau_end is None or self.tau_end > 0,
                  "lr": self.lr is None or self.lr > 0,
                  "init_jitter": 0 <= self.init_jitter < 1, "block": self.block >= 1,
                  "lambda_s": self.lambda_s >= 0, "lambda_sigma": self.lambda_sigma >= 0,
                  "repair_attempts": self.repair_attempts >= 1, "gs_steps": self.gs_steps >= 0,
                  "sinkhorn_iters": self.sinkhorn_iters >= 1,
                  "sinkhorn_final_iters": self.sinkhorn_final_iters >= 1,
                  "gs_tau": self.gs_tau_start >= self.gs_tau_end > 0,
                  "kissing_scale": self.kissing_scale > 0,
                  "kissing_rank": self.kissing_rank is None or self.kissing_rank >= 1}
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid config values: {', '.join(bad)}")
        return self

    def resolve(self, n: int) -> "TrainConfig":
        """Copy with every ``None`` temperature / learning rate filled in for ``n`` items."""
        ts, te, lr = auto_temperatures(n)
        tau_start = ts if self.tau_start is None else self.tau_start
        tau_end = min(te, tau_start) if self.tau_end is None else self.tau_end
        if self.tau_start is None and self.tau_end is not None:
            tau_start = max(tau_start, tau_end)
        lr = tau_start / 3.0 if self.lr is None else self.lr
        return replace(self, tau_start=tau_start, tau_end=tau_end, lr=lr).validate()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = None if self.grid is None else str(self.grid)
        return d
