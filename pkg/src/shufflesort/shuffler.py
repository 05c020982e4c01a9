"""ShuffleSoftSort: repeated SoftSort runs over a 1-D order that is reshuffled between runs.

Each run starts from fresh ascending weights (so it begins at the current
arrangement), trains them against the grid loss at a geometrically shrinking
temperature, hardens, and commits the resulting permutation.  With the
transpose strategy, the 1-D order alternates between row-major and
column-major traversal of the grid so SoftSort moves elements along both axes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .config import TrainConfig
from .numkernel import AdamState, adam_step, as_matrix, pairwise_abs_distance, softmax_rows
from .objective import (GridShape, LossBreakdown, mean_pairwise_distance, neighbor_pairs,
                        pair_distance_loss, total_loss)
from .permutation import (SoftSortView, ascending_weights, harden, invert, is_valid,
                          sort_weights)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TauSchedule:
    tau_start: float
    tau_end: float
    runs: int

    def __post_init__(self) -> None:
        if not (self.tau_start >= self.tau_end > 0):
            raise ValueError("need tau_start >= tau_end > 0")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")

    def __call__(self, i: int) -> float:
        if i == 0:
            return self.tau_start
        if i == self.runs:
            return self.tau_end
        return self.tau_start * (self.tau_end / self.tau_start) ** (i / self.runs)


def transpose_shuffle(g: GridShape) -> np.ndarray:
    """Reshape to ``g``, transpose, flatten: new slot k takes old slot ``perm[k]``."""
    return np.arange(g.n).reshape(g.n_y, g.n_x).T.ravel()


@dataclass
class ShuffleState:
    """Current 1-D arrangement.

    ``vectors[k] == original[indices[k]]`` always holds; ``cells[k]`` is the
    row-major cell of the original grid that 1-D position ``k`` occupies.
    ``grid`` is the grid as seen along the current 1-D order.
    """

    vectors: np.ndarray
    indices: np.ndarray
    cells: np.ndarray
    grid: GridShape

    @classmethod
    def initial(cls, x: np.ndarray, g: GridShape) -> "ShuffleState":
        n = x.shape[0]
        return cls(x.copy(), np.arange(n), np.arange(n), g)

    def permute(self, perm: np.ndarray, move_cells: bool) -> None:
        self.vectors = self.vectors[perm]
        self.indices = self.indices[perm]
        if move_cells:
            self.cells = self.cells[perm]

    def pairs(self, base: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        pos = invert(self.cells)
        return pos[base[0]], pos[base[1]]

    def grid_order(self) -> np.ndarray:
        """Original row index for every cell of the original grid, row-major."""
        return self.indices[invert(self.cells)]


@dataclass
class RunRecord:
    run: int
    tau: float
    loss: LossBreakdown | None
    hard_l_nbr: float
    attempts: int
    fallback: bool


@dataclass
class SortResult:
    perm: np.ndarray
    history: list[RunRecord] = field(default_factory=list)

    @property
    def final_loss(self) -> LossBreakdown | None:
        for rec in reversed(self.history):
            if rec.loss is not None:
                return rec.loss
        return None


def train_weights(w: np.ndarray, x: np.ndarray, pairs, tau: float, iters: int, cfg: TrainConfig,
                  norm: float, adam: AdamState | None = None):
    """Run ``iters`` Adam steps on ``w``; returns weights, last loss and optimizer state.

    ``cfg`` must be resolved.  With ``lr_follows_tau`` the step size shrinks
    with the temperature so late runs do not jitter weights across neighbours.
    """
    lr = cfg.lr * (tau / cfg.tau_start if cfg.lr_follows_tau else 1.0)
    adam = adam or AdamState(w.shape, lr=lr)
    loss = None
    for _ in range(iters):
        loss, gw = total_loss(w, x, None, tau, cfg.lambda_s, cfg.lambda_sigma, norm=norm,
                              block=cfg.block, pairs=pairs)
        w = adam_step(adam, w, gw)
    return w, loss, adam


def greedy_fallback(perm, prob_rows: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Turn a hardened ``perm`` with duplicates into a bijection.

    ``prob_rows(slots)`` returns the soft probabilities of those rows.  Among
    slots sharing a target, the most probable one keeps it.  The displaced
    slots and the unused targets are then matched greedily by descending soft
    probability; exact ties go to the lower slot, then the lower target.
    """
    perm = np.asarray(perm)
    n = perm.size
    out = perm.copy()
    slots = np.arange(n)
    losers = []
    targets, counts = np.unique(perm, return_counts=True)
    dup_targets = targets[counts > 1]
    if dup_targets.size == 0:
        return out
    shared = np.flatnonzero(np.isin(perm, dup_targets))
    shared_probs = prob_rows(shared)[np.arange(shared.size), perm[shared]]
    for t in dup_targets:
        members = perm[shared] == t
        cand, probs = shared[members], shared_probs[members]
        ranked = cand[np.lexsort((cand, -probs))]
        losers.extend(ranked[1:].tolist())
    losers = np.array(sorted(losers))
    keep = np.ones(n, dtype=bool)
    keep[losers] = False
    free = np.setdiff1d(slots, out[keep])
    probs = prob_rows(losers)[:, free]
    li, fi = np.unravel_index(np.arange(probs.size), probs.shape)
    order = np.lexsort((fi, li, -probs.ravel()))
    slot_done = np.zeros(losers.size, dtype=bool)
    target_done = np.zeros(free.size, dtype=bool)
    for k in order:
        a, b = li[k], fi[k]
        if not slot_done[a] and not target_done[b]:
            out[losers[a]] = free[b]
            slot_done[a] = target_done[b] = True
    return out


def softsort_prob_rows(w: np.ndarray, tau: float) -> Callable[[np.ndarray], np.ndarray]:
    _, s = sort_weights(w)
    return lambda slots: softmax_rows(pairwise_abs_distance(s[slots], w) * (-1.0 / tau))


def repair_duplicates(w, tau: float, max_attempts: int = 5,
                      extend: Callable[[np.ndarray, float], np.ndarray] | None = None,
                      block: int = 256):
    """Harden ``softsort(w, tau)`` into a valid permutation.

    While hardening yields duplicates, halve ``tau`` and (if ``extend`` is
    given) keep training at the new temperature.  After ``max_attempts`` the
    deterministic greedy fallback is used, so the result is always valid.
    Returns ``(perm, attempts, used_fallback)``.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    w = np.asarray(w, dtype=float)
    perm = None
    for attempt in range(1, max_attempts + 1):
        perm = harden(SoftSortView(w, tau), block)
        if is_valid(perm):
            return perm, attempt, False
        if attempt == max_attempts:
            break
        tau *= 0.5
        if extend is not None:
            w = extend(w, tau)
    log.debug("duplicate repair fell back to greedy assignment")
    return greedy_fallback(perm, softsort_prob_rows(w, tau)), max_attempts, True


def _shuffle_step(state: ShuffleState, i: int, cfg: TrainConfig, enabled: bool,
                  rng: np.random.Generator) -> None:
    if not enabled:
        return
    if cfg.shuffle == "random":
        state.permute(rng.permutation(state.vectors.shape[0]), move_cells=True)
    elif i > 0:
        # run 0 sorts along the initial row-major order; later runs alternate axes
        state.permute(transpose_shuffle(state.grid), move_cells=True)
        state.grid = state.grid.transposed()


def _run(x, g: GridShape, sched: TauSchedule, iters_per_run: int, cfg: TrainConfig,
         shuffle: bool, callback=None) -> SortResult:
    x = as_matrix(x, "x")
    n = x.shape[0]
    cfg = replace(cfg.resolve(n), tau_start=sched.tau_start, tau_end=sched.tau_end, runs=sched.runs)
    if g.n != n:
        raise ValueError(f"grid size {g.n} != {n} rows")
    if n < 2:
        raise ValueError("need at least two vectors")
    norm = mean_pairwise_distance(x, seed=cfg.seed)
    if norm == 0.0:
        norm = 1.0
    base_pairs = neighbor_pairs(g)
    rng = np.random.default_rng(cfg.seed)
    state = ShuffleState.initial(x, g)
    result = SortResult(state.grid_order())
    best = pair_distance_loss(x, base_pairs, norm)
    for i in range(sched.runs + 1):
        tau = sched(i)
        _shuffle_step(state, i, cfg, shuffle, rng)
        pairs = state.pairs(base_pairs)
        # seeded jitter well below the 1/n spacing: still hardens to identity,
        # but breaks exact symmetries that would stall the gradient
        w = ascending_weights(n) + cfg.init_jitter / n * (rng.random(n) - 0.5)
        w, loss, adam = train_weights(w, state.vectors, pairs, tau, iters_per_run, cfg, norm)
        extra = max(1, iters_per_run // 2) if iters_per_run else 0

        def extend(w_, tau_, _adam=adam, _pairs=pairs):
            return train_weights(w_, state.vectors, _pairs, tau_, extra, cfg, norm, _adam)[0]

        perm, attempts, fallback = repair_duplicates(w, tau, cfg.repair_attempts,
                                                     extend if extra else None, cfg.block)
        state.permute(perm, move_cells=False)
        hard = pair_distance_loss(state.vectors, pairs, norm)
        rec = RunRecord(i, tau, loss, hard, attempts, fallback)
        result.history.append(rec)
        if callback is not None:
            callback(state, rec)
        log.debug("run %d tau=%.4g hard l_nbr=%.5f", i, tau, hard)
        if not cfg.keep_best or hard < best:
            best = hard
            result.perm = state.grid_order()
    return result


def run_shuffle_softsort(x, g: GridShape, sched: TauSchedule | None = None,
                         iters_per_run: int | None = None, cfg: TrainConfig | None = None,
                         callback=None) -> SortResult:
    """Sort the rows of ``x`` onto grid ``g``; ``result.perm[c]`` is the row placed in cell ``c``."""
    cfg = (cfg or TrainConfig()).resolve(np.shape(x)[0])
    sched = sched or TauSchedule(cfg.tau_start, cfg.tau_end, cfg.runs)
    iters = cfg.iters_per_run if iters_per_run is None else iters_per_run
    return _run(x, g, sched, iters, cfg, True, callback)


def run_single_softsort(x, g: GridShape, sched: TauSchedule | None = None,
                        iters_per_run: int | None = None, cfg: TrainConfig | None = None,
                        callback=None) -> SortResult:
    """Same schedule and training as ``run_shuffle_softsort`` with the shuffle disabled."""
    cfg = (cfg or TrainConfig()).resolve(np.shape(x)[0])
    sched = sched or TauSchedule(cfg.tau_start, cfg.tau_end, cfg.runs)
    iters = cfg.iters_per_run if iters_per_run is None else iters_per_run
    return _run(x, g, sched, iters, cfg, False, callback)
