"""Grid-sorting loss (smoothness + two regularizers) and the layout quality score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkernel import DTYPE, GradTape, as_matrix, euclidean_rows
from .permutation import (DEFAULT_BLOCK, apply_hard, softsort, softsort_backward,
                          softsort_backward_streamed, softsort_forward_streamed)

LAMBDA_S = 1.0
LAMBDA_SIGMA = 2.0
QUALITY_PAIRS = 10_000
EXACT_PAIRS_MAX_N = 512


@dataclass(frozen=True)
class GridShape:
    n_y: int
    n_x: int

    def __post_init__(self) -> None:
        if self.n_y < 1 or self.n_x < 1:
            raise ValueError(f"grid dimensions must be >= 1, got {self.n_y}x{self.n_x}")

    @property
    def n(self) -> int:
        return self.n_y * self.n_x

    def transposed(self) -> "GridShape":
        return GridShape(self.n_x, self.n_y)

    @classmethod
    def parse(cls, text: str) -> "GridShape":
        parts = text.lower().split("x")
        if len(parts) != 2:
            raise ValueError(f"grid must look like RxC, got {text!r}")
        return cls(int(parts[0]), int(parts[1]))

    @classmethod
    def square(cls, n: int) -> "GridShape":
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ValueError(f"{n} is not a perfect square")
        return cls(side, side)

    def __str__(self) -> str:
        return f"{self.n_y}x{self.n_x}"


def neighbor_pairs(g: GridShape) -> tuple[np.ndarray, np.ndarray]:
    """Flat row-major index pairs of horizontal then vertical 4-neighbours (no wraparound)."""
    cells = np.arange(g.n).reshape(g.n_y, g.n_x)
    a = np.concatenate([cells[:, :-1].ravel(), cells[:-1, :].ravel()])
    b = np.concatenate([cells[:, 1:].ravel(), cells[1:, :].ravel()])
    return a, b


@dataclass
class LossBreakdown:
    total: float
    l_nbr: float
    l_s: float
    l_sigma: float
    lambda_s: float = LAMBDA_S
    lambda_sigma: float = LAMBDA_SIGMA

    def as_dict(self) -> dict:
        return {"total": self.total, "l_nbr": self.l_nbr, "l_s": self.l_s,
                "l_sigma": self.l_sigma, "lambda_s": self.lambda_s,
                "lambda_sigma": self.lambda_sigma}


# ---------------------------------------------------------------- smoothness

def pair_distance_loss(y: np.ndarray, pairs: tuple[np.ndarray, np.ndarray], norm: float,
                       grad: bool = False):
    """Mean Euclidean distance over ``pairs`` divided by ``norm`` (optionally with d/dy)."""
    a, b = pairs
    diff = y[a] - y[b]
    dist = euclidean_rows(diff)
    count = a.size
    value = float(dist.sum() / (count * norm)) if count else 0.0
    if not grad:
        return value
    g = np.zeros_like(y)
    if count:
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(dist[:, None] > 0.0, diff / dist[:, None], 0.0)
        unit /= count * norm
        np.add.at(g, a, unit)
        np.add.at(g, b, -unit)
    return value, g


def neighborhood_loss(y, g: GridShape, norm: float = 1.0) -> float:
    """Average 4-neighbour Euclidean distance on grid ``g``, divided by ``norm``."""
    y = as_matrix(y, "y")
    if y.shape[0] != g.n:
        raise ValueError(f"grid size {g.n} != {y.shape[0]} rows")
    if not norm > 0:
        raise ValueError("norm must be positive")
    return pair_distance_loss(y, neighbor_pairs(g), norm)


def neighborhood_loss_grad(y, g: GridShape, norm: float = 1.0) -> tuple[float, np.ndarray]:
    y = as_matrix(y, "y")
    if y.shape[0] != g.n:
        raise ValueError(f"grid size {g.n} != {y.shape[0]} rows")
    return pair_distance_loss(y, neighbor_pairs(g), norm, grad=True)


# ---------------------------------------------------------------- regularizers

def column_sum_loss(colsum: np.ndarray, grad: bool = False):
    n = colsum.size
    dev = colsum - 1.0
    value = float(dev @ dev / n)
    if not grad:
        return value
    return value, 2.0 * dev / n


def stochastic_constraint_loss(p) -> float:
    """Mean squared deviation of the column sums of ``p`` from 1."""
    return column_sum_loss(np.asarray(p, dtype=DTYPE).sum(axis=0))


def global_std(a) -> float:
    """Population std over all entries, summed in sorted order so any row permutation gives the same bits."""
    v = np.sort(np.asarray(a, dtype=DTYPE), axis=None)
    return float(np.sqrt(np.mean((v - v.mean()) ** 2)))


def std_loss(x, y, grad: bool = False):
    """``|std(x) - std(y)| / std(x)`` using the population std over all entries."""
    x = np.asarray(x, dtype=DTYPE)
    y = np.asarray(y, dtype=DTYPE)
    sx = global_std(x)
    if sx == 0.0:
        raise ValueError("std_loss: input has zero standard deviation")
    centred = y - y.mean()
    sy = global_std(y)
    value = abs(sx - sy) / sx
    if not grad:
        return value
    if sy == 0.0:
        return value, np.zeros_like(y)
    dsy = -np.sign(sx - sy) / sx
    return value, dsy * centred / (y.size * sy)


def _combine(l_nbr: float, l_s: float, l_sigma: float, lambda_s: float,
             lambda_sigma: float) -> LossBreakdown:
    total = l_nbr + lambda_s * l_s + lambda_sigma * l_sigma
    return LossBreakdown(total, l_nbr, l_s, l_sigma, lambda_s, lambda_sigma)


def loss_from_outputs(x: np.ndarray, y: np.ndarray, colsum: np.ndarray, pairs, norm: float,
                      lambda_s: float = LAMBDA_S, lambda_sigma: float = LAMBDA_SIGMA):
    """Total loss given ``y = P x`` and the column sums of ``P``.

    Returns the breakdown and the gradients w.r.t. ``y`` and ``colsum``.
    """
    l_nbr, g_nbr = pair_distance_loss(y, pairs, norm, grad=True)
    l_s, g_s = column_sum_loss(colsum, grad=True)
    l_sig, g_sig = std_loss(x, y, grad=True)
    breakdown = _combine(l_nbr, l_s, l_sig, lambda_s, lambda_sigma)
    return breakdown, g_nbr + lambda_sigma * g_sig, lambda_s * g_s


def soft_matrix_loss(p: np.ndarray, x: np.ndarray, pairs, norm: float,
                     lambda_s: float = LAMBDA_S, lambda_sigma: float = LAMBDA_SIGMA):
    """Loss of a materialized soft permutation; returns breakdown and d/dP."""
    y = p @ x
    breakdown, gy, gc = loss_from_outputs(x, y, p.sum(axis=0), pairs, norm, lambda_s, lambda_sigma)
    return breakdown, gy @ x.T + gc[None, :]


def total_loss(w, x, g: GridShape | None, tau: float, lambda_s: float = LAMBDA_S,
               lambda_sigma: float = LAMBDA_SIGMA, norm: float | None = None,
               block: int = DEFAULT_BLOCK, pairs=None, materialize: bool = False):
    """Loss of the SoftSort relaxation of ``w`` on ``x`` and its gradient w.r.t. ``w``.

    ``pairs`` overrides the neighbour structure of ``g`` (used when the 1-D
    order does not coincide with the row-major grid order).  By default the
    soft permutation is streamed; ``materialize=True`` builds it explicitly.
    """
    x = as_matrix(x, "x")
    w = np.asarray(w, dtype=DTYPE)
    if pairs is None:
        if g is None or g.n != x.shape[0]:
            raise ValueError(f"grid size {None if g is None else g.n} != {x.shape[0]} rows")
        pairs = neighbor_pairs(g)
    if norm is None:
        norm = mean_pairwise_distance(x)
    tape = GradTape()
    if materialize:
        p = softsort(w, tau)
        y, colsum = p @ x, p.sum(axis=0)

        def back_perm(gy, gc):
            return (softsort_backward(w, tau, p, gy @ x.T + gc[None, :]),)
    else:
        fwd = softsort_forward_streamed(w, tau, x, block)
        y, colsum = fwd.y, fwd.colsum

        def back_perm(gy, gc):
            return (softsort_backward_streamed(fwd, gy, gc),)
    tape.record("softsort", ["w"], {"y": y, "colsum": colsum}, back_perm)

    l_nbr, g_nbr = pair_distance_loss(y, pairs, norm, grad=True)
    tape.record("l_nbr", ["y"], {"l_nbr": l_nbr}, lambda gl: (gl * g_nbr,))
    l_s, g_s = column_sum_loss(colsum, grad=True)
    tape.record("l_s", ["colsum"], {"l_s": l_s}, lambda gl: (gl * g_s,))
    l_sig, g_sig = std_loss(x, y, grad=True)
    tape.record("l_sigma", ["y"], {"l_sigma": l_sig}, lambda gl: (gl * g_sig,))
    breakdown = _combine(l_nbr, l_s, l_sig, lambda_s, lambda_sigma)
    tape.record("total", ["l_nbr", "l_s", "l_sigma"], {"total": breakdown.total},
                lambda gt: (gt, gt * lambda_s, gt * lambda_sigma))
    grads = tape.backward("total")
    return breakdown, np.asarray(grads["w"])


# ---------------------------------------------------------------- quality

def mean_pairwise_distance(x, n_pairs: int = QUALITY_PAIRS, seed: int = 0,
                           exact: bool | None = None) -> float:
    """Mean Euclidean distance between distinct rows.

    Exact over all pairs when ``exact`` (default: N <= 512), otherwise estimated
    from ``n_pairs`` seeded random pairs of distinct rows.
    """
    x = np.asarray(x, dtype=DTYPE)
    n = x.shape[0]
    if n < 2:
        raise ValueError("need at least two vectors")
    if exact is None:
        exact = n <= EXACT_PAIRS_MAX_N
    if exact:
        total = 0.0
        for i in range(n - 1):
            total += euclidean_rows(x[i + 1:] - x[i]).sum()
        return float(total / (n * (n - 1) / 2))
    rng = np.random.default_rng(seed)
    i = rng.integers(0, n, n_pairs)
    j = rng.integers(0, n - 1, n_pairs)
    j = j + (j >= i)
    return float(euclidean_rows(x[i] - x[j]).mean())


def quality(x, perm, g: GridShape, seed: int = 0) -> float:
    """1 - (mean neighbour distance of the arranged grid) / (mean pairwise distance)."""
    x = as_matrix(x, "x")
    if g.n != x.shape[0]:
        raise ValueError(f"grid size {g.n} != {x.shape[0]} rows")
    arranged = apply_hard(perm, x)
    mpd = mean_pairwise_distance(x, seed=seed)
    if mpd == 0.0:
        raise ValueError("quality undefined: all vectors are identical")
    return 1.0 - neighborhood_loss(arranged, g, mpd)
