"""Comparison methods: Gumbel-Sinkhorn (N^2 parameters) and low-rank "kissing" factorization (2NM)."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import TrainConfig
from .numkernel import (AdamState, adam_step, as_matrix, matmul_backward, softmax_rows,
                        softmax_rows_backward)
from .objective import GridShape, LossBreakdown, mean_pairwise_distance, neighbor_pairs, soft_matrix_loss
from .permutation import harden, is_valid
from .shuffler import greedy_fallback

log = logging.getLogger(__name__)

# best known lower bounds on the kissing number, dimensions 1..24
KISSING_NUMBERS = (2, 6, 12, 24, 40, 72, 126, 240, 306, 500, 582, 840, 1130, 1582, 2564, 4320,
                   5346, 7398, 10668, 17400, 27720, 49896, 93150, 196560)


def min_rank_for(n: int) -> int:
    """Smallest dimension M whose kissing number is at least ``n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    for m, k in enumerate(KISSING_NUMBERS, start=1):
        if k >= n:
            return m
    raise ValueError(f"n={n} exceeds the kissing-number table (max {KISSING_NUMBERS[-1]} "
                     f"in dimension 24); pass an explicit rank M")


def parameter_count(method: str, n: int, rank: int | None = None) -> int:
    """Learnable parameter count per method: N^2, 2NM, N, N."""
    if method == "gumbel-sinkhorn":
        return n * n
    if method == "kissing":
        return 2 * n * (rank or min_rank_for(n))
    if method in ("softsort", "shuffle-softsort"):
        return n
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------- Sinkhorn

def _lse(z: np.ndarray, axis: int) -> np.ndarray:
    mx = z.max(axis=axis)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.exp(z - (mx[:, None] if axis == 1 else mx[None, :]))
    return mx + np.log(e.sum(axis=axis))


# scalings further than this (in log units) from 1 are folded into the kernel
_ABSORB = 200.0


@dataclass
class SinkhornTrace:
    """Scaling form of the balanced matrix plus what is needed to replay the iterations.

    After every half step the iterate is ``diag(u) K diag(v)`` for one of the
    stored kernels; ``steps`` holds ``(kernel index, u, v)`` per half step.
    """

    kernels: list
    steps: list

    @property
    def soft(self) -> np.ndarray:
        k, u, v = self.steps[-1]
        return u[:, None] * self.kernels[k] * v[None, :]


def _bad(scale: np.ndarray) -> bool:
    with np.errstate(divide="ignore"):
        ls = np.log(scale)
    return not np.all(np.isfinite(ls)) or np.abs(ls).max() > _ABSORB


def log_sinkhorn(log_alpha: np.ndarray, iterations: int) -> SinkhornTrace:
    """Alternating row/column normalization of ``exp(log_alpha)`` without overflow.

    Works on scaling vectors (two matrix-vector products per iteration) and
    only recomputes the kernel in log space when a scaling leaves
    ``exp(+-200)``, so it matches the pure log-domain iteration at any temperature.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    la = np.asarray(log_alpha, dtype=float)
    n, m = la.shape
    a = _lse(la, 1)  # log row potential
    b = np.zeros(m)  # log column potential
    kernels = [np.exp(la - a[:, None])]
    steps = []
    u, v = np.ones(n), np.ones(m)
    for _ in range(iterations):
        with np.errstate(divide="ignore", over="ignore"):
            u = 1.0 / (kernels[-1] @ v)
        if _bad(u):
            b = b - np.log(v)
            a = _lse(la - b[None, :], 1)
            kernels.append(np.exp(la - a[:, None] - b[None, :]))
            u, v = np.ones(n), np.ones(m)
        steps.append((len(kernels) - 1, u, v))
        with np.errstate(divide="ignore", over="ignore"):
            v = 1.0 / (kernels[-1].T @ u)
        if _bad(v):
            a = a - np.log(u)
            b = _lse(la - a[:, None], 0)
            kernels.append(np.exp(la - a[:, None] - b[None, :]))
            u, v = np.ones(n), np.ones(m)
        steps.append((len(kernels) - 1, u, v))
    return SinkhornTrace(kernels, steps)


def log_sinkhorn_backward(trace: SinkhornTrace, grad_log_p: np.ndarray) -> np.ndarray:
    """VJP of ``log_sinkhorn`` w.r.t. ``log_alpha``.

    Normalizing ``z' = z - lse(z)`` has VJP ``g - exp(z') * sum(g)``.  Every
    such correction is ``diag(alpha) K diag(beta)``, so the result is
    ``grad - K * (A B^T)`` per kernel, and the running row/column sums of the
    gradient need only two matrix-vector products per half step.
    """
    g0 = np.asarray(grad_log_p, dtype=float)
    row_sum, col_sum = g0.sum(axis=1), g0.sum(axis=0)
    factors = {}
    for idx in range(len(trace.steps) - 1, -1, -1):
        k, u, v = trace.steps[idx]
        if idx % 2:  # column step
            alpha, beta = u, v * col_sum
        else:
            alpha, beta = u * row_sum, v
        kern = trace.kernels[k]
        row_sum = row_sum - alpha * (kern @ beta)
        col_sum = col_sum - beta * (kern.T @ alpha)
        factors.setdefault(k, ([], []))
        factors[k][0].append(alpha)
        factors[k][1].append(beta)
    g = g0.copy()
    for k, (alphas, betas) in factors.items():
        g -= trace.kernels[k] * (np.stack(alphas, axis=1) @ np.stack(betas, axis=0))
    return g


def sinkhorn_normalize(m, iterations: int) -> np.ndarray:
    """Sinkhorn-Knopp balancing of a strictly positive matrix (computed in log space)."""
    m = as_matrix(m, "m")
    if np.any(m <= 0):
        raise ValueError("sinkhorn_normalize needs strictly positive entries")
    return log_sinkhorn(np.log(m), iterations).soft


def gumbel_noise(shape, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    u = rng.random(shape)
    u = np.clip(u, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return -np.log(-np.log(u))


@dataclass
class SinkhornParams:
    logits: np.ndarray
    tau: float = 1.0
    iterations: int = 20
    noise_scale: float = 1.0


def gumbel_sinkhorn(p: SinkhornParams, seed=0, noise: np.ndarray | None = None):
    """Soft permutation ``exp(sinkhorn((logits + s*G) / tau))`` and its trace for backward."""
    if not p.tau > 0:
        raise ValueError("gumbel_sinkhorn: tau must be positive")
    logits = as_matrix(p.logits, "logits")
    if p.noise_scale:
        if noise is None:
            noise = gumbel_noise(logits.shape, seed)
        log_alpha = (logits + p.noise_scale * noise) / p.tau
    else:
        log_alpha = logits / p.tau
    trace = log_sinkhorn(log_alpha, p.iterations)
    return trace.soft, trace


def gumbel_sinkhorn_backward(p: SinkhornParams, soft: np.ndarray, trace: SinkhornTrace,
                             grad_soft: np.ndarray) -> np.ndarray:
    return log_sinkhorn_backward(trace, grad_soft * soft) / p.tau


# ---------------------------------------------------------------- kissing

@dataclass
class KissingParams:
    v: np.ndarray
    w: np.ndarray
    scale: float = 10.0

    @property
    def rank(self) -> int:
        return self.v.shape[1]


def _normalize_rows(a: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    if np.any(norms == 0.0):
        raise ValueError(f"{name} has a zero row (row {int(np.argmin(norms))}); cannot normalize")
    return a / norms[:, None], norms


def _normalize_rows_backward(unit: np.ndarray, norms: np.ndarray, grad: np.ndarray) -> np.ndarray:
    return (grad - unit * np.einsum("ij,ij->i", unit, grad)[:, None]) / norms[:, None]


def kissing_permutation(p: KissingParams):
    """``softmax_rows(scale * unit(V) unit(W)^T)``; returns the matrix and a cache for backward."""
    vn, v_norm = _normalize_rows(np.asarray(p.v, dtype=float), "V")
    wn, w_norm = _normalize_rows(np.asarray(p.w, dtype=float), "W")
    sim = vn @ wn.T
    soft = softmax_rows(p.scale * sim)
    return soft, (vn, v_norm, wn, w_norm, sim)


def kissing_backward(p: KissingParams, soft: np.ndarray, cache, grad_soft: np.ndarray):
    """Gradients w.r.t. ``(V, W, scale)``."""
    vn, v_norm, wn, w_norm, sim = cache
    g_logits = softmax_rows_backward(soft, grad_soft)
    g_scale = float(np.einsum("ij,ij->", g_logits, sim))
    g_vn, g_wt = matmul_backward(vn, wn.T, p.scale * g_logits)
    return (_normalize_rows_backward(vn, v_norm, g_vn),
            _normalize_rows_backward(wn, w_norm, g_wt.T), g_scale)


# ---------------------------------------------------------------- training

@dataclass
class BaselineResult:
    perm: np.ndarray
    loss: LossBreakdown | None
    history: list
    repaired: bool = False
    attempts: int = 1

    @property
    def final_loss(self) -> LossBreakdown | None:
        return self.loss


def repair_sinkhorn(logits: np.ndarray, tau: float, iterations: int, max_attempts: int = 5):
    """Harden the noise-free Sinkhorn matrix, sharpening it while duplicates remain.

    Each retry halves the temperature and doubles the iteration count; after
    ``max_attempts`` the greedy fallback assigns the duplicated rows.
    Returns ``(perm, attempts, used_fallback)``.
    """
    soft = None
    for attempt in range(1, max_attempts + 1):
        soft, _ = gumbel_sinkhorn(SinkhornParams(logits, tau, iterations, 0.0))
        perm = harden(soft)
        if is_valid(perm):
            return perm, attempt, False
        tau, iterations = tau * 0.5, iterations * 2
    log.debug("sinkhorn hardening fell back to greedy assignment")
    return greedy_fallback(perm, lambda rows: soft[rows]), max_attempts, True


def train_gumbel_sinkhorn(x, g: GridShape, cfg: TrainConfig) -> BaselineResult:
    """Learn N^2 logits; tau anneals geometrically and the noise scale linearly to 0."""
    x = as_matrix(x, "x")
    n = x.shape[0]
    pairs = neighbor_pairs(g)
    norm = mean_pairwise_distance(x, seed=cfg.seed) or 1.0
    rng = np.random.default_rng(cfg.seed)
    logits = np.zeros((n, n))
    adam = AdamState(logits.shape, lr=cfg.gs_lr)
    steps = cfg.gs_steps
    loss, history = None, []
    for t in range(steps):
        frac = t / max(1, steps - 1)
        tau = cfg.gs_tau_start * (cfg.gs_tau_end / cfg.gs_tau_start) ** frac
        params = SinkhornParams(logits, tau, cfg.sinkhorn_iters, cfg.gs_noise * (1.0 - frac))
        noise = gumbel_noise((n, n), rng) if params.noise_scale else None
        soft, trace = gumbel_sinkhorn(params, noise=noise)
        loss, g_soft = soft_matrix_loss(soft, x, pairs, norm, cfg.lambda_s, cfg.lambda_sigma)
        grad = gumbel_sinkhorn_backward(params, soft, trace, g_soft)
        logits = adam_step(adam, logits, grad)
        history.append(loss.total)
    perm, attempts, fallback = repair_sinkhorn(logits, cfg.gs_tau_end, cfg.sinkhorn_final_iters,
                                               cfg.repair_attempts)
    return BaselineResult(perm, loss, history, attempts > 1 or fallback, attempts)


def init_kissing(n: int, rank: int, scale: float, seed) -> KissingParams:
    rng = np.random.default_rng(seed)
    return KissingParams(rng.standard_normal((n, rank)), rng.standard_normal((n, rank)), scale)


def train_kissing(x, g: GridShape, cfg: TrainConfig) -> BaselineResult:
    """Learn two N x M factors and a softmax scale.  Hardening is NOT repaired."""
    x = as_matrix(x, "x")
    n = x.shape[0]
    rank = cfg.kissing_rank or min_rank_for(n)
    pairs = neighbor_pairs(g)
    norm = mean_pairwise_distance(x, seed=cfg.seed) or 1.0
    p = init_kissing(n, rank, cfg.kissing_scale, cfg.seed)
    size = 2 * n * rank + 1
    adam = AdamState((size,), lr=cfg.kissing_lr)
    theta = np.concatenate([p.v.ravel(), p.w.ravel(), [p.scale]])
    loss, history = None, []
    for _ in range(cfg.kissing_steps):
        p = KissingParams(theta[: n * rank].reshape(n, rank),
                          theta[n * rank: 2 * n * rank].reshape(n, rank), theta[-1])
        soft, cache = kissing_permutation(p)
        loss, g_soft = soft_matrix_loss(soft, x, pairs, norm, cfg.lambda_s, cfg.lambda_sigma)
        gv, gw, gs = kissing_backward(p, soft, cache, g_soft)
        theta = adam_step(adam, theta, np.concatenate([gv.ravel(), gw.ravel(), [gs]]))
        history.append(loss.total)
    p = KissingParams(theta[: n * rank].reshape(n, rank),
                      theta[n * rank: 2 * n * rank].reshape(n, rank), theta[-1])
    soft, _ = kissing_permutation(p)
    return BaselineResult(harden(soft), loss, history)
