"""Finite-difference check of every differentiable operation on small random inputs."""
from __future__ import annotations

import numpy as np

from .baselines import (KissingParams, SinkhornParams, gumbel_noise, gumbel_sinkhorn,
                        gumbel_sinkhorn_backward, kissing_backward, kissing_permutation)
from .numkernel import (grad_check, pairwise_abs_distance, pairwise_abs_distance_backward,
                        softmax_rows, softmax_rows_backward)
from .objective import (GridShape, column_sum_loss, neighbor_pairs, pair_distance_loss,
                        soft_matrix_loss, std_loss, total_loss)
from .permutation import (softsort, softsort_backward, softsort_backward_streamed,
                          softsort_forward_streamed)

TOLERANCE = 1e-4
STEP = 1e-5


def _distinct(rng, n: int, gap: float = 0.05) -> np.ndarray:
    # keep weights away from the |.| kinks so central differences are valid
    return rng.permutation(n) * gap + rng.uniform(0.0, 0.2 * gap, n)


def gradient_suite(seed: int = 0, n: int = 8, d: int = 3) -> dict[str, float]:
    """Max relative error (analytic vs central difference) per operation."""
    rng = np.random.default_rng(seed)
    g = GridShape(2, n // 2)
    pairs = neighbor_pairs(g)
    x = rng.random((n, d))
    probe_y = rng.standard_normal((n, d))
    probe_c = rng.standard_normal(n)
    tau = 0.1
    out: dict[str, float] = {}

    probe = rng.standard_normal((n, n))
    out["softmax_rows"] = grad_check(
        lambda z: (float((softmax_rows(z.reshape(n, n)) * probe).sum()),
                   softmax_rows_backward(softmax_rows(z.reshape(n, n)), probe).ravel()),
        rng.standard_normal(n * n), STEP)

    b = rng.standard_normal(n)

    def dist(a):
        return (float((pairwise_abs_distance(a, b) * probe).sum()),
                pairwise_abs_distance_backward(a, b, probe)[0])
    out["pairwise_abs_distance"] = grad_check(dist, rng.standard_normal(n), STEP)

    def soft(w):
        p = softsort(w, tau)
        return float((p * probe).sum()), softsort_backward(w, tau, p, probe)
    out["softsort"] = grad_check(soft, _distinct(rng, n), STEP)

    def streamed(w):
        fwd = softsort_forward_streamed(w, tau, x, block=3)
        value = float((fwd.y * probe_y).sum() + fwd.colsum @ probe_c)
        return value, softsort_backward_streamed(fwd, probe_y, probe_c)
    out["streaming_path"] = grad_check(streamed, _distinct(rng, n), STEP)

    out["l_nbr"] = grad_check(lambda y: pair_distance_loss(y.reshape(n, d), pairs, 0.7, grad=True),
                              rng.random((n, d)).ravel(), STEP)
    out["l_s"] = grad_check(lambda c: column_sum_loss(c, grad=True), rng.random(n) * 2, STEP)
    out["l_sigma"] = grad_check(
        lambda y: (lambda v, gr: (v, gr.ravel()))(*std_loss(x, y.reshape(n, d), grad=True)),
        rng.random((n, d)).ravel(), STEP)

    def total(w):
        br, gw = total_loss(w, x, g, tau, norm=0.7, block=3)
        return br.total, gw
    out["total_loss"] = grad_check(total, _distinct(rng, n), STEP)

    noise = gumbel_noise((n, n), seed)

    def sink(l):
        p = SinkhornParams(l.reshape(n, n), 0.5, 20, 0.3)
        s, trace = gumbel_sinkhorn(p, noise=noise)
        br, g_soft = soft_matrix_loss(s, x, pairs, 0.7)
        return br.total, gumbel_sinkhorn_backward(p, s, trace, g_soft).ravel()
    out["gumbel_sinkhorn"] = grad_check(sink, rng.standard_normal(n * n), STEP)

    m = 3

    def kiss(theta):
        p = KissingParams(theta[: n * m].reshape(n, m), theta[n * m: 2 * n * m].reshape(n, m),
                          theta[-1])
        s, cache = kissing_permutation(p)
        br, g_soft = soft_matrix_loss(s, x, pairs, 0.7)
        gv, gw, gs = kissing_backward(p, s, cache, g_soft)
        return br.total, np.concatenate([gv.ravel(), gw.ravel(), [gs]])
    out["kissing"] = grad_check(kiss, np.concatenate([rng.standard_normal(2 * n * m), [3.0]]), STEP)
    return out
