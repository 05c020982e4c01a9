"""SoftSort relaxation, hardening, validity checks and the row-block streaming path.

Sorting is ascending: weights already in ascending order harden to the
identity.  ``perm[i]`` is the source row placed at output slot ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numkernel import (DTYPE, as_matrix, as_vector, pairwise_abs_distance,
                        pairwise_abs_distance_backward, softmax_rows, softmax_rows_backward)

DEFAULT_BLOCK = 256


def _check_tau(tau: float) -> float:
    tau = float(tau)
    if not tau > 0.0 or not np.isfinite(tau):
        raise ValueError(f"temperature must be positive and finite, got {tau}")
    return tau


def ascending_weights(n: int) -> np.ndarray:
    """Linear weights ``i / n`` in [0, 1); they harden to the identity."""
    return np.arange(n, dtype=DTYPE) / n


def sort_weights(w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.argsort(w, kind="stable")
    return idx, w[idx]


def softsort(w, tau: float) -> np.ndarray:
    """Materialized ``softmax(-|sort(w)[i] - w[j]| / tau)`` (N x N)."""
    w = as_vector(w, "w")
    tau = _check_tau(tau)
    _, s = sort_weights(w)
    return softmax_rows(pairwise_abs_distance(s, w) * (-1.0 / tau))


def softsort_backward(w, tau: float, p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. ``w`` of a scalar whose gradient w.r.t. ``softsort(w, tau)`` is ``grad_p``."""
    w = np.asarray(w, dtype=DTYPE)
    idx, s = sort_weights(w)
    gz = softmax_rows_backward(p, grad_p) * (-1.0 / tau)
    gs, gw = pairwise_abs_distance_backward(s, w, gz)
    gw = gw.copy()
    np.add.at(gw, idx, gs)
    return gw


@dataclass(frozen=True)
class SoftSortView:
    """Lazy soft permutation: rows are produced on demand from ``(w, tau)``."""

    w: np.ndarray
    tau: float

    @property
    def n(self) -> int:
        return self.w.size

    def rows(self, start: int, stop: int) -> np.ndarray:
        _, s = sort_weights(self.w)
        return softmax_rows(pairwise_abs_distance(s[start:stop], self.w) * (-1.0 / self.tau))

    def materialize(self) -> np.ndarray:
        return softsort(self.w, self.tau)


def harden(p, block: int = DEFAULT_BLOCK) -> np.ndarray:
    """Row-wise argmax (lowest index wins ties).  The result may contain duplicates."""
    if isinstance(p, SoftSortView):
        out = np.empty(p.n, dtype=np.intp)
        for a in range(0, p.n, block):
            b = min(a + block, p.n)
            out[a:b] = np.argmax(p.rows(a, b), axis=1)
        return out
    return np.argmax(np.asarray(p), axis=1).astype(np.intp)


def find_duplicate(perm) -> int | None:
    """First value (in slot order) that already appeared earlier, else None."""
    seen = set()
    for v in np.asarray(perm).tolist():
        if v in seen:
            return int(v)
        seen.add(v)
    return None


def is_valid(perm, n: int | None = None) -> bool:
    perm = np.asarray(perm)
    n = perm.size if n is None else n
    if perm.ndim != 1 or perm.size != n or n == 0:
        return n == 0 and perm.size == 0
    if not np.issubdtype(perm.dtype, np.integer):
        return False
    if perm.min() < 0 or perm.max() >= n:
        return False
    return np.unique(perm).size == n


def invert(perm) -> np.ndarray:
    perm = np.asarray(perm)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(perm.size, dtype=perm.dtype)
    return inv


def to_matrix(perm) -> np.ndarray:
    perm = np.asarray(perm)
    m = np.zeros((perm.size, perm.size), dtype=DTYPE)
    m[np.arange(perm.size), perm] = 1.0
    return m


def apply_hard(perm, x) -> np.ndarray:
    """``out[i] = x[perm[i]]``; raises on an invalid permutation."""
    x = np.asarray(x)
    if not is_valid(perm, x.shape[0]):
        dup = find_duplicate(perm)
        raise ValueError(f"invalid permutation (duplicate {dup})" if dup is not None
                         else "invalid permutation")
    return x[np.asarray(perm)]


# ---------------------------------------------------------------- streaming

@dataclass
class StreamedSoftSort:
    """Forward results of the streamed pass plus what the backward pass needs.

    Only O(N * D) state is retained; P_soft rows are recomputed in backward.
    """

    w: np.ndarray
    tau: float
    x: np.ndarray
    idx: np.ndarray
    s: np.ndarray
    row_sums: np.ndarray   # unnormalized softmax denominators
    y: np.ndarray          # P_soft @ x
    colsum: np.ndarray     # column sums of P_soft
    block: int


def softsort_forward_streamed(w, tau: float, x, block: int = DEFAULT_BLOCK) -> StreamedSoftSort:
    """Compute ``P_soft @ x`` and the column sums of ``P_soft`` one row block at a time.

    One ``block x N`` buffer is live at any time.  The row maximum of
    ``-|s_i - w_j| / tau`` is exactly 0 (``s_i`` is one of the ``w_j``), so no
    shift is needed before ``exp``.
    """
    w = as_vector(w, "w")
    tau = _check_tau(tau)
    x = as_matrix(x, "x")
    if block < 1:
        raise ValueError("block must be >= 1")
    n = w.size
    if x.shape[0] != n:
        raise ValueError(f"x has {x.shape[0]} rows, expected {n}")
    idx, s = sort_weights(w)
    scale = -1.0 / tau
    y = np.empty_like(x)
    colsum = np.zeros(n)
    row_sums = np.empty(n)
    buf = np.empty((min(block, n), n))
    for a in range(0, n, block):
        b = min(a + block, n)
        e = buf[: b - a]
        np.subtract(s[a:b, None], w[None, :], out=e)
        np.abs(e, out=e)
        e *= scale
        np.exp(e, out=e)
        tot = e.sum(axis=1, keepdims=True)
        row_sums[a:b] = tot[:, 0]
        e /= tot
        np.matmul(e, x, out=y[a:b])
        colsum += e.sum(axis=0)
    return StreamedSoftSort(w, tau, x, idx, s, row_sums, y, colsum, block)


def softsort_backward_streamed(fwd: StreamedSoftSort, grad_y: np.ndarray,
                               grad_colsum: np.ndarray | None = None) -> np.ndarray:
    """Gradient w.r.t. ``w`` given gradients w.r.t. ``y`` and the column sums.

    Uses two half-block buffers so the transient footprint matches the forward
    pass.  With ``E`` the unnormalized rows, ``M = sign(s_i - w_j) * E`` and
    ``G = grad_y @ x.T + grad_colsum``, all row and column reductions of
    ``P * (G - r) * sign`` collapse into thin products with ``M``.
    """
    w, x, s, tau = fwd.w, fwd.x, fwd.s, fwd.tau
    n, d = x.shape
    dc = np.zeros(n) if grad_colsum is None else np.asarray(grad_colsum, dtype=DTYPE)
    grad_y = np.asarray(grad_y, dtype=DTYPE)
    inv_tau = 1.0 / tau
    half = max(1, (fwd.block + 1) // 2)
    rows = min(half, n)
    buf_m = np.empty((rows, n))
    buf_e = np.empty((rows, n))
    right = np.empty((n, d + 2))
    right[:, :d] = x
    right[:, d] = dc
    right[:, d + 1] = 1.0
    grad_s = np.empty(n)
    grad_w = np.zeros(n)
    for a in range(0, n, half):
        b = min(a + half, n)
        m = buf_m[: b - a]
        e = buf_e[: b - a]
        np.subtract(s[a:b, None], w[None, :], out=m)
        np.abs(m, out=e)
        e *= -inv_tau
        np.exp(e, out=e)
        inv_tot = 1.0 / fwd.row_sums[a:b]
        gy = grad_y[a:b]
        # r_i = sum_j P_ij G_ij
        r = np.einsum("ij,ij->i", fwd.y[a:b], gy) + (e @ dc) * inv_tot
        np.sign(m, out=m)
        m *= e
        mr = m @ right
        grad_s[a:b] = -inv_tau * inv_tot * (
            np.einsum("ij,ij->i", gy, mr[:, :d]) + mr[:, d] - r * mr[:, d + 1])
        left = np.empty((b - a, d + 2))
        left[:, :d] = gy * inv_tot[:, None]
        left[:, d] = inv_tot
        left[:, d + 1] = r * inv_tot
        ml = m.T @ left
        grad_w += inv_tau * (np.einsum("ij,ij->i", x, ml[:, :d]) + dc * ml[:, d] - ml[:, d + 1])
    grad_w[fwd.idx] += grad_s
    return grad_w


def apply_soft_rowwise(w, tau: float, x, block: int = DEFAULT_BLOCK) -> np.ndarray:
    """``P_soft @ x`` without materializing ``P_soft``."""
    return softsort_forward_streamed(w, tau, x, block).y
