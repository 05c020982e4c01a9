"""Dense float64 kernel: softmax, distance matrices, backward rules, Adam, gradient checks.

Every differentiable primitive comes as a forward function plus a ``*_backward``
function implementing its closed-form vector-Jacobian product.  ``GradTape``
chains these rules in reverse order for composite losses.
"""
from __future__ import annotations

import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

DTYPE = np.float64


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Return ``m`` as a 2-D float64 array, rejecting non-finite entries."""
    a = np.asarray(m, dtype=DTYPE)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        row = int(np.argwhere(~np.isfinite(a))[0, 0])
        raise ValueError(f"{name} has a non-finite entry in row {row}")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=DTYPE)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has a non-finite entry at index {int(np.argmax(~np.isfinite(a)))}")
    return a


# ---------------------------------------------------------------- softmax

def softmax_rows(m) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction.

    Raises ``ValueError`` naming the first row holding a NaN or infinity.
    """
    z = np.array(m, dtype=DTYPE, copy=True, ndmin=2)
    bad = ~np.all(np.isfinite(z), axis=1)
    if bad.any():
        raise ValueError(f"softmax_rows: non-finite input in row {int(np.argmax(bad))}")
    z -= z.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def softmax_rows_backward(p: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    """VJP of ``softmax_rows`` given its output ``p``."""
    inner = np.einsum("ij,ij->i", p, grad_out)
    return p * (grad_out - inner[:, None])


def logsumexp_rows(m: np.ndarray) -> np.ndarray:
    mx = m.max(axis=1, keepdims=True)
    return (mx + np.log(np.exp(m - mx).sum(axis=1, keepdims=True)))[:, 0]


# ---------------------------------------------------------------- distances

def pairwise_abs_distance(a, b) -> np.ndarray:
    """``out[i, j] = |a[i] - b[j]|``."""
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    return np.abs(a[:, None] - b[None, :])


def pairwise_abs_distance_backward(a, b, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # subgradient sign(0) = 0 keeps the a == b kink consistent for both arguments
    sgn = np.sign(np.asarray(a, dtype=DTYPE)[:, None] - np.asarray(b, dtype=DTYPE)[None, :])
    g = sgn * grad_out
    return g.sum(axis=1), -g.sum(axis=0)


def matmul_backward(a: np.ndarray, b: np.ndarray, grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return grad_out @ b.T, a.T @ grad_out


def euclidean_rows(diff: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


# ---------------------------------------------------------------- tape

@dataclass
class _Op:
    name: str
    inputs: tuple[str, ...]
    outputs: dict[str, np.ndarray | float]
    backward: Callable


class GradTape:
    """Ordered record of primitive ops for reverse-mode accumulation.

    Values are addressed by string keys.  Each recorded op owns a backward
    callable mapping the gradients of its outputs (in ``outputs`` order) to a
    tuple of gradients for its ``inputs``.  Outputs nobody consumed get a zero
    gradient.
    """

    def __init__(self) -> None:
        self._ops: list[_Op] = []
        self.grads: dict[str, np.ndarray | float] = {}
        self.visited: list[str] = []

    def record(self, name: str, inputs: Sequence[str], outputs: dict, backward: Callable) -> None:
        self._ops.append(_Op(name, tuple(inputs), dict(outputs), backward))

    @property
    def names(self) -> list[str]:
        return [op.name for op in self._ops]

    def _accumulate(self, key: str, g) -> None:
        if key in self.grads:
            self.grads[key] = self.grads[key] + g
        else:
            self.grads[key] = g

    def backward(self, key: str, seed: float = 1.0) -> dict:
        self.grads = {key: seed}
        self.visited = []
        for op in reversed(self._ops):
            outs = [self.grads.get(k, np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0)
                    for k, v in op.outputs.items()]
            in_grads = op.backward(*outs)
            for k, g in zip(op.inputs, in_grads):
                self._accumulate(k, g)
            self.visited.append(op.name)
        return self.grads


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    shape: tuple[int, ...]
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.shape = tuple(self.shape)
        self.m = np.zeros(self.shape, dtype=DTYPE)
        self.v = np.zeros(self.shape, dtype=DTYPE)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam update; returns the new parameters."""
    params = np.asarray(params, dtype=DTYPE)
    grads = np.asarray(grads, dtype=DTYPE)
    if params.shape != state.shape or grads.shape != state.shape:
        raise ValueError(f"adam_step: shape mismatch params {params.shape}, grads {grads.shape}, "
                         f"state {state.shape}")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------- checks

def grad_check(f: Callable[[np.ndarray], tuple[float, np.ndarray]], x, h: float = 1e-5) -> float:
    """Max relative error between the analytic gradient and central differences.

    ``f`` returns ``(value, analytic_gradient)``.  Relative error per coordinate
    is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    x = np.array(x, dtype=DTYPE, copy=True)
    value, analytic = f(x)
    if not np.isfinite(value):
        raise ValueError("grad_check: f(x) is not finite")
    analytic = np.asarray(analytic, dtype=DTYPE).reshape(x.shape)
    flat = x.reshape(-1)
    numeric = np.empty(flat.size)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(x)[0]
        flat[k] = orig - h
        fm = f(x)[0]
        flat[k] = orig
        numeric[k] = (fp - fm) / (2.0 * h)
    err = np.abs(analytic.reshape(-1) - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0


@contextmanager
def track_peak_bytes() -> Iterator[dict]:
    """Allocation-accounting hook: records peak traced bytes inside the block.

    numpy reports its buffers to ``tracemalloc``, so the result counts every
    array allocated while the block runs.
    """
    out = {"peak": 0}
    started = not tracemalloc.is_tracing()
    if started:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base = tracemalloc.get_traced_memory()[0]
    try:
        yield out
    finally:
        out["peak"] = tracemalloc.get_traced_memory()[1] - base
        if started:
            tracemalloc.stop()
