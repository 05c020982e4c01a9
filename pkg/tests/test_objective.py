import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shufflesort.numkernel import grad_check
from shufflesort.objective import (GridShape, mean_pairwise_distance, neighbor_pairs,
                                   neighborhood_loss, neighborhood_loss_grad, quality,
                                   soft_matrix_loss, stochastic_constraint_loss, std_loss,
                                   total_loss)
from shufflesort.permutation import ascending_weights, softsort, to_matrix


def loop_neighborhood(y, g, norm):
    """Explicit 4-neighbour enumeration on a row-major grid."""
    cells = y.reshape(g.n_y, g.n_x, -1)
    dists = []
    for r, c in itertools.product(range(g.n_y), range(g.n_x)):
        if c + 1 < g.n_x:
            dists.append(np.linalg.norm(cells[r, c] - cells[r, c + 1]))
        if r + 1 < g.n_y:
            dists.append(np.linalg.norm(cells[r, c] - cells[r + 1, c]))
    return float(np.mean(dists)) / norm, len(dists)


def test_grid_parse_and_errors():
    assert GridShape.parse("32x32") == GridShape(32, 32)
    assert GridShape.parse("2x5").n == 10
    assert str(GridShape(3, 4)) == "3x4"
    assert GridShape(3, 4).transposed() == GridShape(4, 3)
    for bad in ("3", "ax2", "0x3", "-1x2"):
        with pytest.raises(ValueError):
            GridShape.parse(bad)


def test_identical_rows_zero():
    assert neighborhood_loss(np.ones((6, 2)), GridShape(2, 3)) == 0.0


def test_single_pair_distance():
    assert neighborhood_loss(np.array([[0.0, 0.0], [3.0, 4.0]]), GridShape(1, 2)) == 5.0


def test_neighborhood_3x3_loop(rng):
    y, g = rng.random((9, 2)), GridShape(3, 3)
    ref, count = loop_neighborhood(y, g, 0.7)
    assert count == 12 == len(neighbor_pairs(g)[0])
    assert neighborhood_loss(y, g, 0.7) == pytest.approx(ref, rel=1e-14)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**31))
def test_neighborhood_any_grid(ny, nx, seed):
    g = GridShape(ny, nx)
    if g.n < 2:
        return
    y = np.random.default_rng(seed).random((g.n, 3))
    assert neighborhood_loss(y, g) == pytest.approx(loop_neighborhood(y, g, 1.0)[0], rel=1e-13)


def test_constraint_examples(rng):
    assert stochastic_constraint_loss(to_matrix(rng.permutation(7))) == 0.0
    assert stochastic_constraint_loss([[1, 0], [1, 0]]) == 1.0
    p = rng.random((6, 6))
    p /= p.sum(axis=1, keepdims=True)
    cols = [sum(p[i, j] for i in range(6)) for j in range(6)]
    assert stochastic_constraint_loss(p) == pytest.approx(sum((c - 1) ** 2 for c in cols) / 6,
                                                          rel=1e-13)


def test_std_loss_examples(rng):
    x = rng.random((10, 3))
    assert std_loss(x, x) == 0.0
    assert std_loss(x, x[rng.permutation(10)]) == 0.0
    assert std_loss(x, np.full_like(x, x.mean())) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        std_loss(np.ones((3, 2)), x[:3, :2])


@given(st.integers(2, 40), st.integers(0, 2**31))
def test_regularizers_vanish_on_hard_permutations(n, seed):
    rng = np.random.default_rng(seed)
    x, perm = rng.random((n, 3)), rng.permutation(n)
    p = to_matrix(perm)
    assert stochastic_constraint_loss(p) == 0.0
    assert std_loss(x, p @ x) == 0.0


def test_total_at_sharp_ascending_init(rng):
    x, g = rng.random((16, 3)), GridShape(4, 4)
    br, _ = total_loss(ascending_weights(16), x, g, 1e-4, norm=1.0)
    assert br.l_s == pytest.approx(0.0, abs=1e-20)
    assert br.l_sigma == 0.0
    assert br.total == br.l_nbr


def test_total_without_regularizers(rng):
    x, g = rng.random((9, 3)), GridShape(3, 3)
    br, _ = total_loss(rng.random(9), x, g, 0.2, lambda_s=0, lambda_sigma=0)
    assert br.total == br.l_nbr


def test_total_is_sum_of_term_oracles(rng):
    x, g, w, tau = rng.random((16, 3)), GridShape(4, 4), rng.random(16), 0.05
    norm = mean_pairwise_distance(x)
    br, _ = total_loss(w, x, g, tau, norm=norm, materialize=True)
    p = softsort(w, tau)
    y = p @ x
    ref = (loop_neighborhood(y, g, norm)[0] + stochastic_constraint_loss(p) + 2 * std_loss(x, y))
    assert br.total == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("block", [1, 3, 8, 16, 40])
def test_streamed_total_matches_materialized(rng, block):
    x, g, w = rng.random((16, 3)), GridShape(4, 4), rng.random(16)
    a, ga = total_loss(w, x, g, 0.1, block=block)
    b, gb = total_loss(w, x, g, 0.1, materialize=True)
    assert abs(a.total - b.total) < 1e-10
    assert np.abs(ga - gb).max() < 1e-10


def test_loss_gradients_finite_difference(rng):
    x, g = rng.random((8, 3)), GridShape(2, 4)
    assert grad_check(lambda y: neighborhood_loss_grad(y.reshape(8, 3), g), rng.random(24)) < 1e-4

    def total(w):
        br, gw = total_loss(w, x, g, 0.2)
        return br.total, gw

    assert grad_check(total, rng.random(8)) < 1e-4

    def via_matrix(flat):
        br, dp = soft_matrix_loss(flat.reshape(8, 8), x, neighbor_pairs(g), 1.0)
        return br.total, dp

    p = rng.random((8, 8))
    assert grad_check(via_matrix, p / p.sum(axis=1, keepdims=True)) < 1e-4


def test_quality_identical_vectors_is_error():
    with pytest.raises(ValueError, match="identical"):
        quality(np.ones((4, 3)), np.arange(4), GridShape(2, 2))


def test_quality_random_assignment_near_zero():
    g = GridShape.square(1024)
    x = np.random.default_rng(3).random((1024, 3))
    qs = [quality(x, np.random.default_rng(s).permutation(1024), g) for s in range(20)]
    assert abs(np.mean(qs)) < 0.05


def test_sampled_pairwise_close_to_exact(rng):
    x = rng.random((400, 3))
    exact = mean_pairwise_distance(x, exact=True)
    assert abs(mean_pairwise_distance(x, exact=False) - exact) / exact < 0.02


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_quality_translation_and_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    g = GridShape(4, 5)
    x, perm = rng.random((20, 3)), rng.permutation(20)
    q = quality(x, perm, g)
    assert quality(c * x, perm, g) == pytest.approx(q, abs=1e-12)
    assert quality(x + 7.5, perm, g) == pytest.approx(q, abs=1e-12)


def test_neighborhood_is_order_sensitive(rng):
    x, g = rng.random((6, 3)), GridShape(2, 3)
    values = {round(neighborhood_loss(x[list(p)], g), 12) for p in itertools.permutations(range(6))}
    assert len(values) > 1
