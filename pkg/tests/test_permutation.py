import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shufflesort.numkernel import grad_check
from shufflesort.objective import global_std
from shufflesort.permutation import (apply_hard, apply_soft_rowwise, ascending_weights,
                                     find_duplicate, harden, invert, is_valid, softsort,
                                     softsort_backward, to_matrix)


def test_ascending_integers_harden_to_identity():
    for tau in (1e-3, 1.0, 100.0):
        np.testing.assert_array_equal(harden(softsort([0.0, 1.0, 2.0], tau)), [0, 1, 2])


def test_small_example_matches_argsort():
    w = np.array([0.2, 0.9, 0.5])
    perm = harden(softsort(w, 0.01))
    np.testing.assert_array_equal(perm, [0, 2, 1])
    np.testing.assert_array_equal(perm, np.argsort(w, kind="stable"))


def test_single_element():
    np.testing.assert_array_equal(softsort([0.3], 7.0), [[1.0]])


def test_softsort_equal_weights_stable():
    # tied weights keep their original order after hardening
    p = softsort([0.5, 0.5, 0.1], 1e-3)
    assert p.shape == (3, 3)
    assert harden(p)[0] == 2


def test_harden_exact_permutation():
    perm = np.array([2, 0, 3, 1])
    np.testing.assert_array_equal(harden(to_matrix(perm)), perm)


def test_harden_duplicate_argmax():
    perm = harden([[0.6, 0.4], [0.7, 0.3]])
    np.testing.assert_array_equal(perm, [0, 0])
    assert not is_valid(perm)
    assert find_duplicate(perm) == 0


def test_harden_block_independent(rng):
    p = rng.random((37, 37))
    ref = np.argmax(p, axis=1)
    for block in (1, 5, 37, 100):
        np.testing.assert_array_equal(harden(p, block), ref)


def test_is_valid_examples():
    assert is_valid([2, 0, 1])
    assert not is_valid([0, 0, 1])
    assert find_duplicate([0, 0, 1]) == 0
    assert not is_valid([0, 3, 1])
    assert find_duplicate([2, 0, 1]) is None


@given(st.integers(1, 200), st.integers(0, 2**31))
def test_random_shuffles_valid(n, seed):
    assert is_valid(np.random.default_rng(seed).permutation(n))


@given(st.integers(2, 40), st.integers(0, 2**31))
def test_sharp_softsort_equals_argsort(n, seed):
    rng = np.random.default_rng(seed)
    # distinct weights on a 1e-2 lattice, so the minimum gap is at least 1e-2
    w = rng.choice(1000, size=n, replace=False) / 100.0
    np.testing.assert_array_equal(harden(softsort(w, 1e-3 * 1e-2)), np.argsort(w))


@given(st.integers(1, 30), st.floats(1e-3, 10), st.integers(0, 2**31))
def test_rows_stochastic(n, tau, seed):
    w = np.random.default_rng(seed).random(n)
    np.testing.assert_allclose(softsort(w, tau).sum(axis=1), 1.0, atol=1e-9)


@given(st.integers(1, 64), st.floats(1e-4, 10))
def test_ascending_init_identity(n, tau):
    np.testing.assert_array_equal(harden(softsort(ascending_weights(n), tau)), np.arange(n))


def test_streamed_equals_materialized_full_block(rng):
    w, x = rng.random(20), rng.random((20, 3))
    np.testing.assert_array_equal(apply_soft_rowwise(w, 0.05, x, block=20), softsort(w, 0.05) @ x)


def test_streamed_block7(rng):
    w, x = rng.random(64), rng.random((64, 3))
    diff = np.abs(apply_soft_rowwise(w, 0.02, x, block=7) - softsort(w, 0.02) @ x).max()
    assert diff < 1e-10


@given(st.integers(2, 24), st.integers(0, 2**31))
def test_streamed_all_blocks(n, seed):
    rng = np.random.default_rng(seed)
    w, x = rng.random(n), rng.random((n, 2))
    ref = softsort(w, 0.1) @ x
    for block in range(1, n + 1):
        assert np.abs(apply_soft_rowwise(w, 0.1, x, block) - ref).max() < 1e-10


def test_constant_rows_unchanged(rng):
    x = np.tile([0.1, 0.7, 0.3], (16, 1))
    np.testing.assert_allclose(apply_soft_rowwise(rng.random(16), 0.3, x, 5), x, atol=1e-15)


def test_apply_hard_examples():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(apply_hard([0, 1], x), x)
    np.testing.assert_array_equal(apply_hard([1, 0], x), x[::-1])
    with pytest.raises(ValueError):
        apply_hard([0, 0], x)


@given(st.integers(1, 50), st.integers(0, 2**31))
def test_apply_hard_inverse(n, seed):
    rng = np.random.default_rng(seed)
    x, perm = rng.random((n, 3)), rng.permutation(n)
    np.testing.assert_array_equal(apply_hard(invert(perm), apply_hard(perm, x)), x)


@given(st.integers(1, 50), st.integers(0, 2**31))
def test_hard_permutation_keeps_std(n, seed):
    rng = np.random.default_rng(seed)
    x, perm = rng.random((n, 3)), rng.permutation(n)
    assert global_std(apply_hard(perm, x)) == global_std(x)


def test_softsort_gradient(rng):
    c = rng.normal(size=(6, 6))
    w0 = np.sort(rng.random(6))

    def f(w):
        p = softsort(w, 0.3)
        return float((p * c).sum()), softsort_backward(w, 0.3, p, c)

    assert grad_check(f, w0) < 1e-4
