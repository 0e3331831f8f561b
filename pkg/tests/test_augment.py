import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from tsmoco.augment import MaskSpec, mask_length, window_mask, window_mask_batch


def zero_runs(rows_zero: np.ndarray) -> list[tuple[int, int]]:
    runs, start = [], None
    for i, z in enumerate(rows_zero):
        if z and start is None:
            start = i
        if not z and start is not None:
            runs.append((start, i - start))
            start = None
    if start is not None:
        runs.append((start, len(rows_zero) - start))
    return runs


def nonzero_signal(T, C, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(T, C))
    x[x == 0] = 1.0
    return x


def test_p_zero_is_identity():
    x = nonzero_signal(12, 3, 0)
    out = window_mask(x, 0.0, np.random.default_rng(0))
    np.testing.assert_array_equal(out, x)
    assert out is not x


def test_p_one_zeros_everything():
    x = nonzero_signal(12, 3, 0)
    np.testing.assert_array_equal(window_mask(x, 1.0, np.random.default_rng(0)), np.zeros((12, 3)))


def test_half_of_hundred_is_one_run_of_fifty():
    x = nonzero_signal(100, 2, 1)
    out = window_mask(x, 0.5, np.random.default_rng(3))
    rows_zero = np.all(out == 0, axis=1)
    assert rows_zero.sum() == 50
    assert len(zero_runs(rows_zero)) == 1


def test_input_not_mutated():
    x = nonzero_signal(20, 2, 2)
    before = x.copy()
    window_mask(x, 0.5, np.random.default_rng(0))
    np.testing.assert_array_equal(x, before)


def test_round_half_up():
    assert mask_length(10, 0.25) == 3  # 2.5 -> 3
    assert mask_length(10, 0.75) == 8  # 7.5 -> 8
    assert mask_length(50, 0.25) == 13  # 12.5 -> 13


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), T=st.sampled_from([1, 7, 10, 50, 128]),
       p=st.floats(0.0, 1.0))
def test_single_contiguous_run_property(seed, T, p):
    x = nonzero_signal(T, 3, seed % 1000)
    out = window_mask(x, p, np.random.default_rng(seed))
    rows_zero = np.all(out == 0, axis=1)
    w = mask_length(T, p)
    runs = zero_runs(rows_zero)
    assert rows_zero.sum() == w
    assert len(runs) == (1 if w else 0)
    np.testing.assert_array_equal(out[~rows_zero], x[~rows_zero])


def test_start_index_is_uniform():
    T, p = 20, 0.5
    w = mask_length(T, p)
    x = np.ones((T, 1))
    rng = np.random.default_rng(123)
    starts = [int(np.argmax(window_mask(x, p, rng)[:, 0] == 0)) for _ in range(10_000)]
    counts = np.bincount(starts, minlength=T - w + 1)
    assert counts.size == T - w + 1
    assert stats.chisquare(counts).pvalue > 0.001


def test_batch_masks_are_independent_per_window():
    x = np.ones((64, 30, 2))
    out = window_mask_batch(x, 0.5, np.random.default_rng(0))
    starts = {int(np.argmax(out[b, :, 0] == 0)) for b in range(64)}
    assert len(starts) > 1
    assert np.all((out == 0).all(axis=2).sum(axis=1) == 15)


def test_maskspec_validation():
    with pytest.raises(ValueError):
        MaskSpec(1.5)
    spec = MaskSpec(0.25, seed=4)
    a = window_mask(np.ones((8, 1)), spec.p_M, spec.generator())
    b = window_mask(np.ones((8, 1)), spec.p_M, spec.generator())
    np.testing.assert_array_equal(a, b)
