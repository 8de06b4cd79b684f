import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarforge.core import downsample_area, gradient_l1, resample_bilinear


def test_constant_plane_resamples_to_constant():
    out = resample_bilinear(np.full((5, 7), 0.7), 13, 21)
    assert out.shape == (13, 21)
    np.testing.assert_allclose(out, 0.7, atol=1e-15)


def test_two_pixel_upscale_hand_values():
    # target rows sit at source coords -0.25, 0.25, 0.75, 1.25 (clamped at the ends)
    out = resample_bilinear(np.array([[0.0], [1.0]]), 4, 1)
    np.testing.assert_allclose(out[:, 0], [0.0, 0.25, 0.75, 1.0])


def test_identity_resize_is_bit_identical():
    a = np.random.default_rng(0).random((6, 9))
    out = resample_bilinear(a, 6, 9)
    assert np.array_equal(out, a)
    assert out is not a


def test_resample_errors():
    with pytest.raises(ValueError, match="empty plane"):
        resample_bilinear(np.zeros((0, 3)), 2, 2)
    with pytest.raises(ValueError):
        resample_bilinear(np.zeros((2, 2)), 0, 2)


def test_resample_acts_on_trailing_axes():
    a = np.random.default_rng(1).random((4, 3, 5, 5))
    out = resample_bilinear(a, 10, 10)
    assert out.shape == (4, 3, 10, 10)
    np.testing.assert_array_equal(out[2, 1], resample_bilinear(a[2, 1], 10, 10))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1),
       st.integers(3, 12), st.integers(3, 12), st.sampled_from([2, 3, 4]))
def test_resample_exact_on_affine_interior(a, b, c, h, w, k):
    yy, xx = np.mgrid[0:h, 0:w]
    src = a * xx + b * yy + c
    out = resample_bilinear(src, k * h, k * w)
    ty = (np.arange(k * h) + 0.5) / k - 0.5
    tx = (np.arange(k * w) + 0.5) / k - 0.5
    expected = a * tx[None, :] + b * ty[:, None] + c
    # interior = target pixels whose source coordinate needs no clamping
    iy = (ty >= 0) & (ty <= h - 1)
    ix = (tx >= 0) & (tx <= w - 1)
    np.testing.assert_allclose(out[np.ix_(iy, ix)], expected[np.ix_(iy, ix)], atol=1e-6)


def test_downsample_block_means():
    np.testing.assert_allclose(downsample_area(np.array([[0.0, 1.0], [1.0, 0.0]]), 2), [[0.5]])
    ramp = np.arange(16, dtype=float).reshape(4, 4)
    # blocks {0,1,4,5}, {2,3,6,7}, {8,9,12,13}, {10,11,14,15}
    np.testing.assert_allclose(downsample_area(ramp, 2), [[2.5, 4.5], [10.5, 12.5]])
    np.testing.assert_allclose(downsample_area(np.full((6, 6), 0.3), 3), 0.3)


def test_downsample_rejects_non_divisible():
    with pytest.raises(ValueError, match="dimension not divisible by factor"):
        downsample_area(np.zeros((5, 4)), 2)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.sampled_from([2, 3, 4]), st.integers(0, 2**32 - 1))
def test_downsample_preserves_mean(bh, bw, k, seed):
    a = np.random.default_rng(seed).random((bh * k, bw * k))
    assert abs(downsample_area(a, k).mean() - a.mean()) <= 1e-6


def test_down_then_up_constant():
    c = np.full((8, 12), 0.42)
    np.testing.assert_allclose(resample_bilinear(downsample_area(c, 2), 8, 12), 0.42, atol=1e-15)


def test_gradient_l1_examples():
    a = np.random.default_rng(2).random((5, 5))
    assert gradient_l1(a, a) == 0.0
    assert gradient_l1(np.full((4, 4), 0.2), np.full((4, 4), 0.9)) == pytest.approx(0.0, abs=1e-15)
    # x-ramp with step 0.1: six x-pairs of |0.1|, six y-pairs of 0
    ramp = np.tile([0.0, 0.1, 0.2], (3, 1))
    assert gradient_l1(ramp, np.zeros((3, 3))) == pytest.approx(0.1)


def test_gradient_l1_dim_mismatch():
    with pytest.raises(ValueError):
        gradient_l1(np.zeros((3, 3)), np.zeros((3, 4)))
