import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarforge.polarimetry import (PolarParams, Stokes, angular_distance, average_image,
                                    compute_params, compute_stokes, consistency_project,
                                    identity_residual, synthesize_from_params)


def pixel_stack(i0, i45, i90, i135):
    return np.array([i0, i45, i90, i135], dtype=float).reshape(4, 1, 1, 1) * np.ones((4, 3, 1, 1))


def scalar_params(dop, aop, shape=(3, 1, 1)):
    return PolarParams(dop=np.full(shape, float(dop)), aop=np.full(shape, float(aop)))


def test_stokes_examples():
    st_ = compute_stokes(pixel_stack(0, 0.5, 1, 0.5))
    np.testing.assert_allclose([st_.s0[0, 0, 0], st_.s1[0, 0, 0], st_.s2[0, 0, 0]], [1, 1, 0])
    st_ = compute_stokes(pixel_stack(0.5, 0.5, 0.5, 0.5))
    np.testing.assert_allclose([st_.s0[0, 0, 0], st_.s1[0, 0, 0], st_.s2[0, 0, 0]], [1, 0, 0])


def test_stokes_s0_forms_agree_on_consistent_stacks():
    rng = np.random.default_rng(3)
    a, c = rng.random((2, 3, 8, 8))
    b = rng.random((3, 8, 8)) * (a + c)
    stack = np.stack([a, b, c, a + c - b])
    s0 = compute_stokes(stack).s0
    np.testing.assert_allclose(s0, a + c, atol=1e-12)
    np.testing.assert_allclose(s0, 2 * average_image(stack), atol=1e-12)


@pytest.mark.parametrize("s, expected", [
    ((1, 1, 0), (1, 0)),
    ((1, 0, 1), (1, np.pi / 4)),
    ((1, 0, 0), (0, 0)),
])
def test_params_examples(s, expected):
    stokes = Stokes(*(np.full((3, 1, 1), float(v)) for v in s))
    p = compute_params(stokes)
    assert p.dop[0, 0, 0] == pytest.approx(expected[0])
    assert p.aop[0, 0, 0] == pytest.approx(expected[1])


def test_params_degenerate_intensity():
    stokes = Stokes(np.zeros((3, 1, 1)), np.full((3, 1, 1), 1e-3), np.zeros((3, 1, 1)))
    p = compute_params(stokes)
    assert np.all(p.dop == 1.0)
    assert np.all(np.isfinite(p.aop))


def test_synthesis_examples():
    out = synthesize_from_params(np.ones((3, 1, 1)), scalar_params(1, 0))
    np.testing.assert_allclose(out[:, 0, 0, 0], [0, 0.5, 1, 0.5], atol=1e-12)
    out = synthesize_from_params(np.ones((3, 1, 1)), scalar_params(0, 2.1))
    np.testing.assert_allclose(out, 0.5)
    out = synthesize_from_params(np.ones((3, 1, 1)), scalar_params(1, np.pi / 4))
    np.testing.assert_allclose(out[:, 0, 0, 0], [0.5, 0, 0.5, 1], atol=1e-12)
    p = compute_params(compute_stokes(out))
    assert p.dop[0, 0, 0] == pytest.approx(1.0)
    assert p.aop[0, 0, 0] == pytest.approx(np.pi / 4)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(1e-3, 1.0), st.floats(0.0, np.pi, exclude_max=True))
def test_round_trip(s0, p, theta):
    stack = synthesize_from_params(np.full((3, 1, 1), s0), scalar_params(p, theta))
    stokes = compute_stokes(stack)
    assert np.all(np.hypot(stokes.s1, stokes.s2) <= stokes.s0 + 1e-6)
    assert np.all(stack >= 0)
    if s0 < 1e-3:
        return
    out = compute_params(stokes)
    np.testing.assert_allclose(out.dop, p, atol=1e-5)
    assert np.all(angular_distance(out.aop, theta) <= 1e-5)


def test_zero_dop_gives_convention_angle():
    stack = synthesize_from_params(np.full((3, 1, 1), 0.8), scalar_params(0.0, 1.0))
    assert np.all(compute_params(compute_stokes(stack)).aop == 0.0)


def test_aop_wraparound():
    s0 = np.full((3, 2, 2), 0.7)
    a = synthesize_from_params(s0, scalar_params(0.6, np.pi - 1e-4, (3, 2, 2)))
    b = synthesize_from_params(s0, scalar_params(0.6, 1e-4, (3, 2, 2)))
    assert np.max(np.abs(a - b)) <= 1e-3
    ta = compute_params(compute_stokes(a)).aop
    tb = compute_params(compute_stokes(b)).aop
    assert np.all((ta >= 0) & (ta < np.pi))
    assert np.max(angular_distance(ta, tb)) <= 2e-4


def test_projection_fixed_point():
    stack = synthesize_from_params(np.full((3, 4, 4), 0.6), scalar_params(0.3, 0.4, (3, 4, 4)))
    np.testing.assert_allclose(consistency_project(stack), stack, atol=1e-9)


def test_projection_hand_example():
    # d = (1 + 0 - 0 - 0) / 4 = 0.25 -> (0.75, 0.25, -0.25 -> 0, 0.25)
    out = consistency_project(pixel_stack(1, 0, 0, 0))
    np.testing.assert_allclose(out[:, 0, 0, 0], [0.75, 0.25, 0.0, 0.25])
    # clamping at I90 leaves a violation no larger than d
    assert identity_residual(out) == pytest.approx(0.25)


def test_projection_linearity():
    base = synthesize_from_params(np.full((3, 2, 2), 0.6), scalar_params(0.2, 1.0, (3, 2, 2)))
    eps = 1e-3
    bumped = base.copy()
    bumped[0] += 4 * eps
    moved = consistency_project(bumped) - base
    np.testing.assert_allclose(moved[0], 3 * eps, atol=1e-12)
    np.testing.assert_allclose(moved[1], eps, atol=1e-12)
    np.testing.assert_allclose(moved[2], -eps, atol=1e-12)
    np.testing.assert_allclose(moved[3], eps, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_is_minimal_and_idempotent(seed):
    rng = np.random.default_rng(seed)
    stack = 0.25 + 0.5 * rng.random((4, 3, 3, 3))  # far enough from 0 that no clamping occurs
    once = consistency_project(stack)
    assert identity_residual(once) <= 1e-6
    np.testing.assert_allclose(consistency_project(once), once, atol=1e-9)
    # any other consistent stack is at least as far away
    other = once + rng.normal(0, 0.01, size=(3, 3, 3)) * np.array([1, 1, -1, -1])[:, None, None, None][
        [0, 2, 1, 3]][:, :, :, :]
    other = consistency_project(other)
    assert np.sum((once - stack) ** 2) <= np.sum((other - stack) ** 2) + 1e-12


def test_average_image():
    stack = np.stack([np.full((3, 2, 2), v) for v in (0.2, 0.4, 0.6, 0.8)])
    np.testing.assert_allclose(average_image(stack), 0.5)
    img = np.random.default_rng(4).random((3, 2, 2))
    np.testing.assert_allclose(average_image(np.stack([img] * 4)), img)
    rnd = np.random.default_rng(5).random((4, 3, 5, 5))
    np.testing.assert_allclose(average_image(rnd), compute_stokes(rnd).s0 / 2)


def test_rounding_level_polarization_has_no_angle():
    stokes = Stokes(np.full((3, 1, 1), 0.6), np.full((3, 1, 1), 3e-17), np.full((3, 1, 1), -1e-17))
    assert np.all(compute_params(stokes).aop == 0.0)
    stokes = Stokes(np.full((3, 1, 1), 0.6), np.full((3, 1, 1), 1e-9), np.zeros((3, 1, 1)))
    assert np.all(compute_params(stokes).aop == 0.0)
    stokes = Stokes(np.full((3, 1, 1), 0.6), np.zeros((3, 1, 1)), np.full((3, 1, 1), -1e-9))
    assert np.all(compute_params(stokes).aop == pytest.approx(3 * np.pi / 4))
