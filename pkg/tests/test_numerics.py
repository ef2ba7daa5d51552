import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoctrl.numerics import (EulerAngles, RolloutAborted, derive_seed, gaussian_landscape,
                              gaussian_landscape_checked, linear_rk4_propagator, rk4_step,
                              rng_stream, rotation_zyx, unwrap_planar, unwrap_z, unwrap_z_checked)

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def test_rk4_zero_field_is_identity():
    out = rk4_step(lambda s: np.zeros_like(s), [1.0, 2.0], 0.05)
    assert out.tolist() == [1.0, 2.0]


def test_rk4_exponential():
    # one classical step reproduces the degree-4 Taylor polynomial of e^h
    h = 0.1
    out = rk4_step(lambda s: s, [1.0], h)
    assert abs(out[0] - (1 + h + h**2 / 2 + h**3 / 6 + h**4 / 24)) < 1e-15
    assert abs(out[0] - math.exp(h)) < h**5 / 120 * 1.02
    # halving the step shrinks the local error by about 2^5
    e1 = abs(out[0] - math.exp(h))
    e2 = abs(rk4_step(lambda s: s, [1.0], h / 2)[0] - math.exp(h / 2))
    assert 28 < e1 / e2 < 36


def test_rk4_rotation_quarter_turn():
    # x' = y, y' = -x from (1, 0) gives (cos t, -sin t)
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    s = np.array([1.0, 0.0])
    n = round((math.pi / 2) / 0.05)
    dt = (math.pi / 2) / n
    for _ in range(n):
        s = rk4_step(lambda v: A @ v, s, dt)
    assert np.allclose(s, [0.0, -1.0], atol=1e-5)


def test_rk4_rejects_bad_inputs():
    with pytest.raises(ValueError):
        rk4_step(lambda s: s, [1.0], 0.0)
    with pytest.raises(RolloutAborted):
        rk4_step(lambda s: s * np.inf, [1.0], 0.1)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_propagator_matches_rk4_step(k, seed):
    rng = np.random.default_rng(seed)
    B = rng.uniform(-1, 1, (2 * k, 2 * k))
    A = B - B.T
    s = rng.uniform(-1, 1, 2 * k)
    M = linear_rk4_propagator(A, 0.05)
    assert np.allclose(M @ s, rk4_step(lambda v: A @ v, s, 0.05), atol=1e-12, rtol=0)


@given(st.floats(-1, 1), angles)
def test_rk4_conserves_norm_single_oscillator(w, phase):
    A = np.array([[0.0, -w], [w, 0.0]])
    s = np.array([math.cos(phase), math.sin(phase)])
    out = rk4_step(lambda v: A @ v, s, 0.05)
    assert abs(np.linalg.norm(out) - 1.0) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_rk4_norm_drift_matches_stability_polynomial(k, seed):
    # for eigenvalue i*y the RK4 gain is sqrt(1 - (hy)^6/72 + (hy)^8/576)
    rng = np.random.default_rng(seed)
    B = rng.uniform(-0.5, 0.5, (2 * k, 2 * k))
    A = B - B.T
    s = rng.uniform(-1, 1, 2 * k)
    out = rk4_step(lambda v: A @ v, s, 0.05)
    y = 0.05 * np.max(np.abs(np.linalg.eigvals(A)))
    bound = 1 - math.sqrt(1 - y**6 / 72 + y**8 / 576)
    ratio = np.linalg.norm(out) / np.linalg.norm(s)
    assert 1 - bound - 1e-13 <= ratio <= 1 + 1e-13


def test_rotation_matrix_is_orthonormal():
    R = rotation_zyx(EulerAngles(0.3, -0.7, 1.9))
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-14)
    assert math.isclose(np.linalg.det(R), 1.0, abs_tol=1e-14)


def test_unwrap_identity_and_small_turn():
    a = EulerAngles(0.1, 0.2, 0.3)
    assert unwrap_z(a, a) == 0.0
    assert abs(unwrap_z(EulerAngles(phi_z=0.3), EulerAngles(phi_z=0.0)) - 0.3) < 1e-9


def test_unwrap_across_branch_cut():
    delta = unwrap_z(EulerAngles(phi_z=-3.1), EulerAngles(phi_z=3.1))
    assert abs(delta - (2 * math.pi - 6.2)) < 1e-6


def test_unwrap_degenerate_projection_is_flagged():
    upright = EulerAngles(phi_y=math.pi / 2)
    delta, flag = unwrap_z_checked(upright, EulerAngles())
    assert delta == 0.0 and flag


@given(angles, angles, angles, angles)
def test_unwrap_range(x, y, z0, z1):
    delta = unwrap_z(EulerAngles(x, y, z1), EulerAngles(x, y, z0))
    assert -math.pi < delta <= math.pi


@given(st.integers(-5, 5))
def test_unwrap_counts_full_turns(turns):
    t = np.arange(0, 60.0 + 1e-9, 0.1)
    heading = 2 * math.pi * turns * t / 60.0
    wrapped = np.angle(np.exp(1j * heading))
    assert abs(unwrap_planar(wrapped).sum() - 2 * math.pi * turns) < 1e-6


@given(angles, angles)
def test_unwrap_planar_agrees_with_euler_version(z0, z1):
    assert math.isclose(unwrap_planar([z0, z1])[0],
                        unwrap_z(EulerAngles(phi_z=z1), EulerAngles(phi_z=z0)), abs_tol=1e-12)


def test_landscape_examples():
    assert gaussian_landscape([(5.0, -2.0, 3.0)], (0.4, 0.9)) == 3.0
    pts = [(0.0, 0.0, 1.0), (1.0, 0.0, 3.0)]
    assert math.isclose(gaussian_landscape(pts, (0.5, 0.0)), 2.0, rel_tol=1e-12)
    r = math.exp(-50.0)
    assert math.isclose(gaussian_landscape(pts, (0.0, 0.0), 0.1), 1 + 2 * r / (1 + r), rel_tol=1e-15)


def test_landscape_far_query_falls_back_to_nearest():
    value, flag = gaussian_landscape_checked([(0.0, 0.0, 1.0), (1.0, 0.0, 3.0)], (100.0, 0.0))
    assert value == 3.0 and flag


@settings(max_examples=100)
@given(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2), st.floats(-10, 10)), min_size=1, max_size=8),
       st.floats(-3, 3), st.floats(-3, 3))
def test_landscape_stays_within_value_range(pts, qx, qy):
    v = gaussian_landscape(pts, (qx, qy))
    values = [p[2] for p in pts]
    assert min(values) - 1e-9 <= v <= max(values) + 1e-9


def test_rng_streams():
    a = rng_stream(42, "spawn").random(100)
    assert np.array_equal(a, rng_stream(42, "spawn").random(100))
    assert not np.any(a == rng_stream(42, "weights").random(100))
    assert not np.array_equal(a, rng_stream(43, "spawn").random(100))
    assert derive_seed(42, "x") == derive_seed(42, "x") != derive_seed(42, "y")
