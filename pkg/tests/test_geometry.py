"""Balls, projections, and the two half squared distances."""

import numpy as np
import pytest

from diskloc import Ball, grad_phi_ball, phi_ball, phi_sphere, project_ball

from helpers import fd_gradient


def test_ball_validation():
    with pytest.raises(ValueError):
        Ball([0.0, 0.0], -1.0)
    with pytest.raises(ValueError):
        Ball([0.0, np.inf], 1.0)
    assert Ball([1.0, 2.0], 0.0).radius == 0.0


def test_project_inside_is_identity():
    ball = Ball([0.0, 0.0], 1.0)
    z = np.array([0.3, -0.4])
    assert np.array_equal(project_ball(z, ball), z)
    boundary = np.array([0.6, 0.8])
    assert np.array_equal(project_ball(boundary, ball), boundary)


def test_project_outside_examples():
    assert np.array_equal(project_ball([3.0, 1.0], Ball([1.0, 1.0], 1.0)), [2.0, 1.0])
    np.testing.assert_allclose(
        project_ball([3.0, 4.0], Ball([0.0, 0.0], 1.0)), [0.6, 0.8], rtol=1e-15)


def test_project_degenerate_radius_zero():
    ball = Ball([2.0, -1.0], 0.0)
    assert np.array_equal(project_ball([5.0, 3.0], ball), [2.0, -1.0])
    assert np.array_equal(project_ball([2.0, -1.0], ball), [2.0, -1.0])


def test_project_dimension_mismatch():
    with pytest.raises(ValueError):
        project_ball([1.0, 2.0, 3.0], Ball([0.0, 0.0], 1.0))


def test_project_idempotent_random():
    rng = np.random.default_rng(7)
    for _ in range(300):
        p = rng.integers(1, 4)
        ball = Ball(rng.normal(size=p), rng.random() * 2)
        z = rng.normal(scale=3, size=p)
        once = project_ball(z, ball)
        twice = project_ball(once, ball)
        np.testing.assert_allclose(twice, once, rtol=1e-15, atol=1e-15)


def test_phi_ball_examples():
    assert phi_ball([1.0], Ball([0.0], 0.5)) == 0.125
    assert phi_ball([0.4], Ball([0.0], 0.5)) == 0.0
    assert phi_ball([-0.5], Ball([0.0], 0.5)) == 0.0


def test_phi_sphere_examples():
    assert phi_sphere([3.0, 4.0], Ball([0.0, 0.0], 1.0)) == 8.0
    assert phi_sphere([0.0, 0.0], Ball([0.0, 0.0], 1.0)) == 0.5
    assert phi_sphere([0.6, 0.8], Ball([0.0, 0.0], 1.0)) == 0.0


def test_phi_ball_under_phi_sphere_and_equal_outside():
    rng = np.random.default_rng(11)
    for _ in range(500):
        p = rng.integers(1, 4)
        ball = Ball(rng.normal(size=p), rng.random() * 2)
        z = rng.normal(scale=2, size=p)
        inside = phi_ball(z, ball)
        assert 0.0 <= inside <= phi_sphere(z, ball) + 1e-15
        if np.linalg.norm(z - ball.center) >= ball.radius:
            assert inside == phi_sphere(z, ball)


def test_grad_phi_ball_zero_inside_matches_fd_outside():
    ball = Ball([0.5, -0.25], 0.75)
    assert np.array_equal(grad_phi_ball([0.5, 0.0], ball), [0.0, 0.0])
    rng = np.random.default_rng(3)
    for _ in range(50):
        z = rng.normal(scale=3, size=2)
        if abs(np.linalg.norm(z - ball.center) - ball.radius) < 1e-3:
            continue
        fd = fd_gradient(lambda v: phi_ball(v, ball), z)
        np.testing.assert_allclose(grad_phi_ball(z, ball), fd, rtol=1e-6, atol=1e-9)


def test_grad_phi_ball_nonexpansive():
    ball = Ball([0.25, 0.5, -0.5], 0.6)
    rng = np.random.default_rng(5)
    for _ in range(1000):
        x = rng.normal(scale=2, size=3)
        y = rng.normal(scale=2, size=3)
        gap = np.linalg.norm(grad_phi_ball(x, ball) - grad_phi_ball(y, ball))
        assert gap <= np.linalg.norm(x - y) + 1e-12


def test_phi_ball_convex_along_segments():
    ball = Ball([0.0, 0.0], 1.0)
    rng = np.random.default_rng(13)
    for _ in range(500):
        x = rng.normal(scale=3, size=2)
        y = rng.normal(scale=3, size=2)
        mid = 0.5 * (x + y)
        assert phi_ball(mid, ball) <= 0.5 * (phi_ball(x, ball) + phi_ball(y, ball)) + 1e-12
