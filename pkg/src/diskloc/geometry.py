"""Euclidean balls, projections, and the half squared distances to balls and
spheres from which all localization costs in this package are assembled.
"""

import numpy as np

from .validation import check_point

__all__ = ["Ball", "project_ball", "phi_ball", "phi_sphere", "grad_phi_ball"]


class Ball:
    """Closed Euclidean ball with a given center and radius.

    Parameters
    ----------
    center : array-like
        Center point, shape (p,).
    radius : float
        Nonnegative, finite radius.
    """

    def __init__(self, center, radius):
        self.center = check_point(center)
        self.radius = float(radius)
        if not np.isfinite(self.radius) or self.radius < 0:
            raise ValueError(f"ball radius must be finite and nonnegative, got {radius!r}")
        self.center.flags.writeable = False

    @property
    def dim(self):
        return self.center.size

    def __repr__(self):
        return f"Ball(center={self.center.tolist()}, radius={self.radius})"


def project_ball(z, ball):
    """Orthogonal projection of a point onto a closed ball.

    Returns ``z`` unchanged when it already lies in the ball, otherwise the
    radial projection ``center + radius * (z - center) / ||z - center||``.
    A radius-zero ball projects everything onto its center.
    """
    z = check_point(z, ball.dim)
    offset = z - ball.center
    dist = np.linalg.norm(offset)
    if dist <= ball.radius:
        return z
    return ball.center + (ball.radius / dist) * offset


def phi_ball(z, ball):
    """Half squared distance from ``z`` to the ball.

    ``(1/2) * max(0, ||z - center|| - radius)**2``; zero on the ball itself.
    """
    z = check_point(z, ball.dim)
    excess = np.linalg.norm(z - ball.center) - ball.radius
    if excess <= 0.0:
        return 0.0
    return 0.5 * excess * excess


def phi_sphere(z, ball):
    """Half squared distance from ``z`` to the boundary sphere of the ball.

    ``(1/2) * (||z - center|| - radius)**2``; in contrast to :func:`phi_ball`
    this penalizes the interior too.
    """
    z = check_point(z, ball.dim)
    offset = np.linalg.norm(z - ball.center) - ball.radius
    return 0.5 * offset * offset


def grad_phi_ball(z, ball):
    """Gradient of :func:`phi_ball` at ``z``, equal to ``z - project_ball(z)``.

    Vanishes on the ball; as a difference of a point and its projection onto a
    convex set it is nonexpansive, so :func:`phi_ball` has a gradient Lipschitz
    constant of one.
    """
    z = check_point(z, ball.dim)
    return z - project_ball(z, ball)
