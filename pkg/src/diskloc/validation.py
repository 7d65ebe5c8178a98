"""Input validation helpers shared across the package."""

import numpy as np


def check_point(z, dim=None):
    """Coerce ``z`` to a finite 1-D float64 vector.

    Parameters
    ----------
    z : array-like
        Scalar or sequence of coordinates.
    dim : int, optional
        Required dimension; a mismatch raises ``ValueError``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim == 0:
        z = z.reshape(1)
    if z.ndim != 1:
        raise ValueError(f"expected a 1-D point, got shape {z.shape}")
    if dim is not None and z.size != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise ValueError("point has non-finite entries")
    return z


def check_positions(x, n, p):
    """Coerce ``x`` to a finite (n, p) float64 array of stacked positions."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n, p):
        raise ValueError(f"expected positions of shape ({n}, {p}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("positions have non-finite entries")
    return x


def check_index(i, n, what="sensor"):
    """Validate an integer index against ``range(n)`` and return it as int."""
    i = int(i)
    if not 0 <= i < n:
        raise ValueError(f"{what} index {i} out of range [0, {n})")
    return i
