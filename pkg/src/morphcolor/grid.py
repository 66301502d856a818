"""Field arithmetic on rectangular pixel grids.

Scalar fields are 2-D float arrays of shape ``(n1, n2)`` (rows, columns).
Vector fields and point sets are arrays of shape ``(2, n1, n2)`` whose first
axis holds the row and column components. Point coordinates are 1-based:
pixel ``(i, j)`` sits at ``(i, j)`` with ``i in 1..n1`` and ``j in 1..n2``.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import SizeError

__all__ = [
    "as_field",
    "as_vector_field",
    "identity_grid",
    "sample",
    "bilinear_sample",
    "gradient",
    "divergence",
    "warp",
    "jacobian_determinant",
    "restrict",
    "prolong_displacement",
    "resize",
    "splat",
]


def as_field(f, name: str = "field") -> np.ndarray:
    """Validate a scalar field and return it as a float64 array."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise SizeError(f"{name} must be 2-D, got shape {f.shape}")
    if f.shape[0] < 2 or f.shape[1] < 2:
        raise SizeError(f"{name} must be at least 2x2, got {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def as_vector_field(v, name: str = "vector field") -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 3 or v.shape[0] != 2:
        raise SizeError(f"{name} must have shape (2, n1, n2), got {v.shape}")
    if v.shape[1] < 2 or v.shape[2] < 2:
        raise SizeError(f"{name} must be at least 2x2, got {v.shape[1:]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite values")
    return v


def identity_grid(shape: tuple[int, int]) -> np.ndarray:
    """Return the 1-based coordinates of every pixel, shape ``(2, n1, n2)``."""
    n1, n2 = shape
    i, j = np.meshgrid(
        np.arange(1, n1 + 1, dtype=np.float64),
        np.arange(1, n2 + 1, dtype=np.float64),
        indexing="ij",
    )
    return np.stack([i, j])


def _cell(p: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    # clamp to [1, n], then locate the cell [i, i+1] with i in 1..n-1
    p = np.clip(p, 1.0, float(n))
    i = np.minimum(np.floor(p), n - 1).astype(np.intp)
    return i, p - i


def sample(f: np.ndarray, p1, p2) -> np.ndarray:
    """Bilinearly interpolate ``f`` at 1-based coordinates ``(p1, p2)``.

    Coordinates outside the grid box are clamped componentwise to
    ``[1, n1] x [1, n2]``. ``p1`` and ``p2`` broadcast against each other and
    the result has their broadcast shape.
    """
    n1, n2 = f.shape
    p1, p2 = np.broadcast_arrays(np.asarray(p1, dtype=np.float64),
                                 np.asarray(p2, dtype=np.float64))
    i, s = _cell(p1, n1)
    j, t = _cell(p2, n2)
    i0, j0 = i - 1, j - 1
    f00 = f[i0, j0]
    f01 = f[i0, j0 + 1]
    f10 = f[i0 + 1, j0]
    f11 = f[i0 + 1, j0 + 1]
    return (1 - s) * ((1 - t) * f00 + t * f01) + s * ((1 - t) * f10 + t * f11)


def bilinear_sample(f, p) -> float:
    """Value of the bilinear interpolant of ``f`` at the single point ``p``."""
    f = as_field(f)
    p1, p2 = (float(c) for c in p)
    if not (np.isfinite(p1) and np.isfinite(p2)):
        raise ValueError(f"point must be finite, got {p!r}")
    return float(sample(f, p1, p2))


def gradient(f: np.ndarray) -> np.ndarray:
    """Forward differences with a zero difference in the last row/column."""
    f = np.asarray(f, dtype=np.float64)
    g = np.zeros((2,) + f.shape)
    g[0, :-1, :] = f[1:, :] - f[:-1, :]
    g[1, :, :-1] = f[:, 1:] - f[:, :-1]
    return g


def divergence(w: np.ndarray) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of :func:`gradient`."""
    w = np.asarray(w, dtype=np.float64)
    w1, w2 = w[0], w[1]
    d = np.zeros(w.shape[1:])
    d[:-1, :] += w1[:-1, :]
    d[1:, :] -= w1[:-1, :]
    d[:, :-1] += w2[:, :-1]
    d[:, 1:] -= w2[:, :-1]
    return d


def warp(f: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` at ``x - v(x)`` for every grid point ``x``."""
    f = np.asarray(f, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (2,) + f.shape:
        raise SizeError(f"displacement shape {v.shape} does not match field {f.shape}")
    if not v.any():
        return f.copy()
    x = identity_grid(f.shape)
    return sample(f, x[0] - v[0], x[1] - v[1])


def jacobian_determinant(v: np.ndarray) -> np.ndarray:
    """Per-pixel ``det(Id - grad v)``, the Jacobian determinant of ``x - v(x)``."""
    g1 = gradient(v[0])
    g2 = gradient(v[1])
    return (1.0 - g1[0]) * (1.0 - g2[1]) - g1[1] * g2[0]


def _box_weights(n: int) -> np.ndarray:
    # row r averages fine indices 2r, 2r+1 (and 2r+2 for the last row when n is odd)
    m = n // 2
    w = np.zeros((m, n))
    for r in range(m):
        hi = n if r == m - 1 else 2 * r + 2
        w[r, 2 * r:hi] = 1.0 / (hi - 2 * r)
    return w


def restrict(f: np.ndarray) -> np.ndarray:
    """Halve both dimensions by 2x2 box averaging.

    An odd trailing row or column is folded into the last coarse cell.
    """
    f = np.asarray(f, dtype=np.float64)
    n1, n2 = f.shape
    if n1 < 4 or n2 < 4:
        raise SizeError(f"cannot restrict a {n1}x{n2} field; both dimensions must be >= 4")
    return _box_weights(n1) @ f @ _box_weights(n2).T


def _resample_coords(n_new: int, n_old: int) -> np.ndarray:
    # pixel-centre alignment: fine pixel x covers [x - 1/2, x + 1/2]
    s = n_new / n_old
    x = np.arange(1, n_new + 1, dtype=np.float64)
    return (x - 0.5) / s + 0.5


def resize(f: np.ndarray, new_dims: tuple[int, int]) -> np.ndarray:
    """Bilinearly resample a scalar field to ``new_dims`` (pixel centres aligned)."""
    f = np.asarray(f, dtype=np.float64)
    n1, n2 = f.shape
    m1, m2 = new_dims
    p1 = _resample_coords(m1, n1)[:, None]
    p2 = _resample_coords(m2, n2)[None, :]
    return sample(f, p1, p2)


def prolong_displacement(v: np.ndarray, new_dims: tuple[int, int]) -> np.ndarray:
    """Upsample a displacement field and rescale it to fine-grid pixel units."""
    v = np.asarray(v, dtype=np.float64)
    n1, n2 = v.shape[1:]
    m1, m2 = new_dims
    return np.stack([
        resize(v[0], new_dims) * (m1 / n1),
        resize(v[1], new_dims) * (m2 / n2),
    ])


def splat(points: np.ndarray, values: np.ndarray, shape: tuple[int, int],
          min_weight: float = 1e-12) -> np.ndarray:
    """Scatter samples onto the grid with bilinear weights and normalize.

    Each value is distributed to the four pixels around its (1-based,
    clamped) position. Pixels that receive no weight take the value of the
    nearest covered pixel.
    """
    n1, n2 = shape
    p1 = points[0].ravel()
    p2 = points[1].ravel()
    val = np.asarray(values, dtype=np.float64).ravel()
    i, s = _cell(p1, n1)
    j, t = _cell(p2, n2)
    i0, j0 = i - 1, j - 1
    size = n1 * n2
    acc = np.zeros(size)
    wsum = np.zeros(size)
    for di, dj, w in (
        (0, 0, (1 - s) * (1 - t)),
        (0, 1, (1 - s) * t),
        (1, 0, s * (1 - t)),
        (1, 1, s * t),
    ):
        idx = (i0 + di) * n2 + (j0 + dj)
        acc += np.bincount(idx, weights=w * val, minlength=size)
        wsum += np.bincount(idx, weights=w, minlength=size)
    acc = acc.reshape(shape)
    wsum = wsum.reshape(shape)
    covered = wsum > min_weight
    out = np.zeros(shape)
    out[covered] = acc[covered] / wsum[covered]
    if not covered.all():
        _, (ni, nj) = ndimage.distance_transform_edt(~covered, return_indices=True)
        out = out[ni, nj]
    return out
