"""Batched tridiagonal solver (Thomas algorithm)."""

from __future__ import annotations

import numpy as np


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve ``A x = rhs`` for many independent tridiagonal systems at once.

    The system index runs along axis 0; any trailing axes are batch axes and
    broadcast between the arguments.

    Parameters
    ----------
    lower : array, shape (n - 1, ...)
        Sub-diagonal, ``lower[k] = A[k + 1, k]``.
    diag : array, shape (n, ...)
        Main diagonal.
    upper : array, shape (n - 1, ...)
        Super-diagonal, ``upper[k] = A[k, k + 1]``.
    rhs : array, shape (n, ...)

    Returns
    -------
    x : array, shape (n, ...)

    Notes
    -----
    No pivoting is done. The elimination is stable for diagonally dominant
    matrices, which is the only case this package needs.
    """
    diag = np.asarray(diag, dtype=np.float64)
    rhs = np.asarray(rhs, dtype=np.float64)
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    n = diag.shape[0]
    if rhs.shape[0] != n or lower.shape[0] != n - 1 or upper.shape[0] != n - 1:
        raise ValueError("inconsistent tridiagonal system sizes")
    shape = np.broadcast_shapes(diag.shape[1:], rhs.shape[1:],
                                lower.shape[1:], upper.shape[1:])
    c = np.empty((max(n - 1, 0),) + shape)
    d = np.empty((n,) + shape)

    denom = diag[0]
    d[0] = rhs[0] / denom
    for k in range(1, n):
        c[k - 1] = upper[k - 1] / denom
        denom = diag[k] - lower[k - 1] * c[k - 1]
        d[k] = (rhs[k] - lower[k - 1] * d[k - 1]) / denom

    x = d
    for k in range(n - 2, -1, -1):
        x[k] = d[k] - c[k] * x[k + 1]
    return x
