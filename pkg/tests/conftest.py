import numpy as np
import pytest

from morphcolor import grid


def gaussian_blob(shape, center, sigma=6.0):
    x = grid.identity_grid(shape)
    return np.exp(-((x[0] - center[0]) ** 2 + (x[1] - center[1]) ** 2) / (2 * sigma**2))


def centroid(img):
    x = grid.identity_grid(img.shape)
    w = img - img.min()
    return np.array([np.sum(w * x[0]), np.sum(w * x[1])]) / w.sum()


def synthetic_face(n=64, seed=0):
    """Smooth color test image: colored blobs on a tinted background."""
    rng = np.random.default_rng(seed)
    x = grid.identity_grid((n, n))
    rgb = np.empty((n, n, 3))
    rgb[...] = (0.35, 0.45, 0.6)
    for _ in range(4):
        c = rng.uniform(0.25 * n, 0.75 * n, size=2)
        s = rng.uniform(0.06 * n, 0.15 * n)
        col = rng.uniform(0.1, 0.9, size=3)
        w = np.exp(-((x[0] - c[0]) ** 2 + (x[1] - c[1]) ** 2) / (2 * s * s))[..., None]
        rgb = (1 - w) * rgb + w * col
    return np.clip(rgb, 0.0, 1.0)


@pytest.fixture
def blob_pair():
    """Blob at (32, 32) and the same blob shifted by two rows, on 64x64."""
    moving = gaussian_blob((64, 64), (32.0, 32.0))
    fixed = gaussian_blob((64, 64), (34.0, 32.0))
    return moving, fixed


def piecewise_chroma(n=32, noise=0.02, seed=0):
    """Noisy two-region (U, V) pair split down the middle column."""
    rng = np.random.default_rng(seed)
    b = np.empty((2, n, n))
    b[0, :, : n // 2], b[0, :, n // 2:] = 0.3, -0.2
    b[1, :, : n // 2], b[1, :, n // 2:] = 0.25, -0.1
    return b + noise * rng.standard_normal(b.shape)
