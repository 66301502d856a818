"""Chrominance transport through the composite morphing map."""

from __future__ import annotations

import numpy as np

from . import grid
from .colorspace import YUV, yuv_to_rgb
from .errors import SizeError


def transfer_chrominance(phi, u_src, v_src) -> tuple[np.ndarray, np.ndarray]:
    """Sample both chrominance planes at the source positions ``phi``.

    ``phi`` has shape ``(2, m1, m2)`` and holds 1-based source coordinates
    for every target pixel; the outputs have shape ``(m1, m2)``.
    """
    u_src = grid.as_field(u_src, "u_src")
    v_src = grid.as_field(v_src, "v_src")
    if u_src.shape != v_src.shape:
        raise SizeError(f"chrominance planes differ in shape: {u_src.shape} vs {v_src.shape}")
    phi = np.asarray(phi, dtype=np.float64)
    return grid.sample(u_src, phi[0], phi[1]), grid.sample(v_src, phi[0], phi[1])


def colorize(y_tar, u_tar, v_tar) -> np.ndarray:
    """Assemble an RGB image (shape ``(n1, n2, 3)``) from target luminance and chrominance."""
    y_tar, u_tar, v_tar = (np.asarray(c, dtype=np.float64) for c in (y_tar, u_tar, v_tar))
    if not (y_tar.shape == u_tar.shape == v_tar.shape):
        raise SizeError("luminance and chrominance planes must share dimensions")
    return yuv_to_rgb(YUV(y_tar, u_tar, v_tar))


def transport_rgb(phi, rgb) -> np.ndarray:
    """Warp every RGB channel through ``phi``; a diagnostic, not a colorization."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return np.stack([grid.sample(rgb[..., c], phi[0], phi[1]) for c in range(3)], axis=-1)
