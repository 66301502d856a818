"""RGB <-> YUV conversion and luminance remapping.

Colour images are float arrays of shape ``(..., 3)`` with channels in
``[0, 1]``. The YUV counterpart is a :class:`YUV` triple of equally shaped
planes.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputError

RGB_TO_YUV = np.array([
    [0.299, 0.587, 0.114],
    [-0.14713, -0.28886, 0.436],
    [0.615, -0.51498, -0.10001],
])

# printed inverse; agrees with inv(RGB_TO_YUV) only to ~1e-5
YUV_TO_RGB = np.array([
    [1.0, 0.0, 1.13983],
    [1.0, -0.39465, -0.58060],
    [1.0, 2.03211, 0.0],
])


class YUV(NamedTuple):
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray


def rgb_to_yuv(rgb) -> YUV:
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing channel axis of size 3, got {rgb.shape}")
    yuv = np.einsum("ij,...j->i...", RGB_TO_YUV, rgb)
    return YUV(yuv[0], yuv[1], yuv[2])


def yuv_to_rgb(yuv) -> np.ndarray:
    """Invert :func:`rgb_to_yuv` with the printed matrix and clamp to ``[0, 1]``."""
    y, u, v = (np.asarray(c, dtype=np.float64) for c in yuv)
    stacked = np.stack(np.broadcast_arrays(y, u, v), axis=-1)
    rgb = stacked @ YUV_TO_RGB.T
    return np.clip(rgb, 0.0, 1.0)


def luminance_remap(source_y, target) -> np.ndarray:
    """Affinely match the mean and standard deviation of ``source_y`` to ``target``.

    Uses population (1/N) statistics over all pixels.

    Raises
    ------
    DegenerateInputError
        If ``source_y`` is constant.
    """
    source_y = np.asarray(source_y, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    var_src = source_y.var()
    if not var_src > 0.0:
        raise DegenerateInputError("source luminance has zero variance; cannot remap")
    scale = np.sqrt(target.var() / var_src)
    return scale * (source_y - source_y.mean()) + target.mean()
