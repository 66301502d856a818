"""Reading and writing 8-bit images as float arrays in [0, 1]."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

GRAY_TOLERANCE = 1.0 / 255.0


def read_image(path) -> np.ndarray:
    """Load PNG/PPM/PGM as ``(n1, n2)`` gray or ``(n1, n2, 3)`` RGB floats.

    Raises ``OSError`` if the file cannot be read or decoded.
    """
    path = Path(path)
    with Image.open(path) as img:
        img.load()
        if img.mode in ("L", "1"):
            arr = np.asarray(img.convert("L"), dtype=np.float64)
        elif img.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(img, dtype=np.float64) / 257.0
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def is_gray(img: np.ndarray, tol: float = GRAY_TOLERANCE) -> bool:
    """True for single-channel images or RGB images whose channels agree within ``tol``."""
    if img.ndim == 2:
        return True
    spread = img.max(axis=-1) - img.min(axis=-1)
    return bool(np.all(spread <= tol + 1e-12))


def to_rgb(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return np.repeat(img[..., None], 3, axis=-1)
    return img


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img: np.ndarray) -> None:
    """Write a gray ``(n1, n2)`` or RGB ``(n1, n2, 3)`` float image as 8-bit PNG."""
    path = Path(path)
    data = to_uint8(img)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")
