"""End-to-end colorization: remap, morph, transport, optional cleanup."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import grid
from .colorspace import luminance_remap, rgb_to_yuv
from .morphing import MorphParams, compose_map, morph
from .postprocess import PostParams, debias, tv_chrominance
from .transfer import colorize, transfer_chrominance

log = logging.getLogger(__name__)


@dataclass
class Colorization:
    """Everything computed by :func:`colorize_from_exemplar`."""

    rgb: np.ndarray
    transported_rgb: np.ndarray
    template: np.ndarray
    images: list
    path: list
    phi: np.ndarray
    source_uv: tuple
    transported_uv: np.ndarray
    final_uv: np.ndarray


def resize_rgb(rgb: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    return np.stack([grid.resize(rgb[..., c], shape) for c in range(3)], axis=-1)


def colorize_from_exemplar(source_rgb, target_y, morph_params: MorphParams,
                           post_params: Optional[PostParams] = None,
                           callback=None) -> Colorization:
    """Colorize ``target_y`` with chrominance carried over from ``source_rgb``.

    Both inputs must already share their pixel dimensions.
    """
    source_rgb = np.asarray(source_rgb, dtype=np.float64)
    target_y = grid.as_field(target_y, "target")
    if source_rgb.shape[:2] != target_y.shape:
        raise grid.SizeError(
            f"source {source_rgb.shape[:2]} and target {target_y.shape} must have equal size")
    src = rgb_to_yuv(source_rgb)
    template = np.clip(luminance_remap(src.y, target_y), 0.0, 1.0)

    images, path = morph(template, target_y, morph_params, callback=callback)
    phi = compose_map(path)
    transported = np.stack(transfer_chrominance(phi, src.u, src.v))
    transported_rgb = colorize(target_y, transported[0], transported[1])

    final = transported
    if post_params is not None:
        u_hat = tv_chrominance(transported, target_y, post_params)
        final = debias(transported, u_hat, target_y, post_params)
    rgb = colorize(target_y, final[0], final[1])
    return Colorization(
        rgb=rgb,
        transported_rgb=transported_rgb,
        template=template,
        images=images,
        path=path,
        phi=phi,
        source_uv=(src.u, src.v),
        transported_uv=transported,
        final_uv=final,
    )


def build_montage(images, path, source_uv, gutter: int = 4) -> np.ndarray:
    """Row of colorized path images, tile ``k`` transported by ``phi_1 o ... o phi_k``.

    Gutters between tiles are white. The result has width
    ``(K + 1) * n2 + K * gutter``.
    """
    u_src, v_src = source_uv
    n1, n2 = np.shape(images[0])
    k_steps = len(path)
    width = (k_steps + 1) * n2 + k_steps * gutter
    montage = np.ones((n1, width, 3))
    for k, img in enumerate(images):
        phi_k = compose_map(path[:k]) if k > 0 else grid.identity_grid((n1, n2))
        u, v = transfer_chrominance(phi_k, u_src, v_src)
        col = k * (n2 + gutter)
        montage[:, col:col + n2] = colorize(img, u, v)
    return montage
