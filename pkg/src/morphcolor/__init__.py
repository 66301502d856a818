"""Exemplar-based face colorization by time-discrete image morphing."""

from .colorspace import YUV, luminance_remap, rgb_to_yuv, yuv_to_rgb
from .errors import (DegenerateInputError, DivergenceError, MorphColorError,
                     NonDiffeomorphicError, SizeError)
from .morphing import MorphParams, compose_map, image_sequence_step, morph, path_energy
from .pipeline import build_montage, colorize_from_exemplar
from .postprocess import PostParams, debias, tv_chrominance
from .registration import elastic_potential, register
from .transfer import colorize, transfer_chrominance

__version__ = "0.1.0"
