"""Bit-exact JPEG fixed points, tamper-evident JPEG images and tamper localization."""

__version__ = "0.1.0"

from .blockmath import (
    DctBasis,
    dct2,
    idct2,
    jpeg_block_transform,
    jpeg_transform,
    quant_error,
    quantize_lattice,
    recon_error,
    round_half_away,
    truncate,
)
from .fixpoint import (
    ConvergenceError,
    MiniModel,
    enumerate_mini_model,
    iterate_block,
    iterate_blocks,
    iterate_plane,
    separation_check,
)
from .jfif import decode_baseline, encode_baseline, standard_tables
from .planes import ImagePlanes, Plane, load_pnm, psnr, store_pnm
from .tamper import Manipulation, TamperReport, apply_manipulation, make_tamper_evident, verify
