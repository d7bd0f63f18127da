"""Exact block operators: rounding, truncation, lattice quantization, the
orthonormal DCT pair and the single-round JPEG block transform.

Every function accepts either a single block (shape ``(n, n)``) or a stack of
blocks (shape ``(..., n, n)``); stacked calls are bit-identical to looping
over the blocks one at a time because the DCT is evaluated with a fixed
accumulation order instead of a BLAS matmul.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

BLOCK = 8
LEVEL_SHIFT = 128
PIXEL_MIN = 0
PIXEL_MAX = 255


@dataclass(frozen=True)
class DctBasis:
    """Orthonormal n-point DCT-II basis.

    ``matrix[k, j] = s_k * cos(pi / n * (j + 1/2) * k)`` with ``s_0 = sqrt(1/n)``
    and ``s_k = sqrt(2/n)`` otherwise, so for n = 8 the AC rows carry the 1/2
    factor and the DC row carries 1/(2*sqrt(2)).
    """

    n: int = BLOCK
    matrix: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"basis size must be positive, got {self.n}")
        k = np.arange(self.n)[:, None]
        j = np.arange(self.n)[None, :]
        m = np.cos(np.pi / self.n * (j + 0.5) * k) * math.sqrt(2.0 / self.n)
        m[0, :] = math.sqrt(1.0 / self.n)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def kron(self) -> np.ndarray:
        """The n^2 x n^2 matrix acting on row-major vectorized blocks.

        ``kron @ X.ravel() == dct2(X).ravel()``.
        """
        return np.kron(self.matrix, self.matrix)


@lru_cache(maxsize=None)
def dct_basis(n: int = BLOCK) -> DctBasis:
    return DctBasis(n)


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains NaN or infinity")


def round_half_away(x):
    """Nearest integer, ties resolved away from zero.

    Python scalars give an ``int``; arrays give an ``int64`` array.
    """
    if np.ndim(x) == 0:
        xf = float(x)
        if not math.isfinite(xf):
            raise ValueError(f"cannot round non-finite value {x!r}")
        a = abs(xf)
        f = math.floor(a)
        r = f + 1 if a - f >= 0.5 else f
        return int(math.copysign(r, xf)) if r else 0
    arr = np.asarray(x, dtype=np.float64)
    _check_finite(arr)
    return _round_half_away(arr).astype(np.int64)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    # a - floor(a) is exact in binary floating point, unlike floor(a + 0.5)
    a = np.abs(x)
    f = np.floor(a)
    return np.copysign(f + (a - f >= 0.5), x)


def _round_half_up(x: np.ndarray) -> np.ndarray:
    f = np.floor(x)
    return f + (x - f >= 0.5)


def truncate(x, lo, hi):
    """Clamp ``x`` into ``[lo, hi]``."""
    if lo > hi:
        raise ValueError(f"empty range [{lo}, {hi}]")
    if np.ndim(x) == 0:
        return min(max(x, lo), hi)
    return np.clip(x, lo, hi)


def as_quant_table(q) -> np.ndarray:
    """Validate a quantization table and return it as an (8, 8) int64 array.

    Accepts 64 values in raster order or an 8x8 array. Steps must be integers
    in [1, 255].
    """
    arr = np.asarray(q)
    if arr.size != BLOCK * BLOCK:
        raise ValueError(f"quantization table needs 64 steps, got {arr.size}")
    arr = arr.reshape(BLOCK, BLOCK)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError("quantization steps must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 1 or arr.max() > 255:
        raise ValueError(
            f"quantization steps must lie in [1, 255], got [{arr.min()}, {arr.max()}]"
        )
    return arr


def as_pixel_blocks(b, n: int = BLOCK) -> np.ndarray:
    """Validate one block or a stack of blocks of 8-bit samples."""
    arr = np.asarray(b)
    if arr.ndim == 1 and arr.size == n * n:
        arr = arr.reshape(n, n)
    if arr.ndim < 2 or arr.shape[-2:] != (n, n):
        raise ValueError(f"expected {n}x{n} block(s), got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise ValueError("pixel samples must be integers")
    if arr.size and (arr.min() < PIXEL_MIN or arr.max() > PIXEL_MAX):
        raise ValueError("pixel samples must lie in [0, 255]")
    return arr.astype(np.uint8, copy=False)


def quantize_lattice(c, q) -> np.ndarray:
    """Project coefficients onto the lattice of integer multiples of ``q``.

    Computes ``q * floor(c / q + 1/2)`` elementwise, i.e. the nearest multiple
    with halves going toward +infinity. ``q`` broadcasts against ``c``.
    """
    c = np.asarray(c, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    return _round_half_up(c / q) * q


def quantize_indices(c, q) -> np.ndarray:
    """Integer lattice indices ``floor(c / q + 1/2)`` (what a JPEG file stores)."""
    c = np.asarray(c, dtype=np.float64)
    return _round_half_up(c / np.asarray(q, dtype=np.float64)).astype(np.int64)


def _left(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    # m @ x over the last two axes, summed k = 0, 1, ..., n-1 in that order
    n = m.shape[0]
    acc = m[:, 0, None] * x[..., 0:1, :]
    for k in range(1, n):
        acc = acc + m[:, k, None] * x[..., k : k + 1, :]
    return acc


def _right(x: np.ndarray, m: np.ndarray) -> np.ndarray:
    # x @ m over the last two axes, same fixed order
    n = m.shape[0]
    acc = x[..., :, 0:1] * m[0, :]
    for k in range(1, n):
        acc = acc + x[..., :, k : k + 1] * m[k, :]
    return acc


def dct2(x) -> np.ndarray:
    """Forward 2-D DCT ``P X P^T`` of one or more square blocks."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 2 or x.shape[-1] != x.shape[-2]:
        raise ValueError(f"expected square block(s), got shape {x.shape}")
    p = dct_basis(x.shape[-1]).matrix
    return _right(_left(p, x), p.T)


def idct2(c) -> np.ndarray:
    """Inverse 2-D DCT ``P^T C P``; the exact adjoint of :func:`dct2`."""
    c = np.asarray(c, dtype=np.float64)
    if c.ndim < 2 or c.shape[-1] != c.shape[-2]:
        raise ValueError(f"expected square block(s), got shape {c.shape}")
    p = dct_basis(c.shape[-1]).matrix
    return _right(_left(p.T, c), p)


@dataclass(frozen=True)
class TransformParts:
    """One application of the JPEG transform with its intermediate values.

    ``recon`` is the real-valued reconstruction ``P^T [P x P^T]_q P`` in the
    level-shifted domain, before rounding and clamping; ``epsilon`` is the
    coefficient quantization error of the input. ``coeffs`` and ``lattice``
    are the DCT of the shifted input and its quantized version.
    """

    output: np.ndarray
    epsilon: np.ndarray
    recon: np.ndarray
    coeffs: np.ndarray
    lattice: np.ndarray


def transform_parts(
    x,
    q,
    *,
    shift: float = LEVEL_SHIFT,
    lo: int = PIXEL_MIN,
    hi: int = PIXEL_MAX,
    pixel_round: Callable[[np.ndarray], np.ndarray] = _round_half_away,
) -> TransformParts:
    """Generic block transform used by both the 8x8 path and the mini model.

    Blocks of any square size are accepted; ``q`` is a scalar step or a table
    broadcastable to the block shape.
    """
    xs = np.asarray(x, dtype=np.float64) - shift
    coeffs = dct2(xs)
    lattice = quantize_lattice(coeffs, q)
    diff = coeffs - lattice
    eps = np.sqrt(np.sum(diff * diff, axis=(-2, -1)))
    recon = idct2(lattice)
    out = np.clip(pixel_round(recon) + shift, lo, hi)
    return TransformParts(output=out, epsilon=eps, recon=recon, coeffs=coeffs, lattice=lattice)


def jpeg_transform(blocks, q) -> np.ndarray:
    """Apply one JPEG compress/decompress round to one or more 8x8 blocks.

    Level shift by -128, forward DCT, lattice quantization with table ``q``,
    inverse DCT, round half away from zero, shift back and clamp to [0, 255].
    Returns ``uint8`` with the input's shape.
    """
    b = as_pixel_blocks(blocks)
    q = as_quant_table(q)
    return transform_parts(b, q).output.astype(np.uint8)


def jpeg_block_transform(b, q) -> np.ndarray:
    """Single-block form of :func:`jpeg_transform`; returns an (8, 8) block."""
    b = as_pixel_blocks(b)
    if b.ndim != 2:
        raise ValueError(f"expected a single 8x8 block, got shape {b.shape}")
    return jpeg_transform(b, q)


def quant_error(b, q):
    """Distance from the block's DCT to its nearest lattice point (epsilon)."""
    b = as_pixel_blocks(b)
    eps = transform_parts(b, as_quant_table(q)).epsilon
    return float(eps) if eps.ndim == 0 else eps


def recon_error(next_block, prev_block, q):
    """Distance from ``next_block`` to the real reconstruction of ``prev_block`` (eta).

    Evaluated in the DCT domain as ``|dct(next) - [dct(prev)]_q|``, which the
    orthonormal basis makes equal to the pixel-domain distance
    ``|next - idct([dct(prev)]_q)|``. The DCT form gives bit-identical
    epsilon and eta at a fixed point.
    """
    nb = as_pixel_blocks(next_block).astype(np.float64) - LEVEL_SHIFT
    lattice = transform_parts(as_pixel_blocks(prev_block), as_quant_table(q)).lattice
    d = dct2(nb) - lattice
    eta = np.sqrt(np.sum(d * d, axis=(-2, -1)))
    return float(eta) if eta.ndim == 0 else eta
