"""Image data model: sample planes, block grids, colour conversion, chroma
resampling, PNM file I/O and PSNR."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .blockmath import BLOCK, _round_half_away

GRAYSCALE = "grayscale"
YCBCR444 = "ycbcr444"
YCBCR420 = "ycbcr420-experimental"
MODES = (GRAYSCALE, YCBCR444, YCBCR420)


class PnmParseError(ValueError):
    """Malformed PGM/PPM data. ``offset`` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Plane:
    """One channel of 8-bit samples, stored row-major as an (height, width) array."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"plane needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.issubdtype(arr.dtype, np.integer):
            if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
                raise ValueError("plane samples must be integers")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("plane samples must lie in [0, 255]")
        arr = np.array(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Plane):
            return NotImplemented
        return np.array_equal(self.samples, other.samples)

    __hash__ = None


@dataclass(frozen=True)
class ImagePlanes:
    """A grayscale or YCbCr image as a tuple of planes.

    ``original_size`` is (width, height) before any crop or pad; decoders crop
    back to it.
    """

    mode: str
    planes: tuple
    original_size: tuple = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        planes = tuple(p if isinstance(p, Plane) else Plane(p) for p in self.planes)
        want = 1 if self.mode == GRAYSCALE else 3
        if len(planes) != want:
            raise ValueError(f"{self.mode} needs {want} plane(s), got {len(planes)}")
        luma = planes[0]
        if self.mode == YCBCR444:
            for p in planes[1:]:
                if p.samples.shape != luma.samples.shape:
                    raise ValueError("ycbcr444 planes must share one size")
        elif self.mode == YCBCR420:
            cw, ch = -(-luma.width // 2), -(-luma.height // 2)
            for p in planes[1:]:
                if (p.width, p.height) != (cw, ch):
                    raise ValueError(
                        f"420 chroma planes must be {cw}x{ch}, got {p.width}x{p.height}"
                    )
        object.__setattr__(self, "planes", planes)
        if self.original_size is None:
            object.__setattr__(self, "original_size", (luma.width, luma.height))
        else:
            object.__setattr__(self, "original_size", tuple(int(v) for v in self.original_size))

    @property
    def width(self) -> int:
        return self.planes[0].width

    @property
    def height(self) -> int:
        return self.planes[0].height

    @classmethod
    def gray(cls, samples) -> "ImagePlanes":
        return cls(GRAYSCALE, (Plane(samples),))

    def replace_planes(self, planes) -> "ImagePlanes":
        return ImagePlanes(self.mode, tuple(planes), self.original_size)

    def __eq__(self, other):
        if not isinstance(other, ImagePlanes):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.original_size == other.original_size
            and all(a == b for a, b in zip(self.planes, other.planes))
        )

    __hash__ = None


# -- colour conversion ------------------------------------------------------

def _check_channel(x, name):
    arr = np.asarray(x)
    if not np.issubdtype(arr.dtype, np.number) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite numbers")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValueError(f"{name} must lie in [0, 255]")
    return arr.astype(np.float64)


def _to_u8(x):
    return np.clip(_round_half_away(x), 0, 255).astype(np.uint8)


def _unwrap(arrs, scalar):
    if scalar:
        return tuple(int(a) for a in arrs)
    return arrs


def rgb_to_ycbcr(r, g, b):
    """Full-range BT.601 RGB to YCbCr as used by JFIF.

    Works on scalars (returns ints) or arrays (returns uint8 arrays).
    """
    scalar = np.ndim(r) == 0 and np.ndim(g) == 0 and np.ndim(b) == 0
    r, g, b = (_check_channel(v, n) for v, n in ((r, "r"), (g, "g"), (b, "b")))
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b
    cr = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b
    return _unwrap((_to_u8(y), _to_u8(cb), _to_u8(cr)), scalar)


def ycbcr_to_rgb(y, cb, cr):
    """Inverse of :func:`rgb_to_ycbcr` with the same rounding and clamping."""
    scalar = np.ndim(y) == 0 and np.ndim(cb) == 0 and np.ndim(cr) == 0
    y, cb, cr = (_check_channel(v, n) for v, n in ((y, "y"), (cb, "cb"), (cr, "cr")))
    cb = cb - 128.0
    cr = cr - 128.0
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return _unwrap((_to_u8(r), _to_u8(g), _to_u8(b)), scalar)


def from_rgb(rgb, mode: str = YCBCR444) -> ImagePlanes:
    """Build an image from an (h, w, 3) RGB array, or (h, w) for grayscale."""
    arr = np.asarray(rgb)
    if mode == GRAYSCALE:
        if arr.ndim == 3:
            arr = rgb_to_ycbcr(arr[..., 0], arr[..., 1], arr[..., 2])[0]
        return ImagePlanes.gray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected an (h, w, 3) RGB array, got shape {arr.shape}")
    y, cb, cr = rgb_to_ycbcr(arr[..., 0], arr[..., 1], arr[..., 2])
    if mode == YCBCR420:
        cb, cr = downsample_chroma(Plane(cb)), downsample_chroma(Plane(cr))
    elif mode != YCBCR444:
        raise ValueError(f"unknown mode {mode!r}")
    return ImagePlanes(mode, (y, cb, cr))


def to_rgb(img: ImagePlanes) -> np.ndarray:
    """(h, w, 3) RGB array for colour images; (h, w) samples for grayscale."""
    if img.mode == GRAYSCALE:
        return img.planes[0].samples.copy()
    y, cb, cr = img.planes
    if img.mode == YCBCR420:
        size = (y.width, y.height)
        cb, cr = upsample_chroma(cb, size), upsample_chroma(cr, size)
    return np.dstack(ycbcr_to_rgb(y.samples, cb.samples, cr.samples))


# -- chroma resampling ------------------------------------------------------

def downsample_chroma(p: Plane) -> Plane:
    """Keep the even-indexed rows and columns."""
    return Plane(p.samples[::2, ::2])


def upsample_chroma(p: Plane, size=None) -> Plane:
    """Replicate each sample into a 2x2 cell, then crop to ``size`` = (w, h)."""
    up = np.repeat(np.repeat(p.samples, 2, axis=0), 2, axis=1)
    if size is not None:
        w, h = size
        if w > up.shape[1] or h > up.shape[0]:
            raise ValueError(f"cannot upsample {p.width}x{p.height} to {w}x{h}")
        up = up[:h, :w]
    return Plane(up)


# -- block grid -------------------------------------------------------------

def _grid_unit(img: ImagePlanes) -> int:
    return 2 * BLOCK if img.mode == YCBCR420 else BLOCK


def crop_to_block_grid(img: ImagePlanes) -> ImagePlanes:
    """Drop right/bottom samples so every plane tiles exactly into 8x8 blocks.

    4:2:0 images are cropped to multiples of 16 so the chroma planes tile too.
    The cropped size becomes the new ``original_size``.
    """
    unit = _grid_unit(img)
    w = img.width - img.width % unit
    h = img.height - img.height % unit
    if w == 0 or h == 0:
        raise ValueError(f"{img.width}x{img.height} image is smaller than one {unit}x{unit} cell")
    if (w, h) == (img.width, img.height):
        return ImagePlanes(img.mode, img.planes, (w, h))
    planes = [img.planes[0].samples[:h, :w]]
    for p in img.planes[1:]:
        if img.mode == YCBCR420:
            planes.append(p.samples[: h // 2, : w // 2])
        else:
            planes.append(p.samples[:h, :w])
    return ImagePlanes(img.mode, tuple(planes), (w, h))


def _pad_plane(a: np.ndarray, w: int, h: int) -> np.ndarray:
    return np.pad(a, ((0, h - a.shape[0]), (0, w - a.shape[1])), mode="edge")


def pad_to_block_grid(img: ImagePlanes) -> ImagePlanes:
    """Extend every plane to whole blocks by repeating the last row and column.

    ``original_size`` is kept so :func:`crop_to_original` can undo the pad.
    """
    unit = _grid_unit(img)
    w = -(-img.width // unit) * unit
    h = -(-img.height // unit) * unit
    planes = [_pad_plane(img.planes[0].samples, w, h)]
    for p in img.planes[1:]:
        if img.mode == YCBCR420:
            planes.append(_pad_plane(p.samples, w // 2, h // 2))
        else:
            planes.append(_pad_plane(p.samples, w, h))
    return ImagePlanes(img.mode, tuple(planes), img.original_size)


def crop_to_original(img: ImagePlanes) -> ImagePlanes:
    w, h = img.original_size
    planes = [img.planes[0].samples[:h, :w]]
    for p in img.planes[1:]:
        if img.mode == YCBCR420:
            planes.append(p.samples[: -(-h // 2), : -(-w // 2)])
        else:
            planes.append(p.samples[:h, :w])
    return ImagePlanes(img.mode, tuple(planes), (w, h))


def split_blocks(p) -> np.ndarray:
    """Cut a plane into a (rows, cols, 8, 8) grid of blocks in raster order."""
    a = p.samples if isinstance(p, Plane) else np.asarray(p)
    h, w = a.shape
    if h % BLOCK or w % BLOCK:
        raise ValueError(f"plane size {w}x{h} is not a multiple of {BLOCK}")
    return a.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2).copy()


def assemble_blocks(grid) -> Plane:
    """Inverse of :func:`split_blocks`."""
    g = np.asarray(grid)
    if g.ndim != 4 or g.shape[2:] != (BLOCK, BLOCK):
        raise ValueError(f"expected a (rows, cols, 8, 8) grid, got shape {g.shape}")
    r, c = g.shape[:2]
    return Plane(g.swapaxes(1, 2).reshape(r * BLOCK, c * BLOCK))


# -- quality ----------------------------------------------------------------

def psnr(a, b) -> float:
    """Peak signal-to-noise ratio in dB for 8-bit data; ``math.inf`` if identical."""
    x = a.samples if isinstance(a, Plane) else np.asarray(a)
    y = b.samples if isinstance(b, Plane) else np.asarray(b)
    if x.shape != y.shape:
        raise ValueError(f"size mismatch: {x.shape} vs {y.shape}")
    d = x.astype(np.float64) - y.astype(np.float64)
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


# -- PNM I/O ----------------------------------------------------------------

def _header_fields(data: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens after the magic number."""
    pos = 2
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos] in b" \t\r\n":
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
            continue
        if pos >= n:
            raise PnmParseError("header ends early", pos)
        start = pos
        while pos < n and data[pos] not in b" \t\r\n#":
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise PnmParseError(f"expected a decimal number, got {tok!r}", start)
        out.append((int(tok), start))
    if pos >= n or data[pos] not in b" \t\r\n":
        raise PnmParseError("missing whitespace after maxval", pos)
    return out, pos + 1


def parse_pnm(data: bytes) -> ImagePlanes:
    """Decode binary PGM (P5) or PPM (P6) bytes with maxval 255."""
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise PnmParseError("not a binary PGM/PPM file (expected P5 or P6)", 0)
    channels = 1 if data[:2] == b"P5" else 3
    fields, start = _header_fields(data, 3)
    (w, w_at), (h, h_at), (maxval, m_at) = fields
    if w < 1:
        raise PnmParseError("width must be positive", w_at)
    if h < 1:
        raise PnmParseError("height must be positive", h_at)
    if maxval != 255:
        raise PnmParseError(f"only maxval 255 is supported, got {maxval}", m_at)
    need = w * h * channels
    raster = data[start : start + need]
    if len(raster) < need:
        raise PnmParseError(f"raster truncated: need {need} bytes, have {len(raster)}", len(data))
    a = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return ImagePlanes.gray(a.reshape(h, w))
    return from_rgb(a.reshape(h, w, 3), YCBCR444)


def format_pnm(img) -> bytes:
    """Encode an image (or a bare Plane) as P5 for grayscale, P6 otherwise."""
    if isinstance(img, Plane):
        img = ImagePlanes.gray(img.samples)
    if img.mode == GRAYSCALE:
        a = img.planes[0].samples
        return b"P5\n%d %d\n255\n" % (a.shape[1], a.shape[0]) + a.tobytes()
    rgb = to_rgb(img)
    return b"P6\n%d %d\n255\n" % (rgb.shape[1], rgb.shape[0]) + rgb.astype(np.uint8).tobytes()


def load_pnm(path) -> ImagePlanes:
    return parse_pnm(Path(path).read_bytes())


def atomic_write(path, data: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def store_pnm(img, path) -> None:
    atomic_write(path, format_pnm(img))
