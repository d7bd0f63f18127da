"""Tamper-evident images built from JPEG fixed points, and block-level
verification / localization of edits."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .blockmath import as_quant_table, jpeg_transform
from .fixpoint import DEFAULT_MAX_ITER, iterate_blocks
from .jfif import encode_baseline, standard_tables
from .planes import (
    GRAYSCALE,
    YCBCR420,
    ImagePlanes,
    Plane,
    assemble_blocks,
    crop_to_block_grid,
    split_blocks,
)

BLOCK_SIZE = 8
INTACT = "intact"
TAMPERED = "tampered"


def resolve_tables(img: ImagePlanes, quality=None, tables=None) -> tuple:
    """One quantization table per plane, from a quality or explicit tables.

    ``tables`` may hold one table per plane, or a (luma, chroma) pair for a
    colour image, or a single table.
    """
    if (quality is None) == (tables is None):
        raise ValueError("give exactly one of quality or tables")
    n = len(img.planes)
    if quality is not None:
        luma, chroma = standard_tables(quality)
        return (luma,) if n == 1 else (luma, chroma, chroma)
    if isinstance(tables, np.ndarray) and tables.size == 64:
        tables = [tables]
    tables = [as_quant_table(t) for t in tables]
    if len(tables) == n:
        return tuple(tables)
    if n == 3 and len(tables) == 2:
        return (tables[0], tables[1], tables[1])
    if len(tables) == 1:
        return tuple(tables * n)
    raise ValueError(f"{len(tables)} tables given for a {n}-plane image")


def _check_grid(img: ImagePlanes):
    for p in img.planes:
        if p.width % BLOCK_SIZE or p.height % BLOCK_SIZE:
            raise ValueError(
                f"plane {p.width}x{p.height} is not block-aligned; crop it to the block grid first")


def _plane_mask_to_luma(mask: np.ndarray, img: ImagePlanes, plane_index: int, shape) -> np.ndarray:
    if img.mode == YCBCR420 and plane_index > 0:
        up = np.repeat(np.repeat(mask, 2, axis=0), 2, axis=1)
        return up[: shape[0], : shape[1]]
    return mask


# -- creation -----------------------------------------------------------------

def fixpoint_image(img: ImagePlanes, tables, max_iter: int = DEFAULT_MAX_ITER):
    """Iterate every block of every plane to its fixed point.

    ``img`` must already be block-aligned. Returns the fixed-point image and
    one :class:`jpegfix.fixpoint.BatchResult` per plane.
    """
    _check_grid(img)
    planes, results = [], []
    for p, q in zip(img.planes, tables):
        grid = split_blocks(p)
        rows, cols = grid.shape[:2]
        res = iterate_blocks(grid.reshape(-1, 8, 8), q, max_iter)
        planes.append(assemble_blocks(res.fixpoints.reshape(rows, cols, 8, 8)))
        results.append(res)
    return img.replace_planes(planes), results


def make_tamper_evident(img: ImagePlanes, quality=None, *, tables=None,
                        max_iter: int = DEFAULT_MAX_ITER):
    """Crop to the block grid, iterate to the JPEG fixed point and serialize.

    Returns ``(fixed_image, jfif_bytes)``. The file carries the tables in its
    DQT segment, so verifying the decoded file needs no outside information.
    """
    tabs = resolve_tables(img, quality, tables)
    fixed, _ = fixpoint_image(crop_to_block_grid(img), tabs, max_iter)
    stream = encode_baseline(fixed, tabs[0], tabs[1] if len(tabs) > 1 else None)
    return fixed, stream


# -- verification ---------------------------------------------------------------

@dataclass(frozen=True)
class TamperReport:
    """Per-block outcome of one extra JPEG transform.

    ``block_mask`` and ``distances`` are laid out on the luma block grid;
    ``distances`` is the l2 change summed over all planes.
    """

    block_mask: np.ndarray
    distances: np.ndarray
    block_size: int = BLOCK_SIZE

    @property
    def changed_block_count(self) -> int:
        return int(np.count_nonzero(self.block_mask))

    @property
    def total_blocks(self) -> int:
        return int(self.block_mask.size)

    @property
    def verdict(self) -> str:
        return INTACT if self.changed_block_count == 0 else TAMPERED

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "changed_block_count": self.changed_block_count,
            "total_blocks": self.total_blocks,
            "mask_shape": list(self.block_mask.shape),
            "mask": [int(v) for v in self.block_mask.ravel()],
            "block_size": self.block_size,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "TamperReport":
        mask = np.array(d["mask"], dtype=bool).reshape(d["mask_shape"])
        report = cls(mask, np.where(mask, np.nan, 0.0), d.get("block_size", BLOCK_SIZE))
        if report.verdict != d["verdict"] or report.changed_block_count != d["changed_block_count"]:
            raise ValueError("report fields disagree with its mask")
        return report

    def mask_plane(self, scale: int = BLOCK_SIZE) -> Plane:
        """Overlay raster: 255 where a block was flagged, 0 elsewhere."""
        m = self.block_mask.astype(np.uint8) * 255
        return Plane(np.repeat(np.repeat(m, scale, axis=0), scale, axis=1))


def verify(img: ImagePlanes, quality=None, *, tables=None) -> TamperReport:
    """Re-apply the JPEG transform to every block and flag the ones that change.

    A block is flagged when any plane's co-located block is not a fixed point
    of that plane's table. The input is not modified.
    """
    tabs = resolve_tables(img, quality, tables)
    _check_grid(img)
    luma_shape = (img.height // BLOCK_SIZE, img.width // BLOCK_SIZE)
    mask = np.zeros(luma_shape, dtype=bool)
    dist_sq = np.zeros(luma_shape)
    for i, (p, q) in enumerate(zip(img.planes, tabs)):
        grid = split_blocks(p)
        out = jpeg_transform(grid, q)
        d = grid.astype(np.float64) - out
        changed = np.any(d != 0, axis=(-2, -1))
        sq = np.sum(d * d, axis=(-2, -1))
        mask |= _plane_mask_to_luma(changed, img, i, luma_shape)
        if img.mode == YCBCR420 and i > 0:
            # spread a chroma block's change over the luma blocks it covers
            dist_sq += _plane_mask_to_luma(sq, img, i, luma_shape) / 4.0
        else:
            dist_sq += sq
    return TamperReport(mask, np.sqrt(dist_sq))


def ground_truth_mask(original: ImagePlanes, edited: ImagePlanes) -> np.ndarray:
    """Blocks (luma grid) in which any sample of any plane differs."""
    if original.mode != edited.mode or len(original.planes) != len(edited.planes):
        raise ValueError("images have different layouts")
    luma_shape = (-(-original.height // BLOCK_SIZE), -(-original.width // BLOCK_SIZE))
    mask = np.zeros(luma_shape, dtype=bool)
    for i, (a, b) in enumerate(zip(original.planes, edited.planes)):
        if a.samples.shape != b.samples.shape:
            raise ValueError("images have different sizes")
        d = a.samples != b.samples
        h, w = d.shape
        ph, pw = -(-h // BLOCK_SIZE) * BLOCK_SIZE, -(-w // BLOCK_SIZE) * BLOCK_SIZE
        d = np.pad(d, ((0, ph - h), (0, pw - w)))
        blocks = d.reshape(ph // BLOCK_SIZE, BLOCK_SIZE, pw // BLOCK_SIZE, BLOCK_SIZE).any(axis=(1, 3))
        mask |= _plane_mask_to_luma(blocks, original, i, luma_shape)
    return mask


def rect_block_mask(shape, rect) -> np.ndarray:
    """Blocks of a (rows, cols) grid touched by the pixel rectangle (x, y, w, h)."""
    x, y, w, h = rect
    mask = np.zeros(shape, dtype=bool)
    if w > 0 and h > 0:
        mask[y // BLOCK_SIZE : -(-(y + h) // BLOCK_SIZE), x // BLOCK_SIZE : -(-(x + w) // BLOCK_SIZE)] = True
    return mask


def localization_metrics(report, ground_truth):
    """Block-level (recall, false_positive_rate).

    With no true positives the recall is 1.0; with no untouched blocks the
    false-positive rate is 0.0.
    """
    flagged = report.block_mask if isinstance(report, TamperReport) else np.asarray(report, bool)
    truth = np.asarray(ground_truth, dtype=bool)
    if flagged.shape != truth.shape:
        raise ValueError(f"mask shapes differ: {flagged.shape} vs {truth.shape}")
    pos = np.count_nonzero(truth)
    neg = truth.size - pos
    recall = 1.0 if pos == 0 else np.count_nonzero(flagged & truth) / pos
    fpr = 0.0 if neg == 0 else np.count_nonzero(flagged & ~truth) / neg
    return float(recall), float(fpr)


# -- manipulations ----------------------------------------------------------------

SALT_PEPPER = "salt_pepper"
COPY_MOVE = "copy_move"
SPLICE = "splice"
REQUANTIZE = "requantize"


@dataclass(frozen=True)
class Manipulation:
    """An edit to apply to a tamper-evident image.

    Rectangles are (x, y, width, height) in luma pixels; ``dest`` is the
    top-left (x, y) corner the region is pasted to.
    """

    kind: str
    density: float = 0.0
    source: tuple = None
    dest: tuple = None
    donor: ImagePlanes = field(default=None, repr=False)
    quality: int = None

    @classmethod
    def salt_pepper(cls, density):
        return cls(SALT_PEPPER, density=density)

    @classmethod
    def copy_move(cls, source, dest):
        return cls(COPY_MOVE, source=tuple(source), dest=tuple(dest))

    @classmethod
    def splice(cls, donor, source, dest):
        return cls(SPLICE, source=tuple(source), dest=tuple(dest), donor=donor)

    @classmethod
    def requantize(cls, quality):
        return cls(REQUANTIZE, quality=quality)

    def dest_rect(self):
        return (self.dest[0], self.dest[1], self.source[2], self.source[3])


def _check_rect(rect, w, h, what):
    x, y, rw, rh = rect
    if rw < 0 or rh < 0 or x < 0 or y < 0 or x + rw > w or y + rh > h:
        raise ValueError(f"{what} rectangle {tuple(rect)} is outside the {w}x{h} image")


def _plane_rect(rect, img, i):
    if img.mode == YCBCR420 and i > 0:
        x, y, w, h = rect
        return (x // 2, y // 2, -(-(x + w) // 2) - x // 2, -(-(y + h) // 2) - y // 2)
    return rect


def apply_manipulation(img: ImagePlanes, m: Manipulation, seed: int = 0) -> ImagePlanes:
    """Return an edited copy of ``img``; deterministic for a given ``seed``."""
    planes = [p.samples.copy() for p in img.planes]
    w, h = img.width, img.height
    if m.kind == SALT_PEPPER:
        if not 0.0 <= m.density <= 1.0:
            raise ValueError(f"density must lie in [0, 1], got {m.density}")
        rng = np.random.default_rng(seed)
        hit = rng.random((h, w)) < m.density
        salt = rng.random((h, w)) < 0.5
        planes[0][hit] = np.where(salt[hit], 255, 0)
        if img.mode != GRAYSCALE:
            for i in (1, 2):
                ys, xs = np.nonzero(hit)
                if img.mode == YCBCR420:
                    ys, xs = ys // 2, xs // 2
                planes[i][ys, xs] = 128
    elif m.kind in (COPY_MOVE, SPLICE):
        donor = img if m.kind == COPY_MOVE else m.donor
        if donor is None:
            raise ValueError("splice needs a donor image")
        if donor.mode != img.mode:
            raise ValueError("donor image must have the same colour mode")
        _check_rect(m.source, donor.width, donor.height, "source")
        _check_rect(m.dest_rect(), w, h, "destination")
        src_planes = [p.samples.copy() for p in donor.planes]
        for i in range(len(planes)):
            sx, sy, sw, sh = _plane_rect(m.source, img, i)
            dx, dy, _, _ = _plane_rect(m.dest_rect(), img, i)
            patch = src_planes[i][sy : sy + sh, sx : sx + sw]
            ph, pw = patch.shape
            planes[i][dy : dy + ph, dx : dx + pw] = patch[: planes[i].shape[0] - dy, : planes[i].shape[1] - dx]
    elif m.kind == REQUANTIZE:
        _check_grid(img)
        tabs = resolve_tables(img, m.quality)
        for i, q in enumerate(tabs):
            planes[i] = assemble_blocks(jpeg_transform(split_blocks(planes[i]), q)).samples
    else:
        raise ValueError(f"unknown manipulation {m.kind!r}")
    return img.replace_planes(planes)
