"""Baseline sequential JFIF encoder and decoder.

Only what baseline 8-bit Huffman JPEG needs: DQT, SOF0, DHT, SOS, DRI/RSTn
on input, APPn/COM skipped. Coefficients are computed with the exact DCT and
lattice quantization from :mod:`jpegfix.blockmath`, and decoding applies the
same inverse path, so decoding an encoded image reproduces one JPEG transform
of it sample for sample.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .blockmath import (
    LEVEL_SHIFT,
    _round_half_away,
    as_quant_table,
    dct2,
    idct2,
    quantize_indices,
)
from .planes import (
    GRAYSCALE,
    YCBCR420,
    YCBCR444,
    ImagePlanes,
)

MAX_DIMENSION = 65500


class JpegError(ValueError):
    pass


class JpegParseError(JpegError):
    """Malformed or truncated stream.

    ``offset`` is a byte offset into the file; ``bit_offset`` is set for
    errors inside entropy-coded data.
    """

    def __init__(self, message, offset=None, bit_offset=None):
        where = []
        if offset is not None:
            where.append(f"byte {offset}")
        if bit_offset is not None:
            where.append(f"bit {bit_offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.bit_offset = bit_offset


class UnsupportedFeatureError(JpegError):
    def __init__(self, message, marker=None):
        super().__init__(message)
        self.marker = marker


# -- zigzag -------------------------------------------------------------------

def _zigzag_order(n=8):
    order = []
    for s in range(2 * n - 1):
        cells = [(i, s - i) for i in range(n) if 0 <= s - i < n]
        if s % 2 == 0:
            cells.reverse()
        order.extend(r * n + c for r, c in cells)
    return np.array(order, dtype=np.intp)


# ZIGZAG[k] is the raster index scanned at zigzag position k
ZIGZAG = _zigzag_order()
ZIGZAG.setflags(write=False)
# INVERSE_ZIGZAG[raster index] is its zigzag position
INVERSE_ZIGZAG = np.argsort(ZIGZAG)
INVERSE_ZIGZAG.setflags(write=False)


def zigzag(block) -> np.ndarray:
    """Reorder 64 raster-order values (or an 8x8 block) into zigzag order."""
    a = np.asarray(block)
    return a.reshape(*a.shape[:-2], 64)[..., ZIGZAG] if a.shape[-2:] == (8, 8) else a[..., ZIGZAG]


def unzigzag(values) -> np.ndarray:
    """Inverse of :func:`zigzag`; returns 64 values in raster order."""
    return np.asarray(values)[..., INVERSE_ZIGZAG]


# -- standard tables ----------------------------------------------------------

LUMA_BASE = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
]).reshape(8, 8)

CHROMA_BASE = np.array([
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
]).reshape(8, 8)
LUMA_BASE.setflags(write=False)
CHROMA_BASE.setflags(write=False)


def scale_table(base, quality: int) -> np.ndarray:
    if not (1 <= quality <= 100) or int(quality) != quality:
        raise ValueError(f"quality must be an integer in 1..100, got {quality!r}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    steps = (np.asarray(base, dtype=np.int64) * scale + 50) // 100
    return np.clip(steps, 1, 255)


def standard_tables(quality: int):
    """(luma, chroma) quantization tables for a 1..100 quality setting."""
    return scale_table(LUMA_BASE, quality), scale_table(CHROMA_BASE, quality)


@dataclass(frozen=True)
class HuffmanSpec:
    bits: tuple   # number of codes of each length 1..16
    values: tuple

    def codes(self):
        """symbol -> (code, length), assigned canonically."""
        out = {}
        code = 0
        k = 0
        for length in range(1, 17):
            for _ in range(self.bits[length - 1]):
                out[self.values[k]] = (code, length)
                code += 1
                k += 1
            code <<= 1
        return out


DC_LUMA = HuffmanSpec(
    (0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0), tuple(range(12)))
DC_CHROMA = HuffmanSpec(
    (0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0), tuple(range(12)))
AC_LUMA = HuffmanSpec(
    (0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7D),
    (
        0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06,
        0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08,
        0x23, 0x42, 0xB1, 0xC1, 0x15, 0x52, 0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72,
        0x82, 0x09, 0x0A, 0x16, 0x17, 0x18, 0x19, 0x1A, 0x25, 0x26, 0x27, 0x28,
        0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44, 0x45,
        0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59,
        0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75,
        0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
        0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3,
        0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6,
        0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9,
        0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA, 0xE1, 0xE2,
        0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2, 0xF3, 0xF4,
        0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ),
)
AC_CHROMA = HuffmanSpec(
    (0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77),
    (
        0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41,
        0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91,
        0xA1, 0xB1, 0xC1, 0x09, 0x23, 0x33, 0x52, 0xF0, 0x15, 0x62, 0x72, 0xD1,
        0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25, 0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26,
        0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3A, 0x43, 0x44,
        0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58,
        0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74,
        0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87,
        0x88, 0x89, 0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A,
        0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4,
        0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7,
        0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8, 0xD9, 0xDA,
        0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2, 0xF3, 0xF4,
        0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA,
    ),
)


# -- coefficient container -----------------------------------------------------

@dataclass
class Component:
    """One image component: sampling factors, table slot and its quantized
    DCT indices as a (block_rows, block_cols, 8, 8) int array (raster order
    within each block)."""

    id: int
    h: int
    v: int
    tq: int
    coeffs: np.ndarray = field(default=None, repr=False)


@dataclass
class JpegCoefficients:
    width: int
    height: int
    components: list
    qtables: dict

    @property
    def hmax(self):
        return max(c.h for c in self.components)

    @property
    def vmax(self):
        return max(c.v for c in self.components)

    def mcu_grid(self):
        cols = -(-self.width // (8 * self.hmax))
        rows = -(-self.height // (8 * self.vmax))
        return rows, cols

    def component_size(self, c: Component):
        return (-(-self.width * c.h // self.hmax), -(-self.height * c.v // self.vmax))

    def mode(self) -> str:
        comps = self.components
        if len(comps) == 1:
            return GRAYSCALE
        if len(comps) == 3:
            if all(c.h == 1 and c.v == 1 for c in comps):
                return YCBCR444
            if (comps[0].h, comps[0].v) == (2, 2) and all(
                    (c.h, c.v) == (1, 1) for c in comps[1:]):
                return YCBCR420
        layout = ", ".join(f"{c.h}x{c.v}" for c in comps)
        raise UnsupportedFeatureError(f"component layout [{layout}] is not supported")

    def tables_for_planes(self):
        return tuple(self.qtables[c.tq] for c in self.components)


# -- forward path ---------------------------------------------------------------

def _layout(mode):
    if mode == GRAYSCALE:
        return [(1, 1, 1, 0)]
    if mode == YCBCR444:
        return [(1, 1, 1, 0), (2, 1, 1, 1), (3, 1, 1, 1)]
    if mode == YCBCR420:
        return [(1, 2, 2, 0), (2, 1, 1, 1), (3, 1, 1, 1)]
    raise ValueError(f"unknown mode {mode!r}")


def block_indices(samples: np.ndarray, q) -> np.ndarray:
    """Quantized DCT indices for a grid-aligned plane, shape (rows, cols, 8, 8)."""
    h, w = samples.shape
    grid = samples.reshape(h // 8, 8, w // 8, 8).swapaxes(1, 2).astype(np.float64)
    return quantize_indices(dct2(grid - LEVEL_SHIFT), q)


def forward_coefficients(img: ImagePlanes, q_luma, q_chroma=None) -> JpegCoefficients:
    """Level shift, DCT and quantize every component of ``img``.

    Planes are edge-padded to whole MCUs; the frame size is the image's
    ``original_size``.
    """
    q_luma = as_quant_table(q_luma)
    tables = {0: q_luma}
    if img.mode != GRAYSCALE:
        tables[1] = as_quant_table(q_luma if q_chroma is None else q_chroma)
    w, h = img.original_size
    if w > img.width or h > img.height:
        w, h = img.width, img.height
    if w > MAX_DIMENSION or h > MAX_DIMENSION:
        raise ValueError(f"image {w}x{h} exceeds the {MAX_DIMENSION} pixel limit")
    comps = [Component(*spec) for spec in _layout(img.mode)]
    frame = JpegCoefficients(w, h, comps, tables)
    rows, cols = frame.mcu_grid()
    for c, plane in zip(comps, img.planes):
        bw, bh = cols * c.h * 8, rows * c.v * 8
        a = plane.samples[:bh, :bw]
        a = np.pad(a, ((0, bh - a.shape[0]), (0, bw - a.shape[1])), mode="edge")
        c.coeffs = block_indices(a, tables[c.tq])
    return frame


class _BitWriter:
    def __init__(self):
        self.out = bytearray()
        self.acc = 0
        self.n = 0

    def write(self, value, length):
        self.acc = (self.acc << length) | (value & ((1 << length) - 1))
        self.n += length
        while self.n >= 8:
            self.n -= 8
            byte = (self.acc >> self.n) & 0xFF
            self.out.append(byte)
            if byte == 0xFF:
                self.out.append(0x00)
        self.acc &= (1 << self.n) - 1

    def flush(self):
        if self.n:
            self.write((1 << (8 - self.n)) - 1, 8 - self.n)
        return bytes(self.out)


def _category(v: int) -> int:
    return abs(v).bit_length()


def _encode_block(bw, zz, pred, dc_codes, ac_codes):
    dc = int(zz[0])
    diff = dc - pred
    cat = _category(diff)
    code, length = dc_codes[cat]
    bw.write(code, length)
    if cat:
        bw.write(diff if diff > 0 else diff + (1 << cat) - 1, cat)
    last = 0
    for k in np.flatnonzero(zz[1:]) + 1:
        v = int(zz[k])
        run = k - last - 1
        while run > 15:
            bw.write(*ac_codes[0xF0])
            run -= 16
        cat = _category(v)
        if cat > 10:
            raise ValueError(f"AC coefficient {v} exceeds the baseline range")
        bw.write(*ac_codes[(run << 4) | cat])
        bw.write(v if v > 0 else v + (1 << cat) - 1, cat)
        last = k
    if last != 63:
        bw.write(*ac_codes[0x00])
    return dc


def _segment(marker: int, payload: bytes) -> bytes:
    return struct.pack(">HH", marker, len(payload) + 2) + payload


def _huffman_for(tq):
    return (DC_LUMA, AC_LUMA) if tq == 0 else (DC_CHROMA, AC_CHROMA)


def write_jfif(frame: JpegCoefficients) -> bytes:
    """Serialize quantized coefficients as a baseline JFIF stream.

    Table slot 0 gets the standard luminance Huffman tables and slot 1 the
    chrominance ones. All components go in one interleaved scan.
    """
    out = bytearray(b"\xFF\xD8")
    out += _segment(0xFFE0, b"JFIF\x00" + bytes([1, 1, 0]) + struct.pack(">HH", 1, 1) + b"\x00\x00")
    dqt = bytearray()
    for slot, table in sorted(frame.qtables.items()):
        dqt.append(slot)
        dqt += bytes(int(v) for v in zigzag(np.asarray(table)))
    out += _segment(0xFFDB, bytes(dqt))
    sof = struct.pack(">BHHB", 8, frame.height, frame.width, len(frame.components))
    for c in frame.components:
        sof += bytes([c.id, (c.h << 4) | c.v, c.tq])
    out += _segment(0xFFC0, sof)
    dht = bytearray()
    for slot in sorted({c.tq for c in frame.components}):
        dc, ac = _huffman_for(slot)
        for cls, spec in ((0, dc), (1, ac)):
            dht.append((cls << 4) | slot)
            dht += bytes(spec.bits) + bytes(spec.values)
    out += _segment(0xFFC4, bytes(dht))
    sos = bytes([len(frame.components)])
    for c in frame.components:
        sos += bytes([c.id, (c.tq << 4) | c.tq])
    out += _segment(0xFFDA, sos + bytes([0, 63, 0]))

    codes = {slot: (_huffman_for(slot)[0].codes(), _huffman_for(slot)[1].codes())
             for slot in {c.tq for c in frame.components}}
    zz = [zigzag(c.coeffs) for c in frame.components]
    preds = [0] * len(frame.components)
    bw = _BitWriter()
    rows, cols = frame.mcu_grid()
    single = len(frame.components) == 1
    if single:
        # non-interleaved: plain raster order over the component's own blocks
        c = frame.components[0]
        bw_rows, bw_cols = frame.component_size(c)[1], frame.component_size(c)[0]
        nby, nbx = -(-bw_rows // 8), -(-bw_cols // 8)
        dc_codes, ac_codes = codes[c.tq]
        for by in range(nby):
            for bx in range(nbx):
                preds[0] = _encode_block(bw, zz[0][by, bx], preds[0], dc_codes, ac_codes)
    else:
        for my in range(rows):
            for mx in range(cols):
                for i, c in enumerate(frame.components):
                    dc_codes, ac_codes = codes[c.tq]
                    for v in range(c.v):
                        for h in range(c.h):
                            blk = zz[i][my * c.v + v, mx * c.h + h]
                            preds[i] = _encode_block(bw, blk, preds[i], dc_codes, ac_codes)
    out += bw.flush()
    out += b"\xFF\xD9"
    return bytes(out)


def encode_baseline(img: ImagePlanes, q_luma, q_chroma=None) -> bytes:
    """Encode an image as a baseline JFIF byte stream.

    Grayscale images use ``q_luma`` only; colour images default ``q_chroma``
    to ``q_luma`` when not given.
    """
    return write_jfif(forward_coefficients(img, q_luma, q_chroma))


# -- parsing --------------------------------------------------------------------

_SOF_NAMES = {
    0xC1: "SOF1 (extended sequential DCT)",
    0xC2: "SOF2 (progressive DCT)",
    0xC3: "SOF3 (lossless)",
    0xC5: "SOF5 (differential sequential DCT)",
    0xC6: "SOF6 (differential progressive DCT)",
    0xC7: "SOF7 (differential lossless)",
    0xC9: "SOF9 (arithmetic sequential DCT)",
    0xCA: "SOF10 (arithmetic progressive DCT)",
    0xCB: "SOF11 (arithmetic lossless)",
    0xCD: "SOF13 (arithmetic differential sequential DCT)",
    0xCE: "SOF14 (arithmetic differential progressive DCT)",
    0xCF: "SOF15 (arithmetic differential lossless)",
    0xCC: "DAC (arithmetic conditioning)",
    0xDC: "DNL (define number of lines)",
}


class _HuffmanDecoder:
    """16-bit lookahead table: peek 16 bits, read symbol and code length."""

    def __init__(self, bits, values):
        if sum(bits) != len(values):
            raise ValueError("Huffman table value count does not match its lengths")
        sym = np.zeros(1 << 16, dtype=np.int32)
        size = np.zeros(1 << 16, dtype=np.int32)
        code = 0
        k = 0
        for length in range(1, 17):
            for _ in range(bits[length - 1]):
                lo = code << (16 - length)
                hi = (code + 1) << (16 - length)
                if hi > (1 << 16):
                    raise ValueError("Huffman code lengths overflow 16 bits")
                sym[lo:hi] = values[k]
                size[lo:hi] = length
                code += 1
                k += 1
            code <<= 1
        self.sym = sym.tolist()
        self.size = size.tolist()


class _BitReader:
    def __init__(self, data: bytes, base_bit: int = 0):
        self.data = data + b"\xFF\xFF\xFF"
        self.nbits = len(data) * 8
        self.pos = 0
        self.base = base_bit

    def _peek(self, n):
        byte = self.pos >> 3
        chunk = int.from_bytes(self.data[byte : byte + 3], "big")
        return (chunk >> (24 - (self.pos & 7) - n)) & ((1 << n) - 1)

    def receive(self, n):
        if n == 0:
            return 0
        if self.pos + n > self.nbits:
            raise JpegParseError("entropy-coded data ends early", bit_offset=self.base + self.pos)
        v = self._peek(n)
        self.pos += n
        return v

    def decode(self, table: _HuffmanDecoder):
        look = self._peek(16)
        length = table.size[look]
        if length == 0:
            raise JpegParseError("invalid Huffman code", bit_offset=self.base + self.pos)
        if self.pos + length > self.nbits:
            raise JpegParseError("entropy-coded data ends early", bit_offset=self.base + self.pos)
        self.pos += length
        return table.sym[look]


def _extend(v, cat):
    return v - (1 << cat) + 1 if cat and v < (1 << (cat - 1)) else v


def _decode_block(br, dc_tab, ac_tab, pred, out):
    cat = br.decode(dc_tab)
    if cat > 11:
        raise JpegParseError(f"DC category {cat} out of range", bit_offset=br.base + br.pos)
    pred += _extend(br.receive(cat), cat)
    out[0] = pred
    k = 1
    while k < 64:
        rs = br.decode(ac_tab)
        run, size = rs >> 4, rs & 15
        if size == 0:
            if run == 15:
                k += 16
                continue
            break
        k += run
        if k > 63:
            raise JpegParseError("AC run past end of block", bit_offset=br.base + br.pos)
        out[k] = _extend(br.receive(size), size)
        k += 1
    if k > 64:
        raise JpegParseError("zero run past end of block", bit_offset=br.base + br.pos)
    return pred


def _scan_extent(data: bytes, start: int) -> int:
    """Index of the first marker after ``start`` that ends entropy-coded data."""
    i = start
    n = len(data)
    while True:
        i = data.find(b"\xFF", i)
        if i < 0 or i + 1 >= n:
            raise JpegParseError("stream ends inside entropy-coded data", offset=n, bit_offset=8 * n)
        nxt = data[i + 1]
        if nxt == 0x00 or 0xD0 <= nxt <= 0xD7:
            i += 2
            continue
        if nxt == 0xFF:
            i += 1
            continue
        return i


def _split_restarts(seg: bytes):
    parts = []
    last = 0
    i = 0
    while True:
        i = seg.find(b"\xFF", i)
        if i < 0:
            break
        if 0xD0 <= seg[i + 1] <= 0xD7:
            parts.append((last, seg[last:i]))
            last = i + 2
        i += 2
    parts.append((last, seg[last:]))
    return parts


class _Parser:
    def __init__(self, data: bytes):
        self.data = data
        self.qtables = {}
        self.huff = {}
        self.frame = None
        self.restart = 0
        self.decoded = {}

    def u16(self, pos):
        if pos + 2 > len(self.data):
            raise JpegParseError("stream truncated", offset=len(self.data))
        return struct.unpack_from(">H", self.data, pos)[0]

    def segment(self, pos):
        length = self.u16(pos)
        if length < 2 or pos + length > len(self.data):
            raise JpegParseError("segment length runs past end of stream", offset=pos)
        return self.data[pos + 2 : pos + length], pos + length

    def run(self) -> JpegCoefficients:
        d = self.data
        if d[:2] != b"\xFF\xD8":
            raise JpegParseError("missing SOI marker; not a JPEG stream", offset=0)
        pos = 2
        while True:
            if pos >= len(d):
                raise JpegParseError("stream ends before EOI", offset=pos)
            if d[pos] != 0xFF:
                raise JpegParseError(f"expected a marker, found byte 0x{d[pos]:02X}", offset=pos)
            while pos + 1 < len(d) and d[pos + 1] == 0xFF:
                pos += 1
            if pos + 1 >= len(d):
                raise JpegParseError("stream ends inside a marker", offset=pos)
            marker = d[pos + 1]
            mpos = pos
            pos += 2
            if marker == 0xD9:
                return self.finish(mpos)
            if marker in _SOF_NAMES:
                raise UnsupportedFeatureError(
                    f"unsupported marker {_SOF_NAMES[marker]}; only baseline SOF0 is handled",
                    marker=marker)
            if 0xD0 <= marker <= 0xD7 or marker in (0x01, 0xD8):
                raise JpegParseError(f"unexpected marker 0xFF{marker:02X}", offset=mpos)
            payload, pos = self.segment(pos)
            if marker == 0xDB:
                self.dqt(payload, mpos)
            elif marker == 0xC4:
                self.dht(payload, mpos)
            elif marker == 0xC0:
                self.sof(payload, mpos)
            elif marker == 0xDD:
                if len(payload) != 2:
                    raise JpegParseError("bad DRI segment", offset=mpos)
                self.restart = struct.unpack(">H", payload)[0]
            elif marker == 0xDA:
                pos = self.sos(payload, mpos, pos)
            # APPn, COM and anything else with a length are skipped

    def dqt(self, p, at):
        i = 0
        while i < len(p):
            pq, tq = p[i] >> 4, p[i] & 15
            i += 1
            if pq != 0:
                raise JpegParseError("16-bit quantization table in an 8-bit stream", offset=at)
            if tq > 3:
                raise JpegParseError(f"quantization table slot {tq} out of range", offset=at)
            if i + 64 > len(p):
                raise JpegParseError("DQT segment truncated", offset=at)
            zz = np.frombuffer(p[i : i + 64], dtype=np.uint8).astype(np.int64)
            i += 64
            if zz.min() == 0:
                raise JpegParseError("quantization step 0 in DQT", offset=at)
            self.qtables[tq] = unzigzag(zz).reshape(8, 8)

    def dht(self, p, at):
        i = 0
        while i < len(p):
            if i + 17 > len(p):
                raise JpegParseError("DHT segment truncated", offset=at)
            tc, th = p[i] >> 4, p[i] & 15
            if tc > 1 or th > 3:
                raise JpegParseError("bad Huffman table class or slot", offset=at)
            bits = tuple(p[i + 1 : i + 17])
            count = sum(bits)
            vals = tuple(p[i + 17 : i + 17 + count])
            if len(vals) != count:
                raise JpegParseError("DHT segment truncated", offset=at)
            try:
                self.huff[(tc, th)] = _HuffmanDecoder(bits, vals)
            except ValueError as e:
                raise JpegParseError(str(e), offset=at) from None
            i += 17 + count

    def sof(self, p, at):
        if self.frame is not None:
            raise JpegParseError("second SOF marker", offset=at)
        if len(p) < 6:
            raise JpegParseError("SOF segment truncated", offset=at)
        prec, h, w, nc = struct.unpack(">BHHB", p[:6])
        if prec != 8:
            raise UnsupportedFeatureError(f"{prec}-bit samples are not baseline", marker=0xC0)
        if w == 0 or h == 0:
            raise UnsupportedFeatureError("zero or DNL-defined frame size", marker=0xC0)
        if nc not in (1, 3) or len(p) < 6 + 3 * nc:
            raise JpegParseError(f"unsupported component count {nc}", offset=at)
        comps = []
        for k in range(nc):
            cid, hv, tq = p[6 + 3 * k : 9 + 3 * k]
            h_, v_ = hv >> 4, hv & 15
            if not (1 <= h_ <= 4 and 1 <= v_ <= 4) or tq > 3:
                raise JpegParseError("bad component parameters in SOF", offset=at)
            comps.append(Component(cid, h_, v_, tq))
        self.frame = JpegCoefficients(w, h, comps, {})
        self.frame.mode()
        rows, cols = self.frame.mcu_grid()
        for c in comps:
            c.coeffs = np.zeros((rows * c.v, cols * c.h, 8, 8), dtype=np.int64)
            self.decoded[c.id] = np.zeros((rows * c.v, cols * c.h), dtype=bool)

    def sos(self, p, at, pos):
        f = self.frame
        if f is None:
            raise JpegParseError("SOS before SOF", offset=at)
        ns = p[0] if p else 0
        if not (1 <= ns <= 4) or len(p) != 4 + 2 * ns:
            raise JpegParseError("bad SOS segment", offset=at)
        by_id = {c.id: c for c in f.components}
        scan = []
        for k in range(ns):
            cid, tt = p[1 + 2 * k], p[2 + 2 * k]
            if cid not in by_id:
                raise JpegParseError(f"scan references unknown component {cid}", offset=at)
            c = by_id[cid]
            td, ta = tt >> 4, tt & 15
            for key in ((0, td), (1, ta)):
                if key not in self.huff:
                    raise JpegParseError(f"scan uses undefined Huffman table {key}", offset=at)
            if c.tq not in self.qtables:
                raise JpegParseError(f"component {cid} uses undefined quantization table", offset=at)
            scan.append((c, self.huff[(0, td)], self.huff[(1, ta)]))
        ss, se, a = p[1 + 2 * ns :]
        if (ss, se, a) != (0, 63, 0):
            raise UnsupportedFeatureError("spectral selection or approximation in scan", marker=0xDA)

        end = _scan_extent(self.data, pos)
        seg = self.data[pos:end]
        units = self._scan_units(scan)
        interval = self.restart or len(units)
        chunks = _split_restarts(seg) if self.restart else [(0, seg)]
        block = np.zeros(64, dtype=np.int64)
        u = 0
        for ci, (off, raw) in enumerate(chunks):
            if u >= len(units):
                break
            br = _BitReader(raw.replace(b"\xFF\x00", b"\xFF"), base_bit=(pos + off) * 8)
            preds = [0] * len(scan)
            for _ in range(interval):
                if u >= len(units):
                    break
                for si, by, bx in units[u]:
                    c, dct, act = scan[si]
                    block[:] = 0
                    preds[si] = _decode_block(br, dct, act, preds[si], block)
                    c.coeffs[by, bx] = unzigzag(block).reshape(8, 8)
                    self.decoded[c.id][by, bx] = True
                u += 1
        if u < len(units):
            raise JpegParseError(
                f"entropy-coded data ends after {u} of {len(units)} units", offset=end, bit_offset=8 * end)
        return end

    def _scan_units(self, scan):
        f = self.frame
        if len(scan) == 1:
            c = scan[0][0]
            w, h = f.component_size(c)
            return [[(0, by, bx)] for by in range(-(-h // 8)) for bx in range(-(-w // 8))]
        rows, cols = f.mcu_grid()
        units = []
        for my in range(rows):
            for mx in range(cols):
                mcu = []
                for si, (c, _, _) in enumerate(scan):
                    for v in range(c.v):
                        for h in range(c.h):
                            mcu.append((si, my * c.v + v, mx * c.h + h))
                units.append(mcu)
        return units

    def finish(self, at) -> JpegCoefficients:
        f = self.frame
        if f is None:
            raise JpegParseError("EOI before any frame", offset=at)
        for c in f.components:
            w, h = f.component_size(c)
            need = self.decoded[c.id][: -(-h // 8), : -(-w // 8)]
            if not need.all():
                raise JpegParseError(f"component {c.id} has undecoded blocks", offset=at)
        f.qtables = {c.tq: self.qtables[c.tq] for c in f.components}
        return f


def read_jfif(data: bytes) -> JpegCoefficients:
    """Entropy-decode a baseline stream into quantized coefficients and tables."""
    return _Parser(bytes(data)).run()


def reconstruct(frame: JpegCoefficients) -> ImagePlanes:
    """Dequantize, inverse DCT, round half away from zero, shift and clamp."""
    planes = []
    for c in frame.components:
        q = frame.qtables[c.tq]
        rec = idct2(c.coeffs * q)
        samples = np.clip(_round_half_away(rec) + LEVEL_SHIFT, 0, 255).astype(np.uint8)
        r, k = samples.shape[:2]
        full = samples.swapaxes(1, 2).reshape(r * 8, k * 8)
        w, h = frame.component_size(c)
        planes.append(full[:h, :w])
    return ImagePlanes(frame.mode(), tuple(planes), (frame.width, frame.height))


def decode_baseline(data: bytes):
    """Decode a baseline JFIF stream.

    Returns the image and a tuple holding each plane's quantization table.
    """
    frame = read_jfif(data)
    return reconstruct(frame), frame.tables_for_planes()
