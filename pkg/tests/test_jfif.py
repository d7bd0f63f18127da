import hashlib
import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays

from conftest import FIXTURES
from jpegfix import jfif
from jpegfix.blockmath import jpeg_transform
from jpegfix.planes import GRAYSCALE, YCBCR420, ImagePlanes, assemble_blocks, from_rgb, split_blocks
from jpegfix.tamper import make_tamper_evident

jpeglib = pytest.importorskip("jpeglib")
Image = pytest.importorskip("PIL.Image")

FIXTURE_NAMES = ["camera_crop_q75", "astronaut_crop_q90", "noise_q50", "camera_q30"]


def digest(img):
    h = hashlib.sha256()
    for p in img.planes:
        h.update(p.samples.tobytes())
    return h.hexdigest()


def segments(stream):
    """(marker, offset) for every marker segment before the first SOS."""
    out, pos = [], 2
    while True:
        marker = stream[pos + 1]
        out.append((marker, pos))
        if marker == 0xDA:
            return out
        pos += 2 + struct.unpack(">H", stream[pos + 2 : pos + 4])[0]


# -- zigzag and tables ----------------------------------------------------------

def test_zigzag_examples():
    raster = np.arange(64).reshape(8, 8)
    zz = jfif.zigzag(raster)
    assert zz[0] == 0 and zz[1] == 1 and zz[2] == 8
    assert sorted(zz.tolist()) == list(range(64))
    assert zz[-1] == 63


@given(arrays(np.int64, 64))
def test_zigzag_inverse(v):
    assert np.array_equal(jfif.zigzag(jfif.unzigzag(v)), v)
    assert np.array_equal(jfif.unzigzag(jfif.zigzag(v.reshape(8, 8))), v)


def test_standard_tables():
    luma, chroma = jfif.standard_tables(50)
    assert np.array_equal(luma, jfif.LUMA_BASE) and np.array_equal(chroma, jfif.CHROMA_BASE)
    assert all(np.all(t == 1) for t in jfif.standard_tables(100))
    assert jfif.standard_tables(75)[0][0, 0] == 8
    for q in (0, 101):
        with pytest.raises(ValueError):
            jfif.standard_tables(q)


@pytest.mark.parametrize("quality", [10, 50, 75, 95])
def test_tables_match_libjpeg(quality):
    buf = io.BytesIO()
    Image.fromarray(np.zeros((8, 8, 3), np.uint8)).save(buf, "JPEG", quality=quality)
    q = Image.open(buf).quantization  # raster order
    luma, chroma = jfif.standard_tables(quality)
    assert np.array_equal(np.array(q[0]).reshape(8, 8), luma)
    assert np.array_equal(np.array(q[1]).reshape(8, 8), chroma)


# -- encoder -----------------------------------------------------------------------

def test_constant_block_stream():
    img = ImagePlanes.gray(np.full((8, 8), 128, np.uint8))
    stream = jfif.encode_baseline(img, jfif.standard_tables(75)[0])
    frame = jfif.read_jfif(stream)
    assert np.all(frame.components[0].coeffs == 0)
    markers = [m for m, _ in segments(stream)]
    assert markers == [0xE0, 0xDB, 0xC0, 0xC4, 0xDA]
    assert stream[-2:] == b"\xFF\xD9"


@settings(max_examples=40, deadline=None)
@given(arrays(np.uint8, (16, 24)))
def test_entropy_round_trip_is_lossless(a):
    q = jfif.standard_tables(90)[0]
    img = ImagePlanes.gray(a)
    frame = jfif.forward_coefficients(img, q)
    back = jfif.read_jfif(jfif.write_jfif(frame))
    assert np.array_equal(back.components[0].coeffs, frame.components[0].coeffs)
    decoded, tables = jfif.decode_baseline(jfif.write_jfif(frame))
    assert np.array_equal(tables[0], q)
    want = assemble_blocks(jpeg_transform(split_blocks(img.planes[0]), q))
    assert decoded.planes[0] == want


def test_byte_stuffing(rng):
    # quality 100 on noise gives long codes and plenty of 0xFF bytes
    img = ImagePlanes.gray(rng.integers(0, 256, (64, 64), dtype=np.uint8))
    stream = jfif.encode_baseline(img, jfif.standard_tables(100)[0])
    sos = segments(stream)[-1][1]
    body = stream[sos + 2 + struct.unpack(">H", stream[sos + 2 : sos + 4])[0] : -2]
    assert body.count(b"\xFF") > 0
    for i in range(len(body)):
        if body[i] == 0xFF:
            assert body[i + 1] == 0x00


def test_colour_and_odd_sizes_round_trip(rng):
    rgb = rng.integers(0, 256, (21, 13, 3), dtype=np.uint8)
    luma, chroma = jfif.standard_tables(80)
    for mode in ("ycbcr444", YCBCR420):
        img = from_rgb(rgb, mode)
        frame = jfif.forward_coefficients(img, luma, chroma)
        decoded, tables = jfif.decode_baseline(jfif.write_jfif(frame))
        assert (decoded.width, decoded.height) == (13, 21) and decoded.mode == mode
        again = jfif.forward_coefficients(decoded, luma, chroma)
        assert len(tables) == 3 and np.array_equal(tables[1], chroma)


def test_oversize_rejected():
    with pytest.raises(ValueError):
        jfif.encode_baseline(ImagePlanes.gray(np.zeros((1, 65501), np.uint8)), np.ones(64))


def test_fixed_point_image_decodes_exactly(rng):
    img = ImagePlanes.gray(rng.integers(0, 256, (32, 40), dtype=np.uint8))
    fixed, stream = make_tamper_evident(img, 60)
    decoded, _ = jfif.decode_baseline(stream)
    assert decoded == fixed


# -- decoder errors ---------------------------------------------------------------------

@pytest.fixture
def stream():
    img = ImagePlanes.gray(np.random.default_rng(2).integers(0, 256, (16, 16), dtype=np.uint8))
    return jfif.encode_baseline(img, jfif.standard_tables(75)[0])


def test_dqt_step_zero(stream):
    dqt = dict(segments(stream))[0xDB]
    bad = bytearray(stream)
    bad[dqt + 5] = 0
    with pytest.raises(jfif.JpegParseError):
        jfif.decode_baseline(bytes(bad))


def test_truncated_after_sos(stream):
    sos = dict(segments(stream))[0xDA]
    with pytest.raises(jfif.JpegParseError) as info:
        jfif.decode_baseline(stream[: sos + 20])
    assert info.value.bit_offset is not None
    with pytest.raises(jfif.JpegParseError):
        jfif.decode_baseline(stream[: sos + 4])


@pytest.mark.parametrize("marker, name", [(0xC2, "SOF2"), (0xC9, "SOF9"), (0xC1, "SOF1")])
def test_unsupported_frames(stream, marker, name):
    sof = dict(segments(stream))[0xC0]
    bad = bytearray(stream)
    bad[sof + 1] = marker
    with pytest.raises(jfif.UnsupportedFeatureError, match=name):
        jfif.decode_baseline(bytes(bad))


@pytest.mark.parametrize("data", [b"", b"P5\n1 1\n255\n\x00", b"\xFF\xD8", b"\xFF\xD8\xFF\xD9"])
def test_not_a_jpeg(data):
    with pytest.raises(jfif.JpegError):
        jfif.decode_baseline(data)


def test_corrupt_entropy_data(stream):
    sos = dict(segments(stream))[0xDA]
    bad = bytearray(stream)
    start = sos + 2 + 10
    bad[start : start + 16] = b"\xFF\x00" * 8  # 16 one bits are never a valid code
    with pytest.raises(jfif.JpegParseError):
        jfif.decode_baseline(bytes(bad))


# -- third-party interop ------------------------------------------------------------

@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_pinned_fixture_decodes_to_expected_samples(name, expected):
    data = (FIXTURES / f"{name}.jpg").read_bytes()
    img, tables = jfif.decode_baseline(data)
    meta = expected["jpeg"][name]
    assert digest(img) == meta["samples_sha256"]
    assert [img.width, img.height] == meta["size"] and img.mode == meta["mode"]
    assert np.array_equal(tables[0], jfif.standard_tables(meta["quality"])[0])


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_third_party_reads_identical_coefficients(name):
    path = FIXTURES / f"{name}.jpg"
    ours = jfif.read_jfif(path.read_bytes())
    theirs = jpeglib.read_dct(str(path))
    planes = [theirs.Y] + ([theirs.Cb, theirs.Cr] if len(ours.components) == 3 else [])
    for comp, arr in zip(ours.components, planes):
        assert np.array_equal(comp.coeffs, np.asarray(arr))
    for slot, table in ours.qtables.items():
        assert np.array_equal(np.asarray(theirs.qt[slot]), table)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_third_party_pixels_within_one_level(name):
    path = FIXTURES / f"{name}.jpg"
    ours, _ = jfif.decode_baseline(path.read_bytes())
    with Image.open(path) as im:
        if ours.mode == GRAYSCALE:
            theirs = [np.asarray(im)]
        else:
            im.draft("YCbCr", im.size)
            theirs = [np.asarray(im)[..., i] for i in range(3)]
    for p, t in zip(ours.planes, theirs):
        assert np.abs(p.samples.astype(int) - t).max() <= 1


@pytest.mark.parametrize("subsampling", [0, 2])
def test_reads_files_from_libjpeg(subsampling, rng, tmp_path):
    rgb = rng.integers(0, 256, (24, 40, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, "JPEG", quality=85, subsampling=subsampling)
    data = buf.getvalue()
    ours = jfif.read_jfif(data)
    path = tmp_path / "libjpeg.jpg"
    path.write_bytes(data)
    theirs = jpeglib.read_dct(str(path))
    assert ours.mode() == ("ycbcr444" if subsampling == 0 else YCBCR420)
    for comp, arr in zip(ours.components, [theirs.Y, theirs.Cb, theirs.Cr]):
        arr = np.asarray(arr)
        # jpeglib drops the blocks that only exist to fill the last MCU
        assert np.array_equal(comp.coeffs[: arr.shape[0], : arr.shape[1]], arr)
    img, _ = jfif.decode_baseline(data)
    assert (img.width, img.height) == (40, 24)


def test_reads_restart_intervals(rng, tmp_path):
    a = rng.integers(0, 256, (32, 48), dtype=np.uint8)
    buf = io.BytesIO()
    try:
        Image.fromarray(a).save(buf, "JPEG", quality=70, restart_marker_blocks=2)
    except (TypeError, ValueError):
        pytest.skip("Pillow cannot write restart markers")
    data = buf.getvalue()
    if b"\xFF\xDD" not in data:
        pytest.skip("Pillow ignored the restart option")
    path = tmp_path / "rst.jpg"
    path.write_bytes(data)
    assert np.array_equal(jfif.read_jfif(data).components[0].coeffs,
                          np.asarray(jpeglib.read_dct(str(path)).Y))
