import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from jpegfix.planes import (
    GRAYSCALE,
    YCBCR420,
    YCBCR444,
    ImagePlanes,
    Plane,
    PnmParseError,
    assemble_blocks,
    crop_to_block_grid,
    crop_to_original,
    downsample_chroma,
    format_pnm,
    from_rgb,
    load_pnm,
    pad_to_block_grid,
    parse_pnm,
    psnr,
    rgb_to_ycbcr,
    split_blocks,
    store_pnm,
    to_rgb,
    upsample_chroma,
    ycbcr_to_rgb,
)

gray_images = arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20)))


@given(gray_images)
def test_pnm_gray_round_trip(a):
    img = ImagePlanes.gray(a)
    assert parse_pnm(format_pnm(img)) == img


def test_pnm_files(tmp_path):
    p = tmp_path / "one.pgm"
    p.write_bytes(b"P5\n1 1\n255\n\x00")
    img = load_pnm(p)
    assert img.mode == GRAYSCALE and img.planes[0].samples.tolist() == [[0]]
    p = tmp_path / "white.ppm"
    p.write_bytes(b"P6 1 1 255 \xff\xff\xff")
    img = load_pnm(p)
    assert img.mode == YCBCR444
    assert [int(pl.samples[0, 0]) for pl in img.planes] == [255, 128, 128]
    out = tmp_path / "out.pgm"
    store_pnm(ImagePlanes.gray(np.arange(12, dtype=np.uint8).reshape(3, 4)), out)
    assert load_pnm(out).planes[0].samples[2, 3] == 11


def test_pnm_header_comments():
    img = parse_pnm(b"P5\n# a comment\n2 1\n255\n\x01\x02")
    assert img.planes[0].samples.tolist() == [[1, 2]]


@pytest.mark.parametrize("data", [
    b"P3\n1 1\n255\n0",          # ASCII variant
    b"P5\n1 1\n65535\n\x00\x00",  # 16-bit
    b"P5\n2 2\n255\n\x00",        # short raster
    b"P5\n0 2\n255\n",            # empty
    b"GIF89a",
])
def test_pnm_rejects(data):
    with pytest.raises(PnmParseError):
        parse_pnm(data)


def test_colour_examples():
    assert rgb_to_ycbcr(0, 0, 0) == (0, 128, 128)
    assert rgb_to_ycbcr(255, 255, 255) == (255, 128, 128)
    # Y = 76.245, Cb = 84.97, Cr = 255.5 clamps to 255
    assert rgb_to_ycbcr(255, 0, 0) == (76, 85, 255)


@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_colour_matches_formula_and_range(r, g, b):
    assert rgb_to_ycbcr(r, g, b) == oracles.ycbcr(r, g, b)
    for v in ycbcr_to_rgb(*rgb_to_ycbcr(r, g, b)):
        assert 0 <= v <= 255


@given(st.integers(0, 255))
def test_neutral_grays_have_neutral_chroma(v):
    assert rgb_to_ycbcr(v, v, v) == (v, 128, 128)


def test_colour_round_trip_is_close(rng):
    rgb = rng.integers(0, 256, (32, 32, 3), dtype=np.uint8)
    back = to_rgb(from_rgb(rgb))
    assert np.abs(back.astype(int) - rgb).max() <= 3


def test_chroma_resampling():
    p = Plane(np.array([[1, 2], [3, 4]], np.uint8))
    assert downsample_chroma(p).samples.tolist() == [[1]]
    assert upsample_chroma(downsample_chroma(p)).samples.tolist() == [[1, 1], [1, 1]]
    flat = Plane(np.full((6, 10), 77, np.uint8))
    assert upsample_chroma(downsample_chroma(flat), (10, 6)) == flat


@given(arrays(np.uint8, st.tuples(st.integers(1, 17), st.integers(1, 17))))
def test_chroma_round_trip_on_even_positions(a):
    p = Plane(a)
    back = upsample_chroma(downsample_chroma(p), (p.width, p.height)).samples
    assert np.array_equal(back[::2, ::2], a[::2, ::2])


def test_420_geometry():
    img = from_rgb(np.zeros((11, 13, 3), np.uint8), YCBCR420)
    assert [(p.width, p.height) for p in img.planes] == [(13, 11), (7, 6), (7, 6)]


def test_grid_examples(rng):
    big = ImagePlanes.gray(rng.integers(0, 256, (512, 512), dtype=np.uint8))
    assert crop_to_block_grid(big) == big and pad_to_block_grid(big) == big
    a = rng.integers(0, 256, (10, 10), dtype=np.uint8)
    small = ImagePlanes.gray(a)
    cropped = crop_to_block_grid(small)
    assert np.array_equal(cropped.planes[0].samples, a[:8, :8])
    padded = pad_to_block_grid(small)
    assert (padded.width, padded.height) == (16, 16)
    assert np.all(padded.planes[0].samples[10:, 3] == a[9, 3])
    assert crop_to_original(padded) == small


def test_420_grid_unit_is_16():
    img = from_rgb(np.zeros((20, 20, 3), np.uint8), YCBCR420)
    assert crop_to_block_grid(img).width == 16
    assert pad_to_block_grid(img).width == 32


def test_block_split_examples():
    p = Plane(np.hstack([np.zeros((8, 8)), np.ones((8, 8))]).astype(np.uint8))
    g = split_blocks(p)
    assert g.shape == (1, 2, 8, 8) and np.all(g[0, 1] == 1) and np.all(g[0, 0] == 0)
    a = np.zeros((16, 16), np.uint8)
    a[0, 0], a[15, 15] = 10, 200
    g = split_blocks(Plane(a))
    assert g[1, 1, 7, 7] == 200 and g[0, 0, 0, 0] == 10
    with pytest.raises(ValueError):
        split_blocks(Plane(np.zeros((8, 9), np.uint8)))


@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_split_assemble_bijection(r, c, seed):
    a = np.random.default_rng(seed).integers(0, 256, (8 * r, 8 * c), dtype=np.uint8)
    assert assemble_blocks(split_blocks(Plane(a))).samples.tolist() == a.tolist()


def test_psnr_examples():
    a = np.zeros((8, 8), np.uint8)
    assert psnr(a, a) == math.inf
    b = a.copy()
    b[3, 3] = 16
    assert psnr(a, b) == pytest.approx(10 * math.log10(255**2 / 4))
    assert psnr(a, b) == pytest.approx(42.11, abs=0.01)
    with pytest.raises(ValueError):
        psnr(a, np.zeros((8, 9), np.uint8))


def test_plane_validation():
    with pytest.raises(ValueError):
        Plane(np.full((2, 2), 300))
    with pytest.raises(ValueError):
        ImagePlanes(GRAYSCALE, [Plane(np.zeros((2, 2), np.uint8))] * 2)
    p = Plane(np.zeros((2, 2), np.uint8))
    with pytest.raises(ValueError):
        p.samples[0, 0] = 1
