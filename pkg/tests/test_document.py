import math

import numpy as np
import pytest

from leaktrace.document import (
    Document,
    DocumentError,
    SplitGeometry,
    concat,
    join,
    parse_pgm,
    psnr,
    random_document,
    read_pgm,
    similarity,
    split,
    write_pgm,
)


def test_pgm_known_bytes():
    px = np.arange(256, dtype=np.uint8).reshape(16, 16)
    data = Document(px).to_pgm()
    assert data[:15] == b"P5\n16 16\n255\n\x00\x01"
    assert len(data) == len(b"P5\n16 16\n255\n") + 256


def test_pgm_parses_comments_and_whitespace():
    px = np.full((16, 20), 7, np.uint8)
    raw = b"P5 # made by hand\n20\t16\n# another\n255 " + px.tobytes()
    doc = parse_pgm(raw)
    assert doc.shape == (16, 20) and doc == Document(px)


@pytest.mark.parametrize("raw", [b"P2\n16 16\n255\n" + bytes(256), b"P5\n16 16\n65535\n" + bytes(512),
                                 b"P5\n16 16\n255\n" + bytes(255), b"P5\n16"])
def test_pgm_rejects(raw):
    with pytest.raises(DocumentError):
        parse_pgm(raw)


def test_pgm_file_roundtrip(tmp_path, rng):
    doc = Document(rng.integers(0, 256, (24, 40), dtype=np.uint8))
    write_pgm(doc, tmp_path / "a.pgm")
    assert read_pgm(tmp_path / "a.pgm") == doc


def test_document_invariants():
    with pytest.raises(DocumentError):
        Document(np.zeros((15, 16), np.uint8))
    d = Document(np.zeros((16, 32), np.uint8))
    assert (d.width, d.height) == (32, 16)
    with pytest.raises(ValueError):
        d.pixels[0, 0] = 1


def test_psnr_hand_values():
    zeros = Document(np.zeros((16, 16), np.uint8))
    full = Document(np.full((16, 16), 255, np.uint8))
    ones = Document(np.ones((16, 16), np.uint8))
    assert psnr(zeros, full) == pytest.approx(0.0, abs=1e-12)
    assert psnr(zeros, ones) == pytest.approx(20 * math.log10(255), abs=1e-9)  # 48.1308 dB
    assert psnr(zeros, zeros) == math.inf


def test_similarity_examples(doc256):
    assert similarity(doc256, doc256, 1e6)
    inverted = Document(255 - doc256.pixels)
    # oracle: direct PSNR formula
    mse = np.mean((doc256.pixels.astype(float) - inverted.pixels.astype(float)) ** 2)
    assert 10 * math.log10(255 ** 2 / mse) < 30
    assert not similarity(doc256, inverted, 30.0)
    assert similarity(doc256, inverted, 0.0) == similarity(inverted, doc256, 0.0)
    with pytest.raises(DocumentError, match="incomparable documents"):
        similarity(doc256, doc256.crop(0, 0, 128, 128))


def test_split_sizes(doc512):
    tiles = split(doc512, 256)
    assert len(tiles) == 256 and all(t.shape == (32, 32) for t in tiles)
    assert split(doc512, 1)[0] == doc512


@pytest.mark.parametrize("n", [2, 8, 12])
def test_split_rejects_non_square(doc256, n):
    with pytest.raises(DocumentError, match="invalid split"):
        split(doc256, n)


def test_split_rejects_non_divisible():
    with pytest.raises(DocumentError, match="invalid split"):
        split(Document(np.zeros((20, 20), np.uint8)), 9)


def test_row_major_order(rng):
    doc = Document(rng.integers(0, 256, (64, 64), dtype=np.uint8))
    tiles = split(doc, 16)
    assert tiles[1] == doc.crop(16, 0, 16, 16)  # i = 2 is row 0, column 1
    assert tiles[4] == doc.crop(0, 16, 16, 16)  # i = 5 starts row 1
    geom = SplitGeometry.square(64, 64, 16)
    assert geom.region(6) == (16, 16)


def test_join_tile_replacement(rng):
    doc = Document(rng.integers(0, 256, (64, 64), dtype=np.uint8))
    geom = SplitGeometry.square(64, 64, 16)
    tiles = split(doc, geom)
    tiles[5] = Document(255 - tiles[5].pixels)
    out = join(tiles, geom)
    diff = out.pixels != doc.pixels
    x, y = geom.region(6)
    assert diff[y:y + 16, x:x + 16].all()
    diff[y:y + 16, x:x + 16] = False
    assert not diff.any()


def test_join_errors(doc256):
    geom = SplitGeometry.square(256, 256, 16)
    tiles = split(doc256, geom)
    with pytest.raises(DocumentError, match="invalid join"):
        join(tiles[:-1], geom)
    with pytest.raises(DocumentError, match="invalid join"):
        join(tiles[:-1] + [doc256.crop(0, 0, 32, 32)], geom)


def test_split_covers_every_pixel_once():
    geom = SplitGeometry.square(96, 96, 9)
    count = np.zeros((96, 96), int)
    for i in range(1, 10):
        x, y = geom.region(i)
        count[y:y + geom.part_height, x:x + geom.part_width] += 1
    assert (count == 1).all() and count.sum() == 96 * 96


def test_rectangular_grids():
    g = SplitGeometry.near_square(128, 128, 8)
    assert (g.rows, g.cols, g.part_width, g.part_height) == (2, 4, 32, 64)
    assert SplitGeometry.near_square(128, 128, 16) == SplitGeometry.square(128, 128, 16)
    doc = random_document(np.random.default_rng(0), 128, 128)
    assert join(split(doc, g), g) == doc


def test_concat_regions(rng):
    a = Document(rng.integers(0, 256, (32, 32), dtype=np.uint8))
    b = Document(rng.integers(0, 256, (32, 48), dtype=np.uint8))
    ab, regions = concat([a, b])
    assert regions == [(0, 0, 32, 32), (32, 0, 48, 32)]
    assert ab.crop(*regions[1]) == b


def test_random_document_is_reproducible():
    a = random_document(np.random.default_rng(3), 64, 64)
    b = random_document(np.random.default_rng(3), 64, 64)
    assert a == b and 0 < a.pixels.std()
