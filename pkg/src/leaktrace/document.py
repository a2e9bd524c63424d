"""Grayscale raster documents: PGM I/O, PSNR similarity and tile split/join."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

MIN_SIDE = 16
DEFAULT_SIM_DB = 30.0


class DocumentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Document:
    """An 8-bit grayscale image. ``pixels`` has shape (height, width), row-major."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise DocumentError("document pixels must be two-dimensional")
        if px.dtype != np.uint8:
            if np.any(px < 0) or np.any(px > 255) or not np.all(np.equal(np.mod(px, 1), 0)):
                raise DocumentError("pixels must be integers in [0, 255]")
            px = px.astype(np.uint8)
        h, w = px.shape
        if w < MIN_SIDE or h < MIN_SIDE:
            raise DocumentError(f"document must be at least {MIN_SIDE}x{MIN_SIDE}, got {w}x{h}")
        px = np.ascontiguousarray(px).copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.pixels.shape

    def __eq__(self, other):
        if not isinstance(other, Document):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None

    def __repr__(self):
        return f"Document({self.width}x{self.height})"

    def as_float(self) -> np.ndarray:
        return self.pixels.astype(np.float64)

    def crop(self, x: int, y: int, width: int, height: int) -> "Document":
        if x < 0 or y < 0 or x + width > self.width or y + height > self.height:
            raise DocumentError("region outside document bounds")
        return Document(self.pixels[y:y + height, x:x + width])

    def to_pgm(self) -> bytes:
        header = f"P5\n{self.width} {self.height}\n255\n".encode("ascii")
        return header + self.pixels.tobytes()

    @classmethod
    def from_pgm(cls, data: bytes) -> "Document":
        return parse_pgm(data)


_PGM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*(\S+)")


def parse_pgm(data: bytes) -> Document:
    """Parse a binary (P5) PGM with maxval 255."""
    pos = 0
    fields = []
    for _ in range(4):
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise DocumentError("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic, w, h, maxval = fields
    if magic != b"P5":
        raise DocumentError("only binary PGM (P5) is supported")
    try:
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise DocumentError("malformed PGM header") from exc
    if maxval != 255:
        raise DocumentError("only maxval 255 is supported")
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise DocumentError("malformed PGM header")
    pos += 1
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise DocumentError("truncated PGM raster")
    return Document(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def read_pgm(path: str | Path) -> Document:
    return parse_pgm(Path(path).read_bytes())


def write_pgm(doc: Document, path: str | Path) -> None:
    Path(path).write_bytes(doc.to_pgm())


def _check_comparable(a: Document, b: Document) -> None:
    if a.shape != b.shape:
        raise DocumentError("incomparable documents")


def psnr(a: Document, b: Document) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical documents."""
    _check_comparable(a, b)
    mse = float(np.mean((a.as_float() - b.as_float()) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def similarity(a: Document, b: Document, threshold_db: float = DEFAULT_SIM_DB) -> bool:
    return psnr(a, b) >= threshold_db


@dataclass(frozen=True)
class SplitGeometry:
    """Grid of equally sized tiles. Part index i (1-based) sits at row (i-1)//cols, col (i-1)%cols."""

    rows: int
    cols: int
    part_width: int
    part_height: int

    def __post_init__(self):
        if min(self.rows, self.cols, self.part_width, self.part_height) < 1:
            raise DocumentError("invalid split")

    @property
    def n(self) -> int:
        return self.rows * self.cols

    @property
    def width(self) -> int:
        return self.part_width * self.cols

    @property
    def height(self) -> int:
        return self.part_height * self.rows

    @classmethod
    def square(cls, width: int, height: int, n: int) -> "SplitGeometry":
        """Square grid of n parts; n must be a perfect square dividing both sides."""
        if n < 1:
            raise DocumentError("invalid split")
        side = math.isqrt(n)
        if side * side != n:
            raise DocumentError("invalid split")
        return cls.grid(width, height, side, side)

    @classmethod
    def grid(cls, width: int, height: int, rows: int, cols: int) -> "SplitGeometry":
        if rows < 1 or cols < 1 or width % cols or height % rows:
            raise DocumentError("invalid split")
        return cls(rows, cols, width // cols, height // rows)

    @classmethod
    def near_square(cls, width: int, height: int, n: int) -> "SplitGeometry":
        """Square grid when n is a perfect square, else the rows x cols grid with rows <= cols closest to square."""
        if n < 1:
            raise DocumentError("invalid split")
        rows = max(r for r in range(1, math.isqrt(n) + 1) if n % r == 0)
        return cls.grid(width, height, rows, n // rows)

    def region(self, index: int) -> tuple[int, int]:
        """Top-left (x, y) of 1-based part ``index``."""
        if not 1 <= index <= self.n:
            raise IndexError(index)
        r, c = divmod(index - 1, self.cols)
        return c * self.part_width, r * self.part_height


def split(doc: Document, parts: int | SplitGeometry) -> list[Document]:
    """Cut ``doc`` into tiles in row-major order."""
    geom = parts if isinstance(parts, SplitGeometry) else SplitGeometry.square(doc.width, doc.height, parts)
    if (geom.width, geom.height) != (doc.width, doc.height):
        raise DocumentError("invalid split")
    if geom.n == 1:
        return [doc]
    px = doc.pixels
    ph, pw = geom.part_height, geom.part_width
    return [Document(px[r * ph:(r + 1) * ph, c * pw:(c + 1) * pw])
            for r in range(geom.rows) for c in range(geom.cols)]


def join(parts: Sequence[Document], geometry: SplitGeometry) -> Document:
    if len(parts) != geometry.n:
        raise DocumentError("invalid join")
    for p in parts:
        if (p.width, p.height) != (geometry.part_width, geometry.part_height):
            raise DocumentError("invalid join")
    rows = [np.hstack([parts[r * geometry.cols + c].pixels for c in range(geometry.cols)])
            for r in range(geometry.rows)]
    return Document(np.vstack(rows))


def concat(docs: Sequence[Document]) -> tuple[Document, list[tuple[int, int, int, int]]]:
    """Place documents side by side; returns the composite and each (x, y, w, h) region."""
    if not docs:
        raise DocumentError("nothing to concatenate")
    height = docs[0].height
    if any(d.height != height for d in docs):
        raise DocumentError("concatenated documents must share a height")
    regions, x = [], 0
    for d in docs:
        regions.append((x, 0, d.width, d.height))
        x += d.width
    return Document(np.hstack([d.pixels for d in docs])), regions


def random_document(rng: np.random.Generator, width: int = 512, height: int = 512) -> Document:
    """Synthetic natural-looking test image: smooth structure plus fine texture.

    White noise makes a poor stand-in for photographs; its DCT spectrum is flat,
    so the largest coefficients carry little more energy than the rest.
    """
    from scipy.ndimage import gaussian_filter

    base = np.zeros((height, width))
    for sigma, weight in ((max(width, height) / 8, 1.0), (max(width, height) / 32, 0.5), (2.0, 0.25)):
        layer = gaussian_filter(rng.standard_normal((height, width)), sigma, mode="wrap")
        base += weight * layer / (layer.std() + 1e-12)
    yy, xx = np.mgrid[0:height, 0:width]
    fx, fy = rng.uniform(1, 6, size=2)
    base += 0.6 * np.sin(2 * np.pi * (fx * xx / width + fy * yy / height) + rng.uniform(0, 2 * np.pi))
    base = (base - base.min()) / (base.max() - base.min() + 1e-12)
    texture = rng.normal(0.0, 4.0, size=(height, width))
    px = 24.0 + base * 208.0 + texture
    return Document(np.clip(np.rint(px), 0, 255).astype(np.uint8))
