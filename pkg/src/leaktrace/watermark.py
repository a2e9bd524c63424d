"""Spread-spectrum robust watermarking in the full-frame DCT domain.

A mark is a unit-variance Gaussian sequence ``x`` applied multiplicatively to the
``m`` largest-magnitude AC coefficients of the original::

    v'_t = v_t * (1 + alpha * x_t)

Detection is non-blind: the original is needed both to locate the marked
coefficients and to recover ``x*_t = (v'_t - v_t) / (alpha * v_t)``.  The
detector statistic ``<x, x*> / |x*|`` is standard normal for any sequence that
is independent of ``x*``, so the false-positive rate of threshold ``T`` is the
Gaussian tail ``Q(T)``.
"""

from __future__ import annotations

import enum
import hashlib
import hmac
import math
import secrets
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dctn, idctn

from .document import Document, DocumentError

KEY_BYTES = 32
SKIP_BELOW = 1e-6
# Recovered mark values are clamped to +-X_STAR_CLIP before correlating.  A genuine
# unit-variance mark almost never exceeds it; larger values come from later marks
# divided by small coefficients.  Clamping depends on x* alone, so the null
# distribution of the score (x independent of x*) is unchanged.
X_STAR_CLIP = 5.0


class CapacityError(ValueError):
    pass


@dataclass(frozen=True)
class WatermarkKey:
    secret: bytes = field(repr=False)

    def __post_init__(self):
        if len(self.secret) != KEY_BYTES:
            raise ValueError(f"watermark key must be {KEY_BYTES} bytes")

    def hex(self) -> str:
        return self.secret.hex()

    @classmethod
    def fromhex(cls, text: str) -> "WatermarkKey":
        return cls(bytes.fromhex(text))


def wm_keygen(rng_seed: bytes | None = None) -> WatermarkKey:
    """Fresh watermarking key; deterministic when a 32-byte seed is given."""
    if rng_seed is None:
        return WatermarkKey(secrets.token_bytes(KEY_BYTES))
    if len(rng_seed) != KEY_BYTES:
        raise ValueError("seed must be 32 bytes")
    return WatermarkKey(hashlib.sha256(b"leaktrace/wm-keygen\x00" + rng_seed).digest())


@dataclass(frozen=True)
class WatermarkDescriptor:
    payload: bytes
    key: WatermarkKey
    part_index: int | None = None

    @classmethod
    def bit(cls, j: int, key: WatermarkKey, part_index: int) -> "WatermarkDescriptor":
        if j not in (0, 1):
            raise ValueError("part watermark must be a single bit")
        return cls(bytes([j]), key, part_index)

    def seed(self) -> bytes:
        idx = b"\xff" * 8 if self.part_index is None else struct.pack(">Q", self.part_index)
        msg = b"leaktrace/mark\x00" + struct.pack(">I", len(self.payload)) + self.payload + idx
        return hmac.new(self.key.secret, msg, hashlib.sha256).digest()

    def sequence(self, m: int) -> np.ndarray:
        gen = np.random.Generator(np.random.PCG64(int.from_bytes(self.seed(), "big")))
        return gen.standard_normal(m)


@dataclass(frozen=True)
class EmbedConfig:
    alpha: float = 0.1
    m: int = 1000
    threshold: float = 6.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if self.m < 16:
            raise ValueError("m must be at least 16")


# Whole documents use the classic Cox threshold.  Parts use a slightly lower
# one: the null statistic is N(0, 1) whatever m is, so Q(5.0) ~ 2.9e-7 per test,
# while a clean part scores about sqrt(m) >= 11.
DOCUMENT_CONFIG = EmbedConfig(alpha=0.1, m=1000, threshold=6.0)
PART_CONFIG = EmbedConfig(alpha=0.1, m=128, threshold=5.0)


@dataclass(frozen=True)
class WatermarkSettings:
    """Embedding parameters for whole documents and for split parts.

    With ``scale_parts`` the part mark length grows with tile area (one mark
    per eight pixels, never below ``part.m``) so that re-marked parts of large
    tiles stay detectable after later hops add their own marks.
    """

    document: EmbedConfig = DOCUMENT_CONFIG
    part: EmbedConfig = PART_CONFIG
    scale_parts: bool = True

    def part_config(self, part_width: int, part_height: int) -> EmbedConfig:
        if not self.scale_parts:
            return self.part
        area = part_width * part_height
        m = min(max(self.part.m, area // 8), area - 1)
        return EmbedConfig(self.part.alpha, m, self.part.threshold)

    def to_dict(self) -> dict:
        out = {name: {"alpha": c.alpha, "m": c.m, "threshold": c.threshold}
               for name, c in (("document", self.document), ("part", self.part))}
        out["scale_parts"] = self.scale_parts
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "WatermarkSettings":
        return cls(EmbedConfig(**data["document"]), EmbedConfig(**data["part"]),
                   data.get("scale_parts", True))


DEFAULT_SETTINGS = WatermarkSettings()


def _min_marks(desc: WatermarkDescriptor) -> int:
    return 64 if desc.part_index is None else 16


def _positions(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Flat indices of the m largest-magnitude AC coefficients, in a fixed order."""
    mags = np.abs(coeffs).ravel()
    if mags.size - 1 < m:
        raise CapacityError("insufficient capacity")
    mags = mags.copy()
    mags[0] = -1.0  # DC is never marked
    kth = np.partition(mags, mags.size - m)[mags.size - m]
    above = np.flatnonzero(mags > kth)
    ties = np.flatnonzero(mags == kth)[: m - above.size]
    idx = np.concatenate([above, ties])
    return idx[np.lexsort((idx, -mags[idx]))]


def _dct(doc: Document) -> np.ndarray:
    return dctn(doc.as_float(), norm="ortho")


def embed(doc: Document, desc: WatermarkDescriptor, cfg: EmbedConfig = DOCUMENT_CONFIG) -> Document:
    """Return ``doc`` carrying the mark described by ``desc``; deterministic."""
    if cfg.m < _min_marks(desc):
        raise ValueError(f"m must be at least {_min_marks(desc)} for this carrier")
    coeffs = _dct(doc)
    pos = _positions(coeffs, cfg.m)
    flat = coeffs.ravel()
    flat[pos] *= 1.0 + cfg.alpha * desc.sequence(cfg.m)
    out = idctn(coeffs, norm="ortho")
    return Document(np.clip(np.rint(out), 0, 255).astype(np.uint8))


def _recover(suspect: Document, original: Document, cfg: EmbedConfig) -> tuple[np.ndarray, np.ndarray]:
    """Recovered mark estimate and a mask of usable coefficients."""
    if suspect.shape != original.shape:
        raise DocumentError("incomparable documents")
    v = _dct(original).ravel()
    pos = _positions(v.reshape(original.shape), cfg.m)
    v_orig = v[pos]
    v_susp = _dct(suspect).ravel()[pos]
    usable = np.abs(v_orig) >= SKIP_BELOW
    x_star = np.zeros(cfg.m)
    x_star[usable] = (v_susp[usable] - v_orig[usable]) / (cfg.alpha * v_orig[usable])
    return x_star, usable


def _score(x: np.ndarray, x_star: np.ndarray, usable: np.ndarray) -> float:
    xs = np.clip(x_star[usable], -X_STAR_CLIP, X_STAR_CLIP)
    norm = math.sqrt(float(xs @ xs))
    if norm == 0.0:
        return 0.0
    return float(x[usable] @ xs) / norm


def correlation(suspect: Document, desc: WatermarkDescriptor, original: Document,
                cfg: EmbedConfig = DOCUMENT_CONFIG) -> float:
    """Normalised correlation between the mark of ``desc`` and what ``suspect`` carries."""
    x_star, usable = _recover(suspect, original, cfg)
    return _score(desc.sequence(cfg.m), x_star, usable)


def detect(suspect: Document, desc: WatermarkDescriptor, original: Document,
           cfg: EmbedConfig = DOCUMENT_CONFIG) -> bool:
    return correlation(suspect, desc, original, cfg) >= cfg.threshold


class PartBit(enum.Enum):
    ZERO = "zero"
    ONE = "one"
    NONE = "none"
    BOTH = "both"

    @property
    def bit(self) -> int | None:
        return {PartBit.ZERO: 0, PartBit.ONE: 1}.get(self)


def part_scores(part: Document, key: WatermarkKey, part_index: int, original_part: Document,
                cfg: EmbedConfig = PART_CONFIG) -> tuple[float, float]:
    x_star, usable = _recover(part, original_part, cfg)
    return tuple(_score(WatermarkDescriptor.bit(j, key, part_index).sequence(cfg.m), x_star, usable)
                 for j in (0, 1))


def classify(scores: tuple[float, float], threshold: float) -> PartBit:
    zero, one = (s >= threshold for s in scores)
    if zero and one:
        return PartBit.BOTH
    if zero:
        return PartBit.ZERO
    if one:
        return PartBit.ONE
    return PartBit.NONE


def detect_part_bit(part: Document, key: WatermarkKey, part_index: int, original_part: Document,
                    cfg: EmbedConfig = PART_CONFIG) -> PartBit:
    """Try both bit marks on one part and report which are present."""
    return classify(part_scores(part, key, part_index, original_part, cfg), cfg.threshold)
