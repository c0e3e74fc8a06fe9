"""Per-token feature matrices: hashed text + page-relative layout.

The hashed encoder is the deterministic stand-in for a language-model
backbone; its text block hashes character n-grams with sign hashing and
its 8-slot layout block carries page-normalised box coordinates. The
external mode instead loads pre-computed embeddings from the ``.lgem``
binary format documented in the README (magic ``LGEM``, version 1,
little-endian u32 n and d, float32 row-major payload, optional 32-byte
sha256 of the document id).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, DataError, FormatError, ParameterError
from .geometry import Document, Quad, aabb, centroid

LGEM_MAGIC = b"LGEM"
LGEM_VERSION = 1
LAYOUT_DIM = 8


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    n: int
    d: int
    values: np.ndarray  # float64 (n, d), read-only

    def __post_init__(self):
        if self.values.shape != (self.n, self.d):
            raise ParameterError(f"feature matrix shape {self.values.shape} != ({self.n},{self.d})")
        if self.values.size and not np.isfinite(self.values).all():
            raise DataError("non-finite feature values")
        self.values.flags.writeable = False


@dataclass(frozen=True)
class EncoderConfig:
    mode: str = "hashed"  # hashed | external
    d: int = 64
    ngram_range: tuple[int, int] = (1, 3)
    hash_seed: int = 0
    include_layout: bool = True
    normalize_coords_to: int = 1000
    external_dir: str | None = None

    def __post_init__(self):
        if self.mode not in ("hashed", "external"):
            raise ParameterError(f"unknown encoder mode {self.mode!r}")
        if self.include_layout and self.d < LAYOUT_DIM:
            raise ParameterError(f"d must be >= {LAYOUT_DIM} with layout features, got {self.d}")
        lo, hi = self.ngram_range
        if not (1 <= lo <= hi):
            raise ParameterError(f"bad ngram range {self.ngram_range}")

    @property
    def d_text(self) -> int:
        return self.d - (LAYOUT_DIM if self.include_layout else 0)


def _hash_ngram(gram: str, seed: int) -> int:
    digest = hashlib.blake2b(
        gram.encode("utf-8"), digest_size=8, salt=seed.to_bytes(8, "little", signed=False)
    ).digest()
    return int.from_bytes(digest, "little")


def hashed_text_features(text: str, d_text: int, seed: int, ngram_range=(1, 3)) -> np.ndarray:
    """Sign-hashed character n-gram vector, L2-normalised unless all-zero."""
    if d_text < 1:
        raise ParameterError(f"d_text must be >= 1, got {d_text}")
    vec = np.zeros(d_text, dtype=np.float64)
    lo, hi = ngram_range
    for n in range(lo, hi + 1):
        for i in range(len(text) - n + 1):
            h = _hash_ngram(text[i : i + n], seed)
            bucket = h % d_text
            sign = 1.0 if h & (1 << 63) else -1.0
            vec[bucket] += sign
    norm = math.sqrt(float(vec @ vec))
    if norm > 0:
        vec /= norm
    return vec


def layout_features(box: Quad, page_w: float, page_h: float, normalize_to: int) -> np.ndarray:
    """[x0, y0, x1, y1, width, height, cx, cy] of the envelope, scaled onto a
    0..normalize_to grid over the page and mapped into 0..1. Out-of-page
    coordinates are kept, not clamped."""
    if page_w <= 0 or page_h <= 0:
        raise ParameterError(f"page dims must be positive, got {page_w}x{page_h}")
    bb = aabb(box)
    c = centroid(box)
    raw = np.array(
        [
            bb.x0 / page_w,
            bb.y0 / page_h,
            bb.x1 / page_w,
            bb.y1 / page_h,
            (bb.x1 - bb.x0) / page_w,
            (bb.y1 - bb.y0) / page_h,
            c.x / page_w,
            c.y / page_h,
        ],
        dtype=np.float64,
    )
    grid = float(normalize_to)
    return np.floor(raw * grid + 0.5) / grid


def encode_document(doc: Document, config: EncoderConfig) -> FeatureMatrix:
    """Feature matrix for one document under the given config."""
    if config.mode == "external":
        if config.external_dir is None:
            raise ParameterError("external mode needs external_dir")
        path = Path(config.external_dir) / f"{doc.id}.lgem"
        return load_external(path, doc.n_tokens, expected_doc_id=doc.id)
    n = doc.n_tokens
    rows = np.zeros((n, config.d), dtype=np.float64)
    d_text = config.d_text
    cache: dict[str, np.ndarray] = {}
    for i, tok in enumerate(doc.tokens):
        if d_text > 0:
            vec = cache.get(tok.text)
            if vec is None:
                vec = hashed_text_features(tok.text, d_text, config.hash_seed, config.ngram_range)
                cache[tok.text] = vec
            rows[i, :d_text] = vec
        if config.include_layout:
            rows[i, d_text:] = layout_features(
                tok.box, doc.page_width, doc.page_height, config.normalize_coords_to
            )
    return FeatureMatrix(n, config.d, rows)


def write_embeddings(path, values: np.ndarray, doc_id: str | None = None) -> None:
    """Write one ``.lgem`` file; the payload is cast to float32."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    n, d = arr.shape
    with open(path, "wb") as fh:
        fh.write(LGEM_MAGIC)
        fh.write(struct.pack("<III", LGEM_VERSION, n, d))
        fh.write(arr.tobytes())
        if doc_id is not None:
            fh.write(hashlib.sha256(doc_id.encode("utf-8")).digest())


def load_external(path, expected_n: int, expected_doc_id: str | None = None) -> FeatureMatrix:
    """Read a ``.lgem`` file, validating structure, size and payload."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read embedding file {path}: {exc}") from exc
    if len(blob) < 16:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:4] != LGEM_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}")
    version, n, d = struct.unpack("<III", blob[4:16])
    if version != LGEM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    payload = 4 * n * d
    extra = len(blob) - 16 - payload
    if extra not in (0, 32):
        raise FormatError(
            f"{path}: expected {16 + payload} or {16 + payload + 32} bytes, got {len(blob)}"
        )
    if n != expected_n:
        raise AlignmentError(f"{path}: file has {n} rows, document has {expected_n} tokens")
    if extra == 32 and expected_doc_id is not None:
        want = hashlib.sha256(expected_doc_id.encode("utf-8")).digest()
        if blob[16 + payload :] != want:
            raise AlignmentError(f"{path}: document-id hash mismatch")
    raw = np.frombuffer(blob, dtype="<f4", count=n * d, offset=16)
    values = raw.astype(np.float64).reshape(n, d)
    if values.size and not np.isfinite(values).all():
        raise DataError(f"{path}: non-finite embedding values")
    return FeatureMatrix(n, d, values)
