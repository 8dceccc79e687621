"""Synthetic item embeddings and their on-disk store.

Dish vectors stand in for a production retrieval model: each taxonomy gets a
random unit centroid and each dish is a noisy copy of its taxonomy centroid,
so within-taxonomy similarity exceeds cross-taxonomy similarity by
construction.

File format (little-endian):
    bytes 0-3   magic b"CRES"
    bytes 4-7   u32 format version (currently 1)
    bytes 8-11  u32 dim
    bytes 12-15 u32 record count
    then per record: u64 dish id, dim * f32 vector components
Vectors are quantized to f32 on disk; the loader renormalizes, so a loaded
store satisfies the same unit-norm fixed-point property as a built one.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .._util import float_repr, rng_for
from ..errors import ConfigError, DegenerateEmbeddingError, MissingEmbeddingError, StoreFormatError
from ..marketplace.types import Marketplace

MAGIC = b"CRES"
FORMAT_VERSION = 1

_RNG_STREAM = 0xE3BD


def normalize(vector: np.ndarray) -> np.ndarray:
    """Scale to unit norm, iterated to a floating-point fixed point.

    Repeats v <- v/||v|| until the result stops changing, so normalizing an
    already-normalized vector returns it bit-identically. This is what makes
    singleton aggregation (mean of one vector) an exact identity.
    """
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if not norm > 1e-12:
        raise DegenerateEmbeddingError(
            "cannot normalize a (near-)zero vector; aggregate is degenerate"
        )
    for _ in range(8):
        u = v / np.linalg.norm(v)
        if np.array_equal(u, v):
            return v
        v = u
    return v


class EmbeddingStore:
    """Immutable map dish_id -> unit vector, with dense array access."""

    def __init__(self, dim: int, ids: np.ndarray, vectors: np.ndarray):
        if dim < 2:
            raise ConfigError(f"embedding dim must be >= 2, got {dim}")
        ids = np.asarray(ids, dtype=np.int64)
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.shape != (len(ids), dim):
            raise ValueError("vectors shape does not match (len(ids), dim)")
        order = np.argsort(ids)
        self.dim = dim
        self.ids = ids[order]
        self.vectors = vectors[order]
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("duplicate dish ids in embedding store")
        self._row: dict[int, int] = {int(i): r for r, i in enumerate(self.ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, dish_id: int) -> bool:
        return int(dish_id) in self._row

    def vector(self, dish_id: int) -> np.ndarray:
        try:
            return self.vectors[self._row[int(dish_id)]]
        except KeyError:
            raise MissingEmbeddingError(f"no embedding for dish {dish_id}") from None

    def rows(self, dish_ids) -> np.ndarray:
        """Stacked vectors for a sequence of dish ids."""
        try:
            idx = [self._row[int(d)] for d in dish_ids]
        except KeyError as e:
            raise MissingEmbeddingError(f"no embedding for dish {e.args[0]}") from None
        return self.vectors[idx]


def build_item_embeddings(
    market: Marketplace, dim: int, seed: int, noise_scale: float = 0.25
) -> EmbeddingStore:
    """One unit vector per dish: normalize(taxonomy centroid + noise).

    ``noise_scale`` is the per-component Gaussian sigma; 0 collapses every
    taxonomy onto its centroid.
    """
    if dim < 2:
        raise ConfigError(f"embedding dim must be >= 2, got {dim}")
    if noise_scale < 0:
        raise ConfigError("noise_scale must be >= 0")
    rng = rng_for(seed, _RNG_STREAM)
    centroids = {}
    for t in market.taxonomies:
        centroids[t] = normalize(rng.standard_normal(dim))
    ids = np.asarray([d.id for d in market.dishes], dtype=np.int64)
    vectors = np.empty((len(ids), dim))
    for i, dish in enumerate(market.dishes):
        raw = centroids[dish.taxonomy_id] + noise_scale * rng.standard_normal(dim)
        vectors[i] = normalize(raw)
    return EmbeddingStore(dim, ids, vectors)


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    path = Path(path)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", FORMAT_VERSION, store.dim, len(store)))
        for dish_id, vec in zip(store.ids, store.vectors):
            f.write(struct.pack("<Q", int(dish_id)))
            f.write(vec.astype("<f4").tobytes())


def load_store(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise StoreFormatError(f"{path}: not an embedding store (bad magic)")
    version, dim, count = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"{path}: unsupported store version {version}")
    record = 8 + 4 * dim
    expected = 16 + count * record
    if len(blob) != expected:
        raise StoreFormatError(
            f"{path}: truncated or oversized store ({len(blob)} bytes, expected {expected})"
        )
    ids = np.empty(count, dtype=np.int64)
    vectors = np.empty((count, dim))
    for r in range(count):
        off = 16 + r * record
        (ids[r],) = struct.unpack_from("<Q", blob, off)
        raw = np.frombuffer(blob, dtype="<f4", count=dim, offset=off + 8)
        vectors[r] = normalize(raw.astype(np.float64))
    return EmbeddingStore(dim, ids, vectors)


def export_text(store: EmbeddingStore, path: str | Path) -> None:
    """Debug export: one line per dish, id then components in full precision."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(f"# embedding store dim={store.dim} count={len(store)}\n")
        for dish_id, vec in zip(store.ids, store.vectors):
            comps = " ".join(float_repr(x) for x in vec)
            f.write(f"{int(dish_id)} {comps}\n")
