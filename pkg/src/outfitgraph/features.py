"""Text one-hot encoding and the binary embedding store.

The on-disk ``EMBD`` store is the contract shared with the offline image
extractor: little-endian, magic ``EMBD``, version u16 = 1, dim u32,
count u64, then per record id_len u16, id UTF-8 bytes, dim float32 values.
"""

from __future__ import annotations

import re
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .data import Item
from .errors import FeatureLookupError, FormatError

STORE_MAGIC = b"EMBD"
STORE_VERSION = 1

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")

MODALITIES = ("visual", "textual", "multimodal")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, drop empty tokens."""
    return [t for t in _TOKEN_SPLIT.split(text.lower()) if t]


@dataclass(frozen=True)
class Vocabulary:
    words: tuple[str, ...]

    @property
    def index(self) -> dict[str, int]:
        return {w: i for i, w in enumerate(self.words)}

    def __len__(self) -> int:
        return len(self.words)


def build_vocabulary(items: list[Item], min_frequency: int = 1) -> Vocabulary:
    """Corpus token counts -> tokens with frequency >= min_frequency.

    Ordering is descending frequency, ties lexicographic, so the result is
    invariant to input item order.
    """
    counts: Counter = Counter()
    for item in items:
        counts.update(tokenize(item.name))
    kept = [(w, n) for w, n in counts.items() if n >= min_frequency]
    kept.sort(key=lambda wn: (-wn[1], wn[0]))
    return Vocabulary(tuple(w for w, _ in kept))


def encode_text(item: Item, vocab: Vocabulary) -> np.ndarray:
    """Presence-indicator vector over the vocabulary (0/1 floats)."""
    vec = np.zeros(len(vocab))
    index = vocab.index
    for token in tokenize(item.name):
        pos = index.get(token)
        if pos is not None:
            vec[pos] = 1.0
    return vec


@dataclass
class EmbeddingStore:
    """In-memory float64 vectors keyed by item id; float32 on disk."""

    dim: int
    vectors: dict[str, np.ndarray]

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.vectors

    def get(self, item_id: str, modality: str = "embedding") -> np.ndarray:
        try:
            return self.vectors[item_id]
        except KeyError:
            raise FeatureLookupError(item_id, modality) from None


def write_store(store: EmbeddingStore, path) -> None:
    if store.dim <= 0:
        raise ValueError("store dim must be positive")
    with open(path, "wb") as fh:
        fh.write(STORE_MAGIC)
        fh.write(struct.pack("<HIQ", STORE_VERSION, store.dim, len(store.vectors)))
        for item_id, vec in store.vectors.items():
            if vec.shape != (store.dim,):
                raise ValueError(f"vector for {item_id!r} has shape {vec.shape}")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"non-finite vector for {item_id!r}")
            encoded = item_id.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(vec.astype("<f4").tobytes())


def read_store(path) -> EmbeddingStore:
    with open(path, "rb") as fh:
        header = fh.read(18)
        if len(header) < 18 or header[:4] != STORE_MAGIC:
            raise FormatError(f"{path}: not an embedding store (bad magic)")
        version, dim, count = struct.unpack("<HIQ", header[4:])
        if version != STORE_VERSION:
            raise FormatError(f"{path}: unsupported store version {version}")
        if dim == 0:
            raise FormatError(f"{path}: zero dimension")
        vectors: dict[str, np.ndarray] = {}
        for record in range(count):
            len_bytes = fh.read(2)
            if len(len_bytes) < 2:
                raise FormatError(f"{path}: truncated at record {record} (id length)")
            (id_len,) = struct.unpack("<H", len_bytes)
            id_bytes = fh.read(id_len)
            if len(id_bytes) < id_len:
                raise FormatError(f"{path}: truncated at record {record} (id)")
            payload = fh.read(4 * dim)
            if len(payload) < 4 * dim:
                raise FormatError(f"{path}: truncated at record {record} (payload)")
            item_id = id_bytes.decode("utf-8")
            if item_id in vectors:
                raise FormatError(f"{path}: duplicate id {item_id!r} at record {record}")
            vectors[item_id] = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return EmbeddingStore(dim=dim, vectors=vectors)


@dataclass(frozen=True)
class ModalityConfig:
    mode: str
    beta: float = 0.2

    def __post_init__(self):
        if self.mode not in MODALITIES:
            raise ValueError(f"unknown modality {self.mode!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")

    def channels(self) -> list[tuple[str, float]]:
        """(channel name, fusion coefficient) pairs for score combination."""
        if self.mode == "visual":
            return [("visual", 1.0)]
        if self.mode == "textual":
            return [("textual", 1.0)]
        return [("visual", self.beta), ("textual", 1.0 - self.beta)]


def get_features(item_id: str, config: ModalityConfig, stores: dict[str, EmbeddingStore]):
    """Fetch the vector(s) an item contributes under the given modality."""
    if config.mode == "multimodal":
        return (
            stores["visual"].get(item_id, "visual"),
            stores["textual"].get(item_id, "textual"),
        )
    return stores[config.mode].get(item_id, config.mode)


def text_store(items: list[Item], vocab: Vocabulary) -> EmbeddingStore:
    """Encode every item name into one store (dim = vocabulary size)."""
    vectors = {item.item_id: encode_text(item, vocab) for item in items}
    return EmbeddingStore(dim=len(vocab), vectors=vectors)
