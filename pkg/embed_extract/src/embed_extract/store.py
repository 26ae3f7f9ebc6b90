"""Binary ``EMBD`` embedding store: the wire format shared with the
compatibility engine.

Layout (little-endian): magic ``EMBD``, version u16 = 1, dim u32,
count u64; then per record: id_len u16, id UTF-8 bytes, dim x f32.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

MAGIC = b"EMBD"
VERSION = 1


class StoreFormatError(Exception):
    """Structural problem in an EMBD file."""


def write_store(vectors: dict[str, np.ndarray], dim: int, path) -> None:
    """Write atomically: serialize to a temp file, then rename into place."""
    path = Path(path)
    for item_id, vec in vectors.items():
        if vec.shape != (dim,):
            raise ValueError(f"{item_id}: vector shape {vec.shape} != ({dim},)")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"{item_id}: vector contains non-finite values")

    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".embd.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<H", VERSION))
            fh.write(struct.pack("<I", dim))
            fh.write(struct.pack("<Q", len(vectors)))
            for item_id, vec in vectors.items():
                encoded = item_id.encode("utf-8")
                fh.write(struct.pack("<H", len(encoded)))
                fh.write(encoded)
                fh.write(np.asarray(vec, dtype="<f4").tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) < n:
        raise StoreFormatError(f"truncated store while reading {what}")
    return buf


def read_store(path) -> tuple[int, dict[str, np.ndarray]]:
    """Return (dim, item_id -> float32 vector), preserving record order."""
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise StoreFormatError(f"{path}: bad magic (not an EMBD store)")
        (version,) = struct.unpack("<H", _read_exact(fh, 2, "version"))
        if version != VERSION:
            raise StoreFormatError(f"{path}: unsupported version {version}")
        (dim,) = struct.unpack("<I", _read_exact(fh, 4, "dim"))
        (count,) = struct.unpack("<Q", _read_exact(fh, 8, "count"))
        vectors: dict[str, np.ndarray] = {}
        for record in range(count):
            (id_len,) = struct.unpack(
                "<H", _read_exact(fh, 2, f"id length of record {record}"))
            item_id = _read_exact(fh, id_len, f"id of record {record}").decode("utf-8")
            payload = _read_exact(fh, 4 * dim, f"vector of record {record}")
            if item_id in vectors:
                raise StoreFormatError(f"{path}: duplicate id {item_id!r} "
                                       f"at record {record}")
            vectors[item_id] = np.frombuffer(payload, dtype="<f4").copy()
        if fh.read(1):
            raise StoreFormatError(f"{path}: trailing bytes after {count} records")
    return dim, vectors
