"""Embedding tables and their text/binary file formats.

Text: ``count dim`` on the first line, then ``id v_1 ... v_dim`` per row.
Binary: ``b"LUEM"``, u32 version, u64 count, u64 dim, a table of
length-prefixed (u64) UTF-8 ids, then ``count * dim`` float32 values,
row-major, all little-endian.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, MissingEmbeddingError, ValidationError

MAGIC = b"LUEM"
VERSION = 1
ENTITY_KINDS = ("user", "item", "node")


@dataclass(frozen=True, eq=False)
class EmbeddingTable:
    ids: tuple
    vectors: np.ndarray
    entity_kind: str = "node"

    def __post_init__(self):
        V = np.array(self.vectors, dtype=np.float64)
        if V.ndim != 2 or V.shape[0] != len(self.ids):
            raise ValidationError("vectors must be an (n_ids, dim) matrix")
        if not np.all(np.isfinite(V)):
            raise ValidationError("embedding components must be finite")
        if self.entity_kind not in ENTITY_KINDS:
            raise ValidationError(f"entity_kind must be one of {ENTITY_KINDS}")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate ids in embedding table")
        V.setflags(write=False)
        object.__setattr__(self, "ids", tuple(str(s) for s in self.ids))
        object.__setattr__(self, "vectors", V)
        object.__setattr__(self, "_index", {s: k for k, s in enumerate(self.ids)})

    def __len__(self):
        return len(self.ids)

    def __contains__(self, key):
        return key in self._index

    @property
    def dim(self):
        return self.vectors.shape[1]

    def vector(self, key):
        k = self._index.get(key)
        if k is None:
            raise MissingEmbeddingError(f"no embedding for {key!r}")
        return self.vectors[k]

    def get(self, key, default=None):
        k = self._index.get(key)
        return default if k is None else self.vectors[k]

    def select(self, prefix, kind, strip=True):
        """Rows whose id starts with ``prefix``, optionally with the prefix removed."""
        keep = [k for k, s in enumerate(self.ids) if s.startswith(prefix)]
        ids = [self.ids[k][len(prefix):] if strip else self.ids[k] for k in keep]
        return EmbeddingTable(tuple(ids), self.vectors[keep], kind)

    def matrix_for(self, ids):
        """Stack vectors for ``ids``; rows for unknown ids are zero and flagged in the mask."""
        out = np.zeros((len(ids), self.dim))
        mask = np.zeros(len(ids), dtype=bool)
        for r, key in enumerate(ids):
            k = self._index.get(key)
            if k is not None:
                out[r] = self.vectors[k]
                mask[r] = True
        return out, mask

    def quantized(self):
        """Copy with every component rounded to float32, as stored in the binary format."""
        return EmbeddingTable(self.ids, self.vectors.astype(np.float32).astype(np.float64), self.entity_kind)

    def equals(self, other):
        return (
            self.ids == other.ids
            and self.entity_kind == other.entity_kind
            and np.array_equal(self.vectors, other.vectors)
        )


def save_text(table, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(table)} {table.dim}\n")
        for key, row in zip(table.ids, table.vectors):
            if any(c.isspace() for c in key):
                raise FormatError(f"id {key!r} contains whitespace; use the binary format")
            fh.write(key + " " + " ".join(repr(float(v)) for v in row) + "\n")


def save_binary(table, path):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQQ", VERSION, len(table), table.dim))
        for key in table.ids:
            b = key.encode("utf-8")
            fh.write(struct.pack("<Q", len(b)))
            fh.write(b)
        fh.write(np.ascontiguousarray(table.vectors, dtype="<f4").tobytes())


def save_embeddings(table, path, binary=None):
    """Write ``table``; the format follows ``binary`` or else the file suffix (``.txt`` = text)."""
    if binary is None:
        binary = Path(path).suffix != ".txt"
    (save_binary if binary else save_text)(table, path)


def _load_binary(fh, kind):
    head = fh.read(20)
    if len(head) != 20:
        raise FormatError("truncated embedding header")
    version, count, dim = struct.unpack("<IQQ", head)
    if version != VERSION:
        raise FormatError(f"unsupported embedding format version {version}")
    ids = []
    for r in range(count):
        raw = fh.read(8)
        if len(raw) != 8:
            raise FormatError(f"truncated id table at row {r}")
        (n,) = struct.unpack("<Q", raw)
        b = fh.read(n)
        if len(b) != n:
            raise FormatError(f"truncated id table at row {r}")
        ids.append(b.decode("utf-8"))
    data = fh.read()
    if len(data) != 4 * count * dim:
        raise FormatError(f"expected {count * dim} float32 values, found {len(data) // 4}")
    V = np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(count, dim)
    if not np.all(np.isfinite(V)):
        bad = int(np.flatnonzero(~np.isfinite(V).all(axis=1))[0])
        raise FormatError(f"non-finite value in row {bad}")
    return EmbeddingTable(tuple(ids), V, kind)


def _load_text(fh, kind):
    header = fh.readline().split()
    if len(header) != 2:
        raise FormatError("line 1: expected 'count dim'")
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError:
        raise FormatError("line 1: count and dim must be integers") from None
    ids, rows = [], []
    for lineno, line in enumerate(fh, start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != dim + 1:
            raise FormatError(f"line {lineno}: expected {dim} values, got {len(parts) - 1}")
        try:
            vals = [float(v) for v in parts[1:]]
        except ValueError:
            raise FormatError(f"line {lineno}: non-numeric value") from None
        if not all(np.isfinite(vals)):
            raise FormatError(f"line {lineno}: non-finite value")
        ids.append(parts[0])
        rows.append(vals)
    if len(ids) != count:
        raise FormatError(f"header declares {count} rows, found {len(ids)}")
    return EmbeddingTable(tuple(ids), np.array(rows, dtype=np.float64).reshape(count, dim), kind)


def load_embeddings(path, entity_kind="node"):
    """Read a table written by :func:`save_embeddings`; the format is detected from the magic bytes."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"embedding file not found: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic == MAGIC:
            return _load_binary(fh, entity_kind)
    with open(path, encoding="utf-8") as fh:
        return _load_text(fh, entity_kind)
