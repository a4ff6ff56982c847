"""Binary shard file format.

Layout (all integers little-endian):

    magic  "PDRL"
    u16    version = 1
    u16    table name length, then the name bytes
    u32    field count
           per field: u16 name length + bytes, u8 type tag, u8 nullable
    per field, in schema order:
           u8 representation tag (0 sorted array, 1 trie)
           u64 payload length, payload
    u32    chunk count
           per chunk: u32 row count
             per field: u32 chunk-dict entry count, that many u32 global-ids,
                        u8 elements variant tag, elements payload
    u8     checksum algorithm tag (1 = xxh64)
    u64    checksum over every preceding byte (tag included)
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np
import xxhash

from .encoding import (
    Chunk,
    ChunkDictionary,
    ColumnChunk,
    ElementsEncoding,
    GlobalDictionary,
    Shard,
    expected_payload_size,
)
from .errors import ChecksumError, MagicError, StoreError, TruncatedError, VersionError
from .trie import TrieDictionary
from .values import Field, Kind, Schema

MAGIC = b"PDRL"
VERSION = 1
CHECKSUM_XXH64 = 1

_KIND_TAGS = {Kind.STR: 0, Kind.I64: 1, Kind.F64: 2, Kind.DATE: 3, Kind.TIMESTAMP: 4}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


def _dict_payload(gdict: GlobalDictionary) -> bytes:
    if gdict.representation == GlobalDictionary.REPR_TRIE:
        return gdict.trie.serialize()
    out = bytearray()
    values = gdict.non_null_values()
    out.append(1 if gdict.has_null else 0)
    out += struct.pack("<I", len(values))
    kind = gdict.kind
    if kind is Kind.STR:
        for v in values:
            b = v.encode("utf-8")
            out += struct.pack("<I", len(b))
            out += b
    elif kind is Kind.F64:
        out += np.asarray(values, dtype="<f8").tobytes()
    else:
        out += np.asarray(values, dtype="<i8").tobytes()
    return bytes(out)


def _parse_array_dict(payload: bytes, kind: Kind) -> GlobalDictionary:
    r = _Reader(payload)
    has_null = bool(r.u8())
    count = r.u32()
    if kind is Kind.STR:
        values = [r.take(r.u32()).decode("utf-8") for _ in range(count)]
    elif kind is Kind.F64:
        values = [float(v) for v in np.frombuffer(r.take(8 * count), dtype="<f8")]
    else:
        values = [int(v) for v in np.frombuffer(r.take(8 * count), dtype="<i8")]
    return GlobalDictionary(kind, values, has_null)


def write_shard(shard: Shard, dest: BinaryIO) -> None:
    body = bytearray()
    body += MAGIC
    body += struct.pack("<H", VERSION)
    name = shard.schema.table.encode("utf-8")
    body += struct.pack("<H", len(name))
    body += name
    body += struct.pack("<I", len(shard.schema.fields))
    for f in shard.schema.fields:
        nb = f.name.encode("utf-8")
        body += struct.pack("<H", len(nb))
        body += nb
        body += struct.pack("<BB", _KIND_TAGS[f.kind], 1 if f.nullable else 0)
    for f in shard.schema.fields:
        gdict = shard.global_dicts[f.name]
        payload = _dict_payload(gdict)
        body += struct.pack("<BQ", gdict.representation, len(payload))
        body += payload
    body += struct.pack("<I", len(shard.chunks))
    for chunk in shard.chunks:
        body += struct.pack("<I", chunk.row_count)
        for f in shard.schema.fields:
            cc = chunk.columns[f.name]
            body += struct.pack("<I", len(cc.dict))
            body += cc.dict.global_ids.astype("<u4").tobytes()
            body += struct.pack("<B", cc.elems.tag)
            if cc.elems.payload is None:
                raise StoreError("cannot write a lazily loaded shard")
            body += cc.elems.payload
    body += struct.pack("<B", CHECKSUM_XXH64)
    digest = xxhash.xxh64_intdigest(bytes(body))
    body += struct.pack("<Q", digest)
    dest.write(bytes(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"file truncated: needed {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def read_shard(source, shard_id: int = 0, keep_payload: bool = True):
    """Parse a shard file; returns (Shard, elements offset index).

    With ``keep_payload=False`` the elements payloads are dropped and must
    be fetched later via the offset index (lazy mode for the cache layer).
    """
    data = source.read() if hasattr(source, "read") else bytes(source)
    if len(data) < 4 or data[:4] != MAGIC:
        raise MagicError("not a shard file (bad magic)")
    if len(data) < 15:
        raise TruncatedError("file shorter than the fixed header")
    algo = data[-9]
    stored = struct.unpack("<Q", data[-8:])[0]
    if algo != CHECKSUM_XXH64:
        raise ChecksumError(f"unknown checksum algorithm tag {algo}")
    actual = xxhash.xxh64_intdigest(data[:-8])
    if actual != stored:
        raise ChecksumError("checksum mismatch: file corrupt")

    r = _Reader(data[:-9])
    r.take(4)
    version = r.u16()
    if version != VERSION:
        raise VersionError(f"unsupported shard format version {version}")
    table = r.take(r.u16()).decode("utf-8")
    n_fields = r.u32()
    fields = []
    for _ in range(n_fields):
        fname = r.take(r.u16()).decode("utf-8")
        tag = r.u8()
        nullable = bool(r.u8())
        if tag not in _TAG_KINDS:
            raise StoreError(f"unknown type tag {tag}")
        fields.append(Field(fname, _TAG_KINDS[tag], nullable))
    schema = Schema(table, fields)

    gdicts = {}
    for f in fields:
        rep = r.u8()
        length = r.u64()
        payload = r.take(length)
        if rep == GlobalDictionary.REPR_TRIE:
            gdicts[f.name] = GlobalDictionary(
                f.kind, None, False, trie=TrieDictionary.deserialize(payload)
            )
        elif rep == GlobalDictionary.REPR_ARRAY:
            gdicts[f.name] = _parse_array_dict(payload, f.kind)
        else:
            raise StoreError(f"unknown dictionary representation {rep}")

    n_chunks = r.u32()
    chunks = []
    elems_index = {}
    for ci in range(n_chunks):
        row_count = r.u32()
        columns = {}
        for f in fields:
            n_entries = r.u32()
            gids = np.frombuffer(r.take(4 * n_entries), dtype="<u4")
            tag = r.u8()
            size = expected_payload_size(tag, row_count)
            offset = r.pos
            payload = r.take(size)
            elems_index[(f.name, ci)] = (offset, size, tag)
            columns[f.name] = ColumnChunk(
                dict=ChunkDictionary(gids.copy()),
                elems=ElementsEncoding(tag, row_count, payload if keep_payload else None),
            )
        chunks.append(Chunk(chunk_id=ci, row_count=row_count, columns=columns))
    if r.pos != len(r.data):
        raise StoreError(f"{len(r.data) - r.pos} trailing bytes after chunk data")
    return Shard(shard_id, schema, gdicts, chunks), elems_index


def shards_equal(a: Shard, b: Shard) -> bool:
    """Structural equality over schema, dictionaries and chunk data."""
    if a.schema.table != b.schema.table or a.schema.fields != b.schema.fields:
        return False
    for f in a.schema.fields:
        da, db = a.global_dicts[f.name], b.global_dicts[f.name]
        if (da.has_null, da.representation, len(da)) != (db.has_null, db.representation, len(db)):
            return False
        if da.non_null_values() != db.non_null_values():
            return False
    if len(a.chunks) != len(b.chunks):
        return False
    for ca, cb in zip(a.chunks, b.chunks):
        if ca.row_count != cb.row_count:
            return False
        for f in a.schema.fields:
            xa, xb = ca.columns[f.name], cb.columns[f.name]
            if not np.array_equal(xa.dict.global_ids, xb.dict.global_ids):
                return False
            if xa.elems != xb.elems:
                return False
    return True
