"""Double dictionary encoding: global dictionaries, chunk dictionaries,
bit-width-adaptive element arrays, chunks and shards.

A column's values are stored as ``global_dict(chunk_dict(elements[row]))``:
the global dictionary maps sorted distinct values to dense ranks
(global-ids), each chunk keeps the ascending list of global-ids that occur
in it (the chunk-dictionary), and the per-row payload is the index into the
chunk-dictionary (the chunk-id), stored at the smallest fixed width the
chunk's cardinality allows.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np

from .errors import SchemaError, StoreError
from .values import Kind, NUMERIC_KINDS, Schema, sort_key, value_matches_kind

# elements variant tags (also the on-disk tags)
ELEMS_CONST = 0
ELEMS_BITSET = 1
ELEMS_BYTES1 = 2
ELEMS_BYTES2 = 3
ELEMS_BYTES4 = 4

_WIDTH_DTYPE = {ELEMS_BYTES1: "<u1", ELEMS_BYTES2: "<u2", ELEMS_BYTES4: "<u4"}


def variant_for_cardinality(c: int) -> int:
    if c < 1:
        raise StoreError("chunk dictionary may not be empty")
    if c == 1:
        return ELEMS_CONST
    if c == 2:
        return ELEMS_BITSET
    if c <= 2**8:
        return ELEMS_BYTES1
    if c <= 2**16:
        return ELEMS_BYTES2
    return ELEMS_BYTES4


class GlobalDictionary:
    """Sorted distinct values of one column; a value's rank is its global-id.

    NULL, when present, is a distinguished entry occupying global-id 0.
    The backing representation is either a sorted array or a trie
    (strings only, see :mod:`skipstore.trie`).
    """

    REPR_ARRAY = 0
    REPR_TRIE = 1

    def __init__(self, kind: Kind, non_null_values, has_null: bool, trie=None):
        self.kind = kind
        self.has_null = has_null
        self.trie = trie
        if trie is not None:
            if kind is not Kind.STR:
                raise SchemaError("trie dictionaries hold strings only")
            self._values = None
            self._np = None
            self._count = trie.value_count + int(has_null)
        else:
            self._values = list(non_null_values)
            self._np = (
                np.asarray(self._values, dtype=np.float64 if kind is Kind.F64 else np.int64)
                if kind in NUMERIC_KINDS and self._values
                else None
            )
            self._count = len(self._values) + int(has_null)
        # instrumentation: how many id->value materializations happened
        self.value_lookups = 0

    @property
    def representation(self) -> int:
        return self.REPR_TRIE if self.trie is not None else self.REPR_ARRAY

    def __len__(self) -> int:
        return self._count

    def non_null_values(self) -> list:
        if self.trie is not None:
            return [self.trie.id_to_value(i) for i in range(self.trie.value_count)]
        return list(self._values)

    def value_at(self, gid: int):
        if gid < 0 or gid >= self._count:
            raise IndexError(f"global-id {gid} out of range [0, {self._count})")
        self.value_lookups += 1
        if self.has_null:
            if gid == 0:
                return None
            gid -= 1
        if self.trie is not None:
            return self.trie.id_to_value(gid)
        return self._values[gid]

    def values_at(self, gids) -> list:
        return [self.value_at(int(g)) for g in gids]

    def lookup_id(self, value) -> Optional[int]:
        """Global-id of ``value``, or None when absent."""
        if value is None:
            return 0 if self.has_null else None
        off = int(self.has_null)
        if self.trie is not None:
            rank = self.trie.value_to_id(value)
            return None if rank is None else rank + off
        if not self._values:
            return None
        if self.kind is Kind.STR:
            i = bisect.bisect_left(self._values, value)
        else:
            i = int(np.searchsorted(self._np, value, side="left"))
        if i < len(self._values) and self._values[i] == value:
            return i + off
        return None

    def decode_array(self, gids: np.ndarray):
        """Vectorized id->value for numeric kinds; falls back to a list otherwise.

        Returns (np.ndarray values, np.ndarray null mask) for numerics and
        (list, np.ndarray null mask) for strings.
        """
        gids = np.asarray(gids)
        if self.has_null:
            nulls = gids == 0
            adj = gids.astype(np.int64) - 1
            adj[nulls] = 0
        else:
            nulls = np.zeros(len(gids), dtype=bool)
            adj = gids.astype(np.int64)
        self.value_lookups += len(gids)
        non_null_count = self._count - int(self.has_null)
        if non_null_count == 0:
            # all-NULL column: masked placeholders
            if self.kind is Kind.STR:
                return [""] * len(gids), nulls
            dtype = np.float64 if self.kind is Kind.F64 else np.int64
            return np.zeros(len(gids), dtype=dtype), nulls
        if self._np is not None:
            return self._np[adj], nulls
        if self.trie is not None:
            uniq, inv = np.unique(adj, return_inverse=True)
            strings = [self.trie.id_to_value(int(u)) for u in uniq]
            return [strings[i] for i in inv], nulls
        return [self._values[i] for i in adj], nulls


@dataclass
class ChunkDictionary:
    """Strictly ascending global-ids occurring in one chunk."""

    global_ids: np.ndarray  # uint32, sorted ascending

    def __post_init__(self):
        self.global_ids = np.asarray(self.global_ids, dtype=np.uint32)
        if len(self.global_ids) == 0:
            raise StoreError("chunk dictionary may not be empty")
        if len(self.global_ids) > 1 and not np.all(np.diff(self.global_ids.astype(np.int64)) > 0):
            raise StoreError("chunk dictionary global-ids must be strictly ascending")

    def __len__(self) -> int:
        return len(self.global_ids)

    def chunk_id_of(self, gid: int) -> Optional[int]:
        i = int(np.searchsorted(self.global_ids, gid))
        if i < len(self.global_ids) and self.global_ids[i] == gid:
            return i
        return None

    def chunk_ids_of(self, gids: np.ndarray) -> np.ndarray:
        """Chunk-ids for the subset of ``gids`` present in this chunk."""
        gids = np.asarray(gids, dtype=np.uint32)
        pos = np.searchsorted(self.global_ids, gids)
        pos = np.clip(pos, 0, len(self.global_ids) - 1)
        hit = self.global_ids[pos] == gids
        return pos[hit].astype(np.uint32)


class ElementsEncoding:
    """Per-chunk chunk-id payload at the width the cardinality demands.

    Payload layout (all little-endian):
      Constant  -> no payload; every row is chunk-id 0
      BitSet    -> ceil(n/8) bytes, row r at bit (r % 8) of byte r // 8, LSB first
      Bytes1/2/4-> n * {1,2,4} bytes
    """

    __slots__ = ("tag", "row_count", "payload")

    def __init__(self, tag: int, row_count: int, payload: Optional[bytes]):
        self.tag = tag
        self.row_count = row_count
        self.payload = payload

    @classmethod
    def from_ids(cls, ids: np.ndarray, cardinality: int) -> "ElementsEncoding":
        ids = np.asarray(ids)
        n = len(ids)
        if n and int(ids.max()) >= cardinality:
            raise StoreError("chunk-id out of range for chunk dictionary")
        tag = variant_for_cardinality(cardinality)
        if tag == ELEMS_CONST:
            return cls(tag, n, b"")
        if tag == ELEMS_BITSET:
            payload = np.packbits(ids.astype(np.uint8), bitorder="little").tobytes()
            return cls(tag, n, payload)
        payload = ids.astype(_WIDTH_DTYPE[tag]).tobytes()
        return cls(tag, n, payload)

    def ids(self) -> np.ndarray:
        return decode_elements(self.tag, self.row_count, self.payload)

    @property
    def payload_size(self) -> int:
        return expected_payload_size(self.tag, self.row_count)

    def __eq__(self, other):
        return (
            isinstance(other, ElementsEncoding)
            and self.tag == other.tag
            and self.row_count == other.row_count
            and self.payload == other.payload
        )


def expected_payload_size(tag: int, row_count: int) -> int:
    if tag == ELEMS_CONST:
        return 0
    if tag == ELEMS_BITSET:
        return (row_count + 7) // 8
    return row_count * {ELEMS_BYTES1: 1, ELEMS_BYTES2: 2, ELEMS_BYTES4: 4}[tag]


def decode_elements(tag: int, row_count: int, payload: bytes) -> np.ndarray:
    """Payload bytes -> chunk-id array (the narrowest natural dtype)."""
    if tag == ELEMS_CONST:
        return np.zeros(row_count, dtype=np.uint8)
    if tag == ELEMS_BITSET:
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
        return bits[:row_count]
    return np.frombuffer(payload, dtype=_WIDTH_DTYPE[tag])


@dataclass
class ColumnChunk:
    dict: ChunkDictionary
    elems: ElementsEncoding

    def decode_gids(self) -> np.ndarray:
        """Per-row global-ids for this chunk."""
        return self.dict.global_ids[self.elems.ids()]


@dataclass
class Chunk:
    chunk_id: int
    row_count: int
    columns: dict  # field name -> ColumnChunk
    range_meta: dict = dc_field(default_factory=dict)  # diagnostic, not persisted

    def column(self, name: str) -> ColumnChunk:
        return self.columns[name]


@dataclass
class VirtualColumn:
    """A materialized expression column, stored chunk-aligned with the shard."""

    key: str
    kind: Kind
    global_dict: GlobalDictionary
    chunks: list  # ColumnChunk per shard chunk
    eval_count: int = 0


class Shard:
    """One independently encoded horizontal slice of a table."""

    def __init__(self, shard_id: int, schema: Schema, global_dicts, chunks):
        self.shard_id = shard_id
        self.schema = schema
        self.global_dicts = dict(global_dicts)
        self.chunks = list(chunks)
        for i, ch in enumerate(self.chunks):
            if ch.chunk_id != i:
                raise StoreError("chunk ids must be dense from 0")
        self.virtual_fields: dict[str, VirtualColumn] = {}

    @property
    def row_count(self) -> int:
        return sum(ch.row_count for ch in self.chunks)

    def has_column(self, name: str) -> bool:
        return name in self.global_dicts or name in self.virtual_fields

    def column_kind(self, name: str) -> Kind:
        if name in self.virtual_fields:
            return self.virtual_fields[name].kind
        return self.schema.kind_of(name)

    def global_dict(self, name: str) -> GlobalDictionary:
        if name in self.virtual_fields:
            return self.virtual_fields[name].global_dict
        try:
            return self.global_dicts[name]
        except KeyError:
            raise SchemaError(f"unknown field {name!r}") from None

    def column_chunk(self, name: str, chunk_idx: int) -> ColumnChunk:
        if name in self.virtual_fields:
            return self.virtual_fields[name].chunks[chunk_idx]
        try:
            return self.chunks[chunk_idx].columns[name]
        except KeyError:
            raise SchemaError(f"unknown field {name!r}") from None


def _codes_for_values(values: Sequence, kind: Kind):
    """Factorize ``values`` into (codes, sorted distinct non-null values, has_null).

    Codes are dense global-ids: NULL -> 0 when present; the i-th distinct
    non-null value -> i + has_null.
    """
    for v in values:
        if not value_matches_kind(v, kind):
            raise SchemaError(
                f"value {v!r} does not match column kind {kind.value} "
                "(mixed value kinds in one column)"
            )
    has_null = any(v is None for v in values)
    if kind in NUMERIC_KINDS:
        dtype = np.float64 if kind is Kind.F64 else np.int64
        arr = np.asarray([0 if v is None else v for v in values], dtype=dtype)
        mask = np.asarray([v is None for v in values], dtype=bool)
        non_null = arr[~mask]
        uniq = np.unique(non_null) if len(non_null) else np.asarray([], dtype=dtype)
        codes = np.searchsorted(uniq, arr).astype(np.int64) + int(has_null)
        if has_null:
            codes[mask] = 0
        distinct = [v.item() for v in uniq]
        if kind is not Kind.F64:
            distinct = [int(v) for v in distinct]
        return codes, distinct, has_null
    distinct = sorted({v for v in values if v is not None}, key=sort_key)
    index = {v: i + int(has_null) for i, v in enumerate(distinct)}
    codes = np.fromiter(
        (0 if v is None else index[v] for v in values), dtype=np.int64, count=len(values)
    )
    return codes, distinct, has_null


def encode_codes(codes: np.ndarray, boundaries) -> list[ColumnChunk]:
    """Slice dense global-id codes into per-chunk (dict, elements) pairs."""
    out = []
    for start, end in boundaries:
        chunk_codes = codes[start:end]
        gids, elems = np.unique(chunk_codes, return_inverse=True)
        out.append(
            ColumnChunk(
                dict=ChunkDictionary(gids.astype(np.uint32)),
                elems=ElementsEncoding.from_ids(elems, len(gids)),
            )
        )
    return out


def check_boundaries(boundaries, n_rows: int):
    prev = 0
    for start, end in boundaries:
        if start != prev or end <= start:
            raise StoreError(f"chunk boundaries must tile [0, {n_rows}) contiguously")
        prev = end
    if prev != n_rows:
        raise StoreError(f"chunk boundaries must tile [0, {n_rows}) contiguously")


def encode_column(values: Sequence, boundaries, kind: Kind):
    """Encode one column into a global dictionary plus per-chunk ColumnChunks.

    ``boundaries`` is a sequence of (start, end) row ranges partitioning
    [0, len(values)).
    """
    check_boundaries(boundaries, len(values))
    codes, distinct, has_null = _codes_for_values(values, kind)
    gdict = GlobalDictionary(kind, distinct, has_null)
    return gdict, encode_codes(codes, boundaries)


def decode_column(gdict: GlobalDictionary, column_chunks) -> list:
    """Inverse of encode_column: re-materialize the full value sequence."""
    out = []
    for cc in column_chunks:
        out.extend(gdict.values_at(cc.decode_gids()))
    return out


def decode_element(shard: Shard, field: str, chunk: int, row: int):
    """dict(ch.dict(ch.elems[row])) — one value via the double lookup."""
    if chunk < 0 or chunk >= len(shard.chunks):
        raise IndexError(f"chunk {chunk} out of range")
    cc = shard.column_chunk(field, chunk)
    if row < 0 or row >= cc.elems.row_count:
        raise IndexError(f"row {row} out of range for chunk {chunk}")
    cid = int(cc.elems.ids()[row])
    gid = int(cc.dict.global_ids[cid])
    return shard.global_dict(field).value_at(gid)


def rle_bit_cost(matrix, order) -> int:
    """Counter count of a simplified RLE over bit columns in a row order.

    Each column starts one counter; every bit flip between consecutive rows
    (in ``order``) starts another, so the cost is
    ``n_columns + sum of Hamming distances of consecutive rows``.
    """
    m = np.asarray(matrix, dtype=np.uint8)
    if m.ndim != 2:
        raise StoreError("bit matrix must be two-dimensional")
    if not np.isin(m, (0, 1)).all():
        raise StoreError("matrix entries must be bits")
    n, d = m.shape
    perm = np.asarray(order, dtype=np.int64)
    if sorted(perm.tolist()) != list(range(n)):
        raise StoreError("order must be a permutation of the rows")
    if n == 0:
        return 0
    ordered = m[perm]
    return d + int(np.sum(ordered[1:] != ordered[:-1]))
