"""CSV ingestion: parse, infer or check types, shard, reorder, partition,
encode, and persist shard files with an import report.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from .distribute import shard_table
from .encoding import (
    Chunk,
    ELEMS_BITSET,
    ELEMS_BYTES1,
    ELEMS_BYTES2,
    ELEMS_BYTES4,
    ELEMS_CONST,
    GlobalDictionary,
    Shard,
    encode_column,
)
from .errors import DataError, SchemaError
from .partition import PartitionSpec, partition, partition_unordered, range_meta, reorder_rows
from .shardio import _dict_payload, write_shard
from .store import Store
from .trie import TrieDictionary
from .values import Field, Kind, Schema, iso_to_days

_VARIANT_NAMES = {
    ELEMS_CONST: "constant",
    ELEMS_BITSET: "bitset",
    ELEMS_BYTES1: "bytes1",
    ELEMS_BYTES2: "bytes2",
    ELEMS_BYTES4: "bytes4",
}


def _parse_cell(text: str, kind: Kind):
    if text == "":
        return None
    if kind is Kind.STR:
        return text
    if kind is Kind.I64 or kind is Kind.TIMESTAMP:
        return int(text)
    if kind is Kind.F64:
        return float(text)
    return iso_to_days(text)  # DATE


def _cell_fits(text: str, kind: Kind) -> bool:
    try:
        _parse_cell(text, kind)
        return True
    except Exception:
        return False


def infer_kind(cells) -> Kind:
    """Inference order: I64, F64, DATE, TIMESTAMP, else STR.

    Integer-seconds columns therefore infer as I64; TIMESTAMP needs an
    explicit override.
    """
    non_empty = [c for c in cells if c != ""]
    if not non_empty:
        return Kind.STR
    for kind in (Kind.I64, Kind.F64, Kind.DATE, Kind.TIMESTAMP):
        if all(_cell_fits(c, kind) for c in non_empty):
            return kind
    return Kind.STR


def read_csv(source, table: str = "data", schema: Schema = None,
             type_overrides: dict = None) -> tuple[Schema, dict]:
    """Parse CSV (RFC 4180) into columns; returns (schema, columns).

    Empty cells are NULL. Without a declared schema, types are inferred
    per column with optional per-column overrides.
    """
    close = False
    if isinstance(source, (str, Path)):
        fh = open(source, "r", newline="", encoding="utf-8")
        close = True
    else:
        fh = source
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file: no header row") from None
        raw_rows = []
        for row in reader:
            if len(row) != len(header):
                raise DataError(
                    f"row has {len(row)} cells, header has {len(header)}",
                    line=reader.line_num,
                )
            raw_rows.append(row)
    except csv.Error as exc:
        raise DataError(f"malformed CSV: {exc}", line=reader.line_num) from exc
    finally:
        if close:
            fh.close()

    if schema is not None:
        if [f.name for f in schema.fields] != header:
            raise SchemaError(
                f"header {header!r} does not match declared schema "
                f"{[f.name for f in schema.fields]!r}"
            )
    else:
        overrides = {k: Kind(v) for k, v in (type_overrides or {}).items()}
        fields = []
        for j, name in enumerate(header):
            kind = overrides.get(name) or infer_kind([r[j] for r in raw_rows])
            fields.append(Field(name, kind, nullable=True))
        schema = Schema(table, fields)

    columns = {f.name: [] for f in schema.fields}
    for i, row in enumerate(raw_rows):
        for j, f in enumerate(schema.fields):
            try:
                columns[f.name].append(_parse_cell(row[j], f.kind))
            except Exception:
                raise DataError(
                    f"cannot parse {row[j]!r} as {f.kind.value}",
                    line=i + 2, column=f.name,
                ) from None
    return schema, columns


def build_shard(schema: Schema, columns: dict, spec: PartitionSpec, shard_id: int = 0,
                reorder: bool = True, trie_dicts: bool = False,
                force_wide_elements: bool = False) -> Shard:
    """Reorder, partition and encode one shard's worth of rows.

    ``reorder=False`` assigns rows to the same value-range chunks but keeps
    their original order inside each chunk (the pre-reordering baseline).
    ``force_wide_elements`` pins every element array at 4 bytes per row
    (the pre-optimization baseline used by the benchmark ladder).
    """
    kinds = {f.name: f.kind for f in schema.fields}
    names = schema.names()
    n = len(columns[names[0]]) if names else 0
    spec_cols = {f: columns[f] for f in spec.fields}

    if n == 0:
        return Shard(shard_id, schema, {
            f.name: encode_column([], [], f.kind)[0] for f in schema.fields
        }, [])

    if reorder:
        perm = reorder_rows(spec_cols, spec, kinds)
        ordered = {name: [columns[name][i] for i in perm] for name in names}
        bounds = partition({f: ordered[f] for f in spec.fields}, spec, kinds)
    else:
        perm, bounds = partition_unordered(spec_cols, spec, kinds)
        ordered = {name: [columns[name][i] for i in perm] for name in names}

    chunks = [
        Chunk(ci, end - start, {})
        for ci, (start, end) in enumerate(bounds)
    ]
    gdicts = {}
    for name in names:
        gdict, ccs = encode_column(ordered[name], bounds, kinds[name])
        if force_wide_elements:
            ccs = [_widen(cc) for cc in ccs]
        if trie_dicts and kinds[name] is Kind.STR:
            gdict = to_trie_dict(gdict)
        gdicts[name] = gdict
        for chunk, cc in zip(chunks, ccs):
            chunk.columns[name] = cc

    metas = range_meta({f: ordered[f] for f in spec.fields}, spec, bounds)
    for chunk, meta in zip(chunks, metas):
        chunk.range_meta = meta
    return Shard(shard_id, schema, gdicts, chunks)


def _widen(cc):
    from .encoding import ColumnChunk, ElementsEncoding

    ids = cc.elems.ids().astype(np.uint32)
    wide = ElementsEncoding(ELEMS_BYTES4, len(ids), ids.astype("<u4").tobytes())
    return ColumnChunk(dict=cc.dict, elems=wide)


def to_trie_dict(gdict: GlobalDictionary) -> GlobalDictionary:
    if gdict.kind is not Kind.STR or gdict.representation == GlobalDictionary.REPR_TRIE:
        return gdict
    trie = TrieDictionary.build(gdict.non_null_values())
    return GlobalDictionary(Kind.STR, None, gdict.has_null, trie=trie)


def build_store(schema: Schema, columns: dict, spec: PartitionSpec,
                shard_rows: int = None, seed: int = 0, reorder: bool = True,
                trie_dicts: bool = False, **store_kwargs) -> Store:
    """In-memory ingest: shard, encode, and wrap in a Store."""
    names = schema.names()
    n = len(columns[names[0]]) if names else 0
    if shard_rows and n > shard_rows:
        parts = shard_table(n, shard_rows, seed)
    else:
        parts = [np.arange(n, dtype=np.int64)]
    shards = []
    for si, idx in enumerate(parts):
        cols = {name: [columns[name][i] for i in idx] for name in names}
        shards.append(build_shard(schema, cols, spec, si, reorder, trie_dicts))
    return Store.from_shards(shards, table=schema.table, **store_kwargs)


def import_report(shards) -> dict:
    """Chunk counts, size histogram, per-variant element bytes, dictionary sizes."""
    sizes = [c.row_count for sh in shards for c in sh.chunks]
    by_variant = {name: 0 for name in _VARIANT_NAMES.values()}
    columns = {}
    for sh in shards:
        for f in sh.schema.fields:
            col = columns.setdefault(f.name, {
                "kind": f.kind.value,
                "distinct": 0,
                "dict_bytes": 0,
                "dict_representation": "trie"
                if sh.global_dicts[f.name].representation else "sorted_array",
                "elements_bytes": 0,
                "chunk_dict_bytes": 0,
                "by_variant": {name: 0 for name in _VARIANT_NAMES.values()},
            })
            gdict = sh.global_dicts[f.name]
            col["distinct"] += len(gdict)
            col["dict_bytes"] += len(_dict_payload(gdict))
            for chunk in sh.chunks:
                cc = chunk.columns[f.name]
                variant = _VARIANT_NAMES[cc.elems.tag]
                col["by_variant"][variant] += cc.elems.payload_size
                col["elements_bytes"] += cc.elems.payload_size
                col["chunk_dict_bytes"] += 4 * len(cc.dict)
                by_variant[variant] += cc.elems.payload_size
    hist = {}
    for s in sizes:
        bucket = 1
        while bucket < max(s, 1):
            bucket *= 2
        hist[bucket] = hist.get(bucket, 0) + 1
    return {
        "rows": sum(sh.row_count for sh in shards),
        "shards": len(shards),
        "chunks": len(sizes),
        "chunk_rows": {
            "min": min(sizes) if sizes else 0,
            "max": max(sizes) if sizes else 0,
            "histogram": {str(k): hist[k] for k in sorted(hist)},
        },
        "element_bytes_by_variant": by_variant,
        "columns": columns,
    }


def import_csv(input_path, out_dir, table: str = "data", schema: Schema = None,
               type_overrides: dict = None, partition_fields=None,
               max_chunk_rows: int = 50_000, shard_rows: int = None,
               seed: int = 0, reorder: bool = True, trie_dicts: bool = False) -> dict:
    """Full import pipeline; writes shard files + manifest, returns the report."""
    schema, columns = read_csv(input_path, table, schema, type_overrides)
    fields = partition_fields or [schema.fields[0].name]
    spec = PartitionSpec(list(fields), max_chunk_rows)
    for f in spec.fields:
        schema.field(f)  # raises on unknown names

    names = schema.names()
    n = len(columns[names[0]])
    if shard_rows and n > shard_rows:
        parts = shard_table(n, shard_rows, seed)
    else:
        parts = [np.arange(n, dtype=np.int64)]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shard_files = []
    shards = []
    for si, idx in enumerate(parts):
        cols = {name: [columns[name][i] for i in idx] for name in names}
        shard = build_shard(schema, cols, spec, si, reorder, trie_dicts)
        shards.append(shard)
        fname = f"shard_{si:04d}.bin"
        with open(out / fname, "wb") as fh:
            write_shard(shard, fh)
        shard_files.append(fname)

    report = import_report(shards)
    manifest = {
        "table": schema.table,
        "schema": [
            {"name": f.name, "kind": f.kind.value, "nullable": f.nullable}
            for f in schema.fields
        ],
        "shards": shard_files,
        "partition": {"fields": spec.fields, "max_chunk_rows": spec.max_chunk_rows},
        "source_csv": str(input_path) if isinstance(input_path, (str, Path)) else None,
        "seed": seed,
        "reordered": reorder,
        "report": report,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def columns_to_csv(schema: Schema, columns: dict) -> str:
    """Render columns back to CSV text (test fixtures, oracle checks)."""
    from .values import format_value

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = schema.names()
    writer.writerow(names)
    n = len(columns[names[0]]) if names else 0
    for i in range(n):
        writer.writerow([
            format_value(columns[f][i], schema.kind_of(f)) for f in names
        ])
    return buf.getvalue()
