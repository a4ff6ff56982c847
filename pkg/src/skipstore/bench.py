"""Benchmark harness: synthetic log-like data plus the step-wise encoding
ladder (single wide chunk, partitioning, adaptive element widths, trie
dictionaries, block compression, row reordering), reporting memory and
latency per configuration for the three canonical query shapes.

Absolute numbers are environment-specific; the ratio gates asserted by the
acceptance suite (element shrink from adaptive widths, compression gain
from partitioning, compression gain from reordering) are what matter.
"""

from __future__ import annotations

import lzma
import time
from dataclasses import dataclass, field

import numpy as np

from .cache import DeflateCodec
from .engine import execute, materialize_virtual_field
from .ingest import build_shard, import_report
from .parser import parse
from .partition import PartitionSpec
from .shardio import _dict_payload
from .store import Store
from .values import Field, Kind, Schema

QUERY_TOP_COUNTRIES = (
    "SELECT country, COUNT(*) AS c FROM data GROUP BY country ORDER BY c DESC LIMIT 10"
)
QUERY_PER_DAY = (
    "SELECT date(timestamp) AS d, COUNT(*) AS c, SUM(latency) AS s "
    "FROM data GROUP BY d ORDER BY d ASC LIMIT 10"
)
QUERY_TOP_TABLES = (
    "SELECT table_name, COUNT(*) AS c FROM data GROUP BY table_name ORDER BY c DESC LIMIT 10"
)

QUERIES = {"q1": QUERY_TOP_COUNTRIES, "q2": QUERY_PER_DAY, "q3": QUERY_TOP_TABLES}

# per-query fields whose artifacts are measured (mirrors what each query touches)
QUERY_FIELDS = {
    "q1": ["country"],
    "q2": ["date(timestamp)", "latency"],
    "q3": ["table_name"],
}


class XzCodec:
    """Slow entropy-heavy codec; registered by the harness for the
    ratio-vs-speed comparison only, never the default path."""

    codec_id = 2
    name = "xz"

    @staticmethod
    def compress(data: bytes) -> bytes:
        return lzma.compress(data, preset=0)

    @staticmethod
    def decompress(data: bytes) -> bytes:
        return lzma.decompress(data)


@dataclass
class BenchConfig:
    rows: int = 1_000_000
    countries: int = 25
    distinct_names: int = 100_000
    days: int = 90
    seed: int = 7
    max_chunk_rows: int = 50_000
    partition_fields: tuple = ("country", "table_name")
    configs: tuple = ("Basic", "Chunks", "OptCols", "OptDicts", "Codec", "Reorder")


def generate_dataset(cfg: BenchConfig):
    """Synthetic analog of a query-log table: a low-cardinality country, a
    prefix-heavy high-cardinality table name, a timestamp and a latency.

    The columns are correlated the way real logs are: name popularity is
    zipf-skewed, most names embed a date that the row's timestamp falls
    on, and latency depends on the table. These correlations are what row
    reordering converts into compression wins.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.rows
    distinct = cfg.distinct_names

    country_pool = [f"c{idx:02d}" for idx in range(cfg.countries)]
    country = [country_pool[i] for i in rng.integers(0, cfg.countries, n)]

    # names share long prefixes: date block x team x partition
    dates = [f"2011-{1 + d // 28:02d}-{1 + d % 28:02d}" for d in range(100)]
    teams = [f"team_{t:02d}" for t in range(50)]
    parts = [f"part_{p:02d}" for p in range(20)]
    pool_size = len(dates) * len(teams) * len(parts)
    assert pool_size >= distinct

    head = np.arange(min(distinct, n), dtype=np.int64)  # every name occurs
    tail = (rng.zipf(1.5, max(0, n - len(head))).astype(np.int64) - 1) % distinct
    name_ids = np.concatenate([head, tail])
    rng.shuffle(name_ids)
    name_pool = {}

    def name_of(i: int) -> str:
        s = name_pool.get(i)
        if s is None:
            d, rest = divmod(i, len(teams) * len(parts))
            t, p = divmod(rest, len(parts))
            s = f"logs_{dates[d]}_{teams[t]}_{parts[p]}"
            name_pool[i] = s
        return s

    table_name = [name_of(int(i)) for i in name_ids]

    # rows about a dated table land on that date (mod the configured window)
    base = 1_293_840_000  # 2011-01-01
    day_of_name = (name_ids // (len(teams) * len(parts))) % cfg.days
    timestamp = base + day_of_name * 86400 + rng.integers(0, 86400, n)

    # per-table latency profile with mild noise
    name_base = rng.integers(50, 50_000, distinct)
    latency = (name_base[name_ids] * rng.lognormal(0, 0.1, n)).astype(np.int64) + 1

    schema = Schema("data", [
        Field("timestamp", Kind.TIMESTAMP, nullable=False),
        Field("table_name", Kind.STR, nullable=False),
        Field("latency", Kind.I64, nullable=False),
        Field("country", Kind.STR, nullable=False),
    ])
    columns = {
        "timestamp": [int(v) for v in timestamp],
        "table_name": table_name,
        "latency": [int(v) for v in latency],
        "country": country,
    }
    return schema, columns


def _build_config_store(name: str, schema, columns, cfg: BenchConfig) -> Store:
    fields = list(cfg.partition_fields)
    if name == "Basic":
        spec = PartitionSpec(fields, max_chunk_rows=1 << 60)
        shard = build_shard(schema, columns, spec, reorder=False, force_wide_elements=True)
    elif name == "Chunks":
        spec = PartitionSpec(fields, cfg.max_chunk_rows)
        shard = build_shard(schema, columns, spec, reorder=False, force_wide_elements=True)
    elif name == "OptCols":
        spec = PartitionSpec(fields, cfg.max_chunk_rows)
        shard = build_shard(schema, columns, spec, reorder=False)
    elif name in ("OptDicts", "Codec"):
        spec = PartitionSpec(fields, cfg.max_chunk_rows)
        shard = build_shard(schema, columns, spec, reorder=False, trie_dicts=True)
    elif name == "Reorder":
        spec = PartitionSpec(fields, cfg.max_chunk_rows)
        shard = build_shard(schema, columns, spec, reorder=True, trie_dicts=True)
    else:
        raise ValueError(f"unknown bench config {name!r}")
    return Store.from_shards([shard], table="data")


def column_bytes(store: Store, field_name: str, codec=None) -> dict:
    """Artifact sizes for one column: elements, chunk-dicts, dictionary.

    With a codec, sizes are of the per-artifact compressed payloads.
    """
    out = {"elements": 0, "chunk_dicts": 0, "dict": 0}

    def size(data: bytes) -> int:
        return len(codec.compress(data)) if codec else len(data)

    for shard in store.shards:
        if field_name in shard.virtual_fields:
            vf = shard.virtual_fields[field_name]
            gdict, ccs = vf.global_dict, vf.chunks
        else:
            gdict = shard.global_dicts[field_name]
            ccs = [c.columns[field_name] for c in shard.chunks]
        out["dict"] += size(_dict_payload(gdict))
        for cc in ccs:
            out["elements"] += size(cc.elems.payload)
            out["chunk_dicts"] += size(cc.dict.global_ids.astype("<u4").tobytes())
    out["elements_plus_chunk_dicts"] = out["elements"] + out["chunk_dicts"]
    out["total"] = out["elements_plus_chunk_dicts"] + out["dict"]
    return out


def run_bench(cfg: BenchConfig = None, progress=None) -> dict:
    cfg = cfg or BenchConfig()
    schema, columns = generate_dataset(cfg)

    ladder = {}
    for config_name in cfg.configs:
        if progress:
            progress(f"building {config_name}")
        store = _build_config_store(config_name, schema, columns, cfg)
        # Q2's virtual field is materialized up front, like any reused column
        materialize_virtual_field(store, 0, parse(QUERY_PER_DAY).group_by[0])
        codec = DeflateCodec if config_name in ("Codec", "Reorder") else None

        per_query = {}
        for qname, sql in QUERIES.items():
            t0 = time.perf_counter()
            result = execute(store, sql)
            latency_ms = (time.perf_counter() - t0) * 1000
            sizes = {"elements": 0, "chunk_dicts": 0, "dict": 0}
            for f in QUERY_FIELDS[qname]:
                b = column_bytes(store, f, codec)
                for k in sizes:
                    sizes[k] += b[k]
            per_query[qname] = {
                "latency_ms": latency_ms,
                "rows": len(result.rows),
                "elements_bytes": sizes["elements"],
                "elements_plus_chunk_dicts_bytes": sizes["elements"] + sizes["chunk_dicts"],
                "overall_bytes": sizes["elements"] + sizes["chunk_dicts"] + sizes["dict"],
            }
        ladder[config_name] = {
            "queries": per_query,
            "chunks": sum(len(sh.chunks) for sh in store.shards),
            # compressed country elements, recorded everywhere so the
            # partitioning-vs-compression gate compares like for like
            "country_elements_deflate": column_bytes(store, "country", DeflateCodec)["elements"],
        }
        if config_name == "OptCols":
            ladder[config_name]["report"] = import_report(store.shards)

    gates = {}
    if {"Chunks", "OptCols"} <= set(ladder):
        before = ladder["Chunks"]["queries"]["q1"]["elements_bytes"]
        after = ladder["OptCols"]["queries"]["q1"]["elements_bytes"]
        gates["optcols_element_shrink"] = before / max(after, 1)
    if {"Basic", "Chunks"} <= set(ladder):
        basic = ladder["Basic"]["country_elements_deflate"]
        chunks = ladder["Chunks"]["country_elements_deflate"]
        gates["codec_partition_gain"] = basic / max(chunks, 1)
    if {"Codec", "Reorder"} <= set(ladder):
        unordered = sum(
            ladder["Codec"]["queries"][q]["elements_plus_chunk_dicts_bytes"]
            for q in QUERIES
        )
        reordered = sum(
            ladder["Reorder"]["queries"][q]["elements_plus_chunk_dicts_bytes"]
            for q in QUERIES
        )
        gates["reorder_compression_gain"] = unordered / max(reordered, 1)

    return {
        "config": {
            "rows": cfg.rows,
            "countries": cfg.countries,
            "distinct_names": cfg.distinct_names,
            "seed": cfg.seed,
            "max_chunk_rows": cfg.max_chunk_rows,
            "partition_fields": list(cfg.partition_fields),
        },
        "queries": dict(QUERIES),
        "ladder": ladder,
        "gates": gates,
        "codecs": compare_codecs(schema, columns, cfg),
    }


def compare_codecs(schema, columns, cfg: BenchConfig, extra=(XzCodec,)) -> dict:
    """Size/speed trade-off of the registered codecs on real element data.

    The default fast codec stays the product choice; heavier entropy-coded
    codecs are measured here only, to reproduce the classic ratio-vs-speed
    curve on this workload.
    """
    spec = PartitionSpec(list(cfg.partition_fields), cfg.max_chunk_rows)
    shard = build_shard(schema, columns, spec, reorder=True)
    blobs = []
    for chunk in shard.chunks:
        cc = chunk.columns["table_name"]
        blobs.append(cc.elems.payload)
        blobs.append(cc.dict.global_ids.astype("<u4").tobytes())
    raw = sum(len(b) for b in blobs)
    out = {"raw_bytes": raw}
    for codec in (DeflateCodec, *extra):
        t0 = time.perf_counter()
        packed = [codec.compress(b) for b in blobs]
        compress_ms = (time.perf_counter() - t0) * 1000
        t0 = time.perf_counter()
        for p in packed:
            codec.decompress(p)
        decompress_ms = (time.perf_counter() - t0) * 1000
        size = sum(len(p) for p in packed)
        out[codec.name] = {
            "bytes": size,
            "ratio": raw / max(size, 1),
            "compress_ms": compress_ms,
            "decompress_ms": decompress_ms,
        }
    return out


def format_report(report: dict) -> str:
    lines = []
    cfgs = list(report["ladder"])
    lines.append(f"rows={report['config']['rows']}  seed={report['config']['seed']}")
    header = f"{'config':<10}" + "".join(f"{q + ' ' + m:>18}"
                                         for q in ("q1", "q2", "q3")
                                         for m in ("KB", "ms"))
    lines.append(header)
    for c in cfgs:
        row = f"{c:<10}"
        for q in ("q1", "q2", "q3"):
            info = report["ladder"][c]["queries"][q]
            row += f"{info['overall_bytes'] / 1024:>18.1f}"
            row += f"{info['latency_ms']:>18.1f}"
        lines.append(row)
    lines.append("gates:")
    for k, v in report["gates"].items():
        lines.append(f"  {k}: {v:.2f}x")
    codecs = report.get("codecs")
    if codecs:
        lines.append(f"codecs over table_name artifacts ({codecs['raw_bytes'] / 1024:.0f} KB raw):")
        for name, info in codecs.items():
            if name == "raw_bytes":
                continue
            lines.append(
                f"  {name}: {info['ratio']:.2f}x in {info['compress_ms']:.0f} ms "
                f"(decompress {info['decompress_ms']:.0f} ms)"
            )
    return "\n".join(lines)
