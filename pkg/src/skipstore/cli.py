"""Command-line interface: import, query, bench, serve.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import click

from .engine import ExecOptions, execute
from .errors import DataError, FormatError, ParseError, SchemaError, StoreError, \
    UnsupportedQueryError
from .store import Store, UNLIMITED
from .values import Field, Kind, Schema, format_value


@click.group()
def cli():
    """Partition-skipping column store."""


def _load_schema(path) -> Schema:
    doc = json.loads(Path(path).read_text())
    fields = [
        Field(f["name"], Kind(f["kind"]), f.get("nullable", True))
        for f in doc["fields"]
    ]
    return Schema(doc.get("table", "data"), fields)


@cli.command("import")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--table", default="data", show_default=True)
@click.option("--schema", "schema_path", type=click.Path(exists=True),
              help="JSON schema declaration (otherwise types are inferred).")
@click.option("--types", default="", help="Type overrides, e.g. ts=timestamp,lat=i64.")
@click.option("--partition-fields", required=True,
              help="Comma-separated ordered field list for range partitioning.")
@click.option("--max-chunk-rows", default=50_000, show_default=True)
@click.option("--shard-rows", default=None, type=int,
              help="Target rows per shard (default: one shard).")
@click.option("--seed", default=0, show_default=True)
@click.option("--no-reorder", is_flag=True, help="Skip the lexicographic row reorder.")
@click.option("--trie-dicts", is_flag=True, help="Store string dictionaries as tries.")
def import_cmd(input_path, out_dir, table, schema_path, types, partition_fields,
               max_chunk_rows, shard_rows, seed, no_reorder, trie_dicts):
    """Ingest a CSV file into a shard directory."""
    from .ingest import import_csv

    overrides = {}
    for item in filter(None, types.split(",")):
        name, _, kind = item.partition("=")
        if not kind:
            raise click.UsageError(f"--types entries look like col=kind, got {item!r}")
        overrides[name.strip()] = kind.strip()
    schema = _load_schema(schema_path) if schema_path else None
    manifest = import_csv(
        input_path, out_dir, table=table, schema=schema, type_overrides=overrides,
        partition_fields=[f.strip() for f in partition_fields.split(",") if f.strip()],
        max_chunk_rows=max_chunk_rows, shard_rows=shard_rows, seed=seed,
        reorder=not no_reorder, trie_dicts=trie_dicts,
    )
    report = manifest["report"]
    click.echo(f"imported {report['rows']} rows into {report['shards']} shard(s), "
               f"{report['chunks']} chunks -> {out_dir}")
    click.echo(json.dumps(report, indent=2))


@cli.command("query")
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--sql", required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
@click.option("--oracle-check", is_flag=True,
              help="Re-run via the CSV row-scan oracle and compare.")
@click.option("--cache-bytes", default=UNLIMITED, type=int)
@click.option("--kmv-m", default=4096, show_default=True)
@click.option("--kmv-seed", default=1, show_default=True)
def query_cmd(store_dir, sql, fmt, oracle_check, cache_bytes, kmv_m, kmv_seed):
    """Run one SQL query against a stored table."""
    store = Store.open(store_dir, cache_budget=cache_bytes)
    opts = ExecOptions(kmv_m=kmv_m, kmv_seed=kmv_seed)
    result = execute(store, sql, opts)
    kinds = [Kind(t) for _n, t in result.columns]
    if fmt == "json":
        from .values import json_value

        click.echo(json.dumps({
            "columns": [{"name": n, "type": t} for n, t in result.columns],
            "rows": [[json_value(v, k) for v, k in zip(r, kinds)] for r in result.rows],
            "stats": result.stats.as_dict(),
        }, indent=2))
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([n for n, _t in result.columns])
        for row in result.rows:
            writer.writerow([format_value(v, k) for v, k in zip(row, kinds)])
        click.echo(buf.getvalue(), nl=False)
        click.echo(
            f"# chunks skipped/cached/scanned: {result.stats.chunks_skipped}/"
            f"{result.stats.chunks_cached}/{result.stats.chunks_scanned}  "
            f"rows scanned: {result.stats.rows_scanned}", err=True,
        )
    if oracle_check:
        _oracle_check(store, sql, result)
        click.echo("# oracle check: OK", err=True)


def _oracle_check(store, sql, result):
    from .ingest import read_csv
    from .oracle import OracleTable, oracle_query
    from .store import schema_from_manifest

    source = store.manifest.get("source_csv")
    if not source:
        raise StoreError("store manifest records no source CSV to check against")
    schema = schema_from_manifest(store.manifest)
    _schema, columns = read_csv(source, store.table, schema=schema)
    table = OracleTable.from_columns(schema, columns)
    _cols, expected = oracle_query(table, sql)
    got = [tuple(r) for r in result.rows]
    want = [tuple(r) for r in expected]
    if not _rows_close(got, want):
        raise StoreError(
            f"oracle mismatch: engine returned {got[:5]}..., oracle {want[:5]}..."
        )


def _rows_close(got, want, tol=1e-9):
    if len(got) != len(want):
        return False
    for a, b in zip(got, want):
        if len(a) != len(b):
            return False
        for x, y in zip(a, b):
            if isinstance(x, float) or isinstance(y, float):
                if x is None or y is None:
                    if x is not y:
                        return False
                elif abs(x - y) > tol * max(1.0, abs(x), abs(y)):
                    return False
            elif x != y:
                return False
    return True


@cli.command("bench")
@click.option("--rows", default=1_000_000, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--names", default=100_000, show_default=True)
@click.option("--max-chunk-rows", default=50_000, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Write the full JSON report here.")
def bench_cmd(rows, seed, names, max_chunk_rows, out_path):
    """Run the encoding/compression ladder on synthetic data."""
    from .bench import BenchConfig, format_report, run_bench

    cfg = BenchConfig(rows=rows, seed=seed, distinct_names=names,
                      max_chunk_rows=max_chunk_rows)
    report = run_bench(cfg, progress=lambda msg: click.echo(f"... {msg}", err=True))
    click.echo(format_report(report))
    if out_path:
        Path(out_path).write_text(json.dumps(report, indent=2))
        click.echo(f"report written to {out_path}", err=True)


@cli.command("serve")
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--listen", default="127.0.0.1:8080", show_default=True)
@click.option("--cache-bytes", default=UNLIMITED, type=int)
@click.option("--policy", type=click.Choice(["2q", "lru"]), default="2q",
              show_default=True)
@click.option("--lazy", is_flag=True, help="Read payloads through the cache on demand.")
def serve_cmd(store_dir, listen, cache_bytes, policy, lazy):
    """Serve the HTTP query API."""
    from .service import serve

    host, _, port = listen.rpartition(":")
    store = Store.open(store_dir, cache_budget=cache_bytes, lazy=lazy, policy=policy)
    click.echo(f"serving {store.table} ({store.row_count} rows) on http://{listen}/v1/")
    serve(store, host or "127.0.0.1", int(port))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (DataError, SchemaError, ParseError, FormatError, UnsupportedQueryError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not raises
        click.echo(f"internal error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
