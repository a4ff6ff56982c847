"""HTTP front door: JSON query execution, schema discovery, and
skip/cache/scan statistics under /v1/.
"""

from __future__ import annotations

import threading
import time

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .engine import ExecOptions, execute
from .errors import ParseError, SchemaError, StoreError, UnsupportedQueryError
from .values import Kind, json_value


class QueryRequest(BaseModel):
    sql: str
    trace: bool = False


class _Cumulative:
    def __init__(self):
        self.lock = threading.Lock()
        self.queries = 0
        self.rows_skipped = 0
        self.rows_cached = 0
        self.rows_scanned = 0
        self.chunks_skipped = 0
        self.chunks_cached = 0
        self.chunks_scanned = 0

    def add(self, stats) -> None:
        with self.lock:
            self.queries += 1
            self.rows_skipped += stats.rows_skipped
            self.rows_cached += stats.rows_cached
            self.rows_scanned += stats.rows_scanned
            self.chunks_skipped += stats.chunks_skipped
            self.chunks_cached += stats.chunks_cached
            self.chunks_scanned += stats.chunks_scanned

    def snapshot(self) -> dict:
        with self.lock:
            total = self.rows_skipped + self.rows_cached + self.rows_scanned
            return {
                "queries": self.queries,
                "rows_skipped": self.rows_skipped,
                "rows_cached": self.rows_cached,
                "rows_scanned": self.rows_scanned,
                "chunks_skipped": self.chunks_skipped,
                "chunks_cached": self.chunks_cached,
                "chunks_scanned": self.chunks_scanned,
                "skipped_fraction": self.rows_skipped / total if total else 0.0,
                "cached_fraction": self.rows_cached / total if total else 0.0,
                "scanned_fraction": self.rows_scanned / total if total else 0.0,
            }


def _field_info(store, f) -> dict:
    distinct = sum(len(sh.global_dicts[f.name]) for sh in store.shards)
    role = "measure" if (
        f.kind in (Kind.I64, Kind.F64) and distinct > 100
    ) else "dimension"
    return {
        "name": f.name,
        "kind": f.kind.value,
        "nullable": f.nullable,
        "distinct": distinct,
        "role": role,
    }


def create_app(store, exec_options: ExecOptions = None) -> FastAPI:
    app = FastAPI(title="skipstore", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    opts = exec_options or ExecOptions()
    cumulative = _Cumulative()
    app.state.store = store
    app.state.cumulative = cumulative

    @app.get("/v1/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    @app.get("/v1/tables")
    def tables():
        return {"tables": [store.table]}

    @app.get("/v1/tables/{table}/schema")
    def table_schema(table: str):
        if table != store.table:
            return JSONResponse({"error": f"unknown table {table!r}"}, status_code=404)
        return {
            "table": store.table,
            "rows": store.row_count,
            "fields": [_field_info(store, f) for f in store.schema.fields],
        }

    @app.post("/v1/query")
    def query(req: QueryRequest):
        t0 = time.perf_counter()
        try:
            result = execute(store, req.sql, opts)
        except ParseError as exc:
            return JSONResponse(
                {"error": str(exc), "position": exc.position}, status_code=400
            )
        except (SchemaError, UnsupportedQueryError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        except StoreError as exc:
            return JSONResponse({"error": str(exc)}, status_code=500)
        cumulative.add(result.stats)
        kinds = [Kind(t) for _n, t in result.columns]
        body = {
            "columns": [{"name": n, "type": t} for n, t in result.columns],
            "rows": [
                [json_value(v, k) for v, k in zip(row, kinds)] for row in result.rows
            ],
            "stats": result.stats.as_dict(),
            "elapsed_ms": (time.perf_counter() - t0) * 1000,
        }
        if req.trace:
            body["sql"] = req.sql
        return body

    @app.get("/v1/stats")
    def stats():
        return {
            "cumulative": cumulative.snapshot(),
            "cache": store.cache.occupancy() | store.cache.stats.as_dict(),
            "result_cache": {
                "entries": len(store.result_cache),
                "hits": store.result_cache.stats.hits,
                "misses": store.result_cache.stats.misses,
            },
        }

    return app


def serve(store, host: str = "127.0.0.1", port: int = 8080,
          exec_options: ExecOptions = None) -> None:
    import uvicorn

    app = create_app(store, exec_options)
    uvicorn.run(app, host=host, port=port, log_level="warning")
