"""skipstore: an in-memory partition-skipping column store.

Columns are double-dictionary encoded (value -> global-id -> chunk-id),
rows are range-partitioned into chunks at import, and WHERE clauses are
classified against chunk dictionaries so that most chunks are skipped or
served from cached per-chunk results instead of scanned.
"""

from .engine import ExecOptions, QueryResult, QueryStats, execute
from .errors import StoreError
from .ingest import build_store, import_csv, read_csv
from .oracle import OracleTable, oracle_query
from .parser import parse
from .partition import PartitionSpec
from .store import Store
from .values import Field, Kind, Schema

__version__ = "0.1.0"

__all__ = [
    "ExecOptions", "Field", "Kind", "OracleTable", "PartitionSpec",
    "QueryResult", "QueryStats", "Schema", "Store", "StoreError",
    "build_store", "execute", "import_csv", "oracle_query", "parse",
    "read_csv", "__version__",
]
