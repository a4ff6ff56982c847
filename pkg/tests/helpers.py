"""Shared test fixtures: random tables, random queries, row comparison."""

from __future__ import annotations

import math
import random

from skipstore.engine import ExecOptions, execute
from skipstore.ingest import build_store
from skipstore.oracle import OracleTable, oracle_query
from skipstore.partition import PartitionSpec
from skipstore.values import Field, Kind, Schema

COUNTRIES = ["br", "de", "fr", "jp", "us"]


def desk_table():
    """Six rows over three countries; the hand-traceable dataset."""
    schema = Schema("data", [
        Field("country", Kind.STR, nullable=False),
        Field("latency", Kind.I64, nullable=False),
    ])
    columns = {
        "country": ["de", "de", "fr", "fr", "us", "us"],
        "latency": [10, 20, 15, 25, 25, 35],
    }
    return schema, columns


def random_table(rng: random.Random, n_rows=None):
    """A random table exercising every kind, NULLs included."""
    n = n_rows if n_rows is not None else rng.randint(0, 400)
    schema = Schema("data", [
        Field("country", Kind.STR),
        Field("name", Kind.STR),
        Field("ts", Kind.TIMESTAMP),
        Field("day", Kind.DATE),
        Field("latency", Kind.I64),
        Field("score", Kind.F64),
    ])

    def maybe_null(gen, p=0.1):
        return None if rng.random() < p else gen()

    columns = {
        "country": [maybe_null(lambda: rng.choice(COUNTRIES)) for _ in range(n)],
        "name": [maybe_null(lambda: f"tbl_{rng.randrange(30):02d}") for _ in range(n)],
        "ts": [maybe_null(lambda: 1_330_000_000 + rng.randrange(86400 * 4)) for _ in range(n)],
        "day": [maybe_null(lambda: 15_000 + rng.randrange(6)) for _ in range(n)],
        "latency": [maybe_null(lambda: rng.randrange(-50, 1000)) for _ in range(n)],
        "score": [maybe_null(lambda: round(rng.uniform(-5, 5), 3)) for _ in range(n)],
    }
    return schema, columns


def random_store(rng: random.Random, schema, columns, **kwargs):
    spec = PartitionSpec(
        fields=rng.choice([["country"], ["country", "name"], ["name", "day"]]),
        max_chunk_rows=rng.choice([1, 2, 7, 50, 1000]),
    )
    shard_rows = rng.choice([None, None, 60, 150])
    return build_store(schema, columns, spec, shard_rows=shard_rows,
                       seed=rng.randrange(1000), **kwargs)


def _random_literal(rng: random.Random, field: str):
    if field == "country":
        return rng.choice(COUNTRIES + ["xx", "zz"])  # present and absent values
    if field == "name":
        return f"tbl_{rng.randrange(40):02d}"
    if field == "ts":
        return 1_330_000_000 + rng.randrange(86400 * 4)
    if field == "day":
        return rng.choice([15_002, 15_004, "2011-01-26", "1970-02-01"])
    if field == "latency":
        return rng.randrange(-50, 1000)
    return round(rng.uniform(-5, 5), 2)


def _random_predicate(rng: random.Random, depth=0) -> str:
    roll = rng.random()
    if depth < 2 and roll < 0.25:
        op = rng.choice(["AND", "OR"])
        return f"({_random_predicate(rng, depth + 1)} {op} {_random_predicate(rng, depth + 1)})"
    if depth < 2 and roll < 0.35:
        return f"NOT ({_random_predicate(rng, depth + 1)})"
    field = rng.choice(["country", "name", "ts", "day", "latency", "score"])
    lit = _render(_random_literal(rng, field))
    shape = rng.random()
    if shape < 0.35:
        values = ", ".join(
            _render(_random_literal(rng, field)) for _ in range(rng.randint(1, 3))
        )
        neg = "NOT IN" if rng.random() < 0.3 else "IN"
        return f"{field} {neg} ({values})"
    if shape < 0.6:
        op = rng.choice(["=", "!="])
        return f"{field} {op} {lit}"
    if shape < 0.8:
        op = rng.choice(["<", "<=", ">", ">="])
        return f"{field} {op} {lit}"
    if shape < 0.9 and field in ("latency", "score"):
        return f"{field} + 1 > {lit}"
    return f"date(ts) IN ('2012-02-23', '2012-02-24')" if rng.random() < 0.5 \
        else f"country = {_render(rng.choice(COUNTRIES))}"


def _render(v) -> str:
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v)


def random_query(rng: random.Random) -> str:
    groups = rng.choice([
        ["country"], ["name"], ["day"], ["country", "name"],
        ["date(ts)"], ["country", "latency"], [],
    ])
    measures = ["latency", "score"]
    agg_pool = [
        "COUNT(*)",
        f"SUM({rng.choice(measures)})",
        f"MIN({rng.choice(['latency', 'score', 'name', 'country', 'day'])})",
        f"MAX({rng.choice(['latency', 'score', 'name'])})",
        f"AVG({rng.choice(measures)})",
        f"COUNT(DISTINCT {rng.choice(['name', 'country', 'latency'])})",
    ]
    rng.shuffle(agg_pool)
    aggs = agg_pool[: rng.randint(1, 3)]
    select = groups + [f"{a} AS a{i}" for i, a in enumerate(aggs)]
    sql = f"SELECT {', '.join(select)} FROM data"
    if rng.random() < 0.75:
        sql += f" WHERE {_random_predicate(rng)}"
    if groups:
        sql += f" GROUP BY {', '.join(groups)}"
    if rng.random() < 0.7:
        target = rng.choice([f"a{i}" for i in range(len(aggs))] + (groups or []))
        sql += f" ORDER BY {target} {rng.choice(['ASC', 'DESC'])}"
        if rng.random() < 0.7:
            sql += f" LIMIT {rng.randint(0, 12)}"
    elif rng.random() < 0.2:
        sql += f" LIMIT {rng.randint(0, 8)}"  # limit without order: key-ascending cut
    return sql


def rows_equal(got, want, tol=1e-9) -> bool:
    if len(got) != len(want):
        return False
    for a, b in zip(got, want):
        if len(a) != len(b):
            return False
        for x, y in zip(a, b):
            if isinstance(x, float) or isinstance(y, float):
                if (x is None) != (y is None):
                    return False
                if x is None:
                    continue
                if not math.isclose(x, y, rel_tol=tol, abs_tol=tol):
                    return False
            elif x != y:
                return False
    return True


def run_differential(seed: int, n_cases: int, n_rows=None) -> list:
    """Engine vs oracle over random (table, query) pairs; returns failures."""
    rng = random.Random(seed)
    failures = []
    for case in range(n_cases):
        schema, columns = random_table(rng, n_rows)
        store = random_store(rng, schema, columns)
        table = OracleTable.from_columns(schema, columns)
        sql = random_query(rng)
        try:
            result = execute(store, sql, ExecOptions(kmv_m=4096))
            _cols, expected = oracle_query(table, sql)
        except Exception as exc:  # pragma: no cover - debugging aid
            failures.append((case, sql, f"raised {exc!r}"))
            continue
        if not rows_equal(result.rows, expected):
            failures.append((case, sql, result.rows[:5], expected[:5]))
    return failures
