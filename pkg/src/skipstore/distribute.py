"""Simulated distributed execution: quasi-random sharding, the group-by
rewrite into an aggregation tree, and primary/replica dispatch.

Workers are in-process objects with seeded latency distributions and
failure switches; the coordinator sends every shard sub-query to a
primary and a replica, takes the first response, merges partial
aggregates up a fan-in tree, and finalizes ORDER BY/LIMIT/HAVING at the
root only.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    ExecOptions,
    QueryResult,
    QueryStats,
    _merge_value_partials,
    build_plan,
    finalize_value_partials,
)
from .errors import InternalError, PartialResultError, StoreError, UnsupportedQueryError
from .parser import Agg, QueryAST, canonical_text, parse


class DispatchTimeout(StoreError):
    """No replica of some shard answered within the deadline."""


# ---------------------------------------------------------------- sharding

def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over uint64 arrays."""
    with np.errstate(over="ignore"):
        x = (x + np.uint64(0x9E3779B97F4A7C15)).astype(np.uint64)
        x ^= x >> np.uint64(30)
        x *= np.uint64(0xBF58476D1CE4E5B9)
        x ^= x >> np.uint64(27)
        x *= np.uint64(0x94D049BB133111EB)
        x ^= x >> np.uint64(31)
    return x


def shard_table(n_rows: int, shard_row_target: int = 10_000, seed: int = 0) -> list:
    """Quasi-random row assignment; returns one row-index array per shard."""
    if shard_row_target < 1:
        raise StoreError("shard_row_target must be >= 1")
    if n_rows == 0:
        return [np.empty(0, dtype=np.int64)]
    n_shards = max(1, -(-n_rows // shard_row_target))
    idx = np.arange(n_rows, dtype=np.uint64)
    with np.errstate(over="ignore"):
        salt = np.uint64(seed) * np.uint64(0x9E3779B97F4A7C15)
    h = _mix64(idx + salt)
    assign = (h % np.uint64(n_shards)).astype(np.int64)
    return [np.flatnonzero(assign == s).astype(np.int64) for s in range(n_shards)]


# ----------------------------------------------------------------- workers

@dataclass
class Worker:
    worker_id: int
    base_latency_ms: float = 10.0
    latency_multiplier: float = 1.0
    failed: bool = False
    _rng: random.Random = field(default=None, repr=False)

    def seed(self, seed: int) -> None:
        self._rng = random.Random((seed << 8) ^ self.worker_id)

    def sample_latency(self) -> float:
        if self._rng is None:
            self.seed(0)
        jitter = self._rng.lognormvariate(0, 0.25)
        return self.base_latency_ms * self.latency_multiplier * jitter


@dataclass
class ShardAssignment:
    placement: dict  # shard index -> (primary worker id, replica worker id)

    def __post_init__(self):
        for sid, (p, r) in self.placement.items():
            if p == r:
                raise StoreError(f"shard {sid}: primary and replica must differ")

    @classmethod
    def round_robin(cls, n_shards: int, n_workers: int) -> "ShardAssignment":
        if n_workers < 2:
            raise StoreError("need at least two workers for replication")
        placement = {
            s: (s % n_workers, (s + 1) % n_workers) for s in range(n_shards)
        }
        return cls(placement)


# ------------------------------------------------------------- tree rewrite

@dataclass
class AggregationPlan:
    ast: QueryAST
    levels: int
    fanin: int
    leaf_sql: str  # template; {shard} names the leaf input
    internal_sql: str
    root_sql: str


def _sql_group_list(ast: QueryAST) -> str:
    return ", ".join(canonical_text(g) for g in ast.group_by)


def _leaf_agg_sql(expr: Agg, alias: str) -> str:
    if expr.func == "count" and expr.distinct:
        return f"kmv({canonical_text(expr.arg)}) AS {alias}"
    if expr.func == "count" and expr.arg is None:
        return f"COUNT(*) AS {alias}"
    return f"{expr.func.upper()}({canonical_text(expr.arg)}) AS {alias}"


def _merge_agg_sql(expr: Agg, alias: str) -> str:
    if expr.func == "count" and expr.distinct:
        return f"kmv_merge({alias}) AS {alias}"
    if expr.func in ("min", "max"):
        return f"{expr.func.upper()}({alias}) AS {alias}"
    return f"SUM({alias}) AS {alias}"


def rewrite_for_tree(ast, levels: int = 2, fanin: int = 32,
                     exact_distinct: bool = False) -> AggregationPlan:
    """Rewrite a group-by query for multi-level aggregation.

    Every aggregate must decompose into associative merges: COUNT(*)
    becomes SUM of leaf counts, AVG(x) becomes SUM(x)/SUM(1), COUNT
    DISTINCT merges KMV sketches. ``exact_distinct`` forbids the sketch,
    making COUNT DISTINCT non-decomposable (and an error).
    """
    if isinstance(ast, str):
        ast = parse(ast)
    if levels < 2:
        raise StoreError("an aggregation tree needs at least leaf and root levels")

    leaf_parts = []
    merge_parts = []
    root_parts = []
    n = 0
    for expr, alias in ast.select:
        if isinstance(expr, Agg):
            if expr.func == "count" and expr.distinct and exact_distinct:
                raise UnsupportedQueryError(
                    f"aggregate {canonical_text(expr)!r} is not decomposable "
                    "into associative merges (exact count distinct)"
                )
            name = alias or f"a{n}"
            n += 1
            if expr.func == "avg":
                leaf_parts.append(f"SUM({canonical_text(expr.arg)}) AS {name}_sum")
                leaf_parts.append(f"SUM(1) AS {name}_cnt")
                merge_parts.append(f"SUM({name}_sum) AS {name}_sum")
                merge_parts.append(f"SUM({name}_cnt) AS {name}_cnt")
                root_parts.append(f"SUM({name}_sum) / SUM({name}_cnt) AS {name}")
            else:
                leaf_parts.append(_leaf_agg_sql(expr, name))
                merge_parts.append(_merge_agg_sql(expr, name))
                root_parts.append(_merge_agg_sql(expr, name).rsplit(" AS ", 1)[0] + f" AS {name}")
        else:
            text = canonical_text(expr)
            leaf_parts.append(text)
            merge_parts.append(text)
            root_parts.append(text)

    groups = _sql_group_list(ast)
    where = ""
    if ast.where is not None:
        where = f" WHERE {canonical_text(ast.where)}"
    suffix = f" GROUP BY {groups}" if groups else ""
    leaf_sql = f"SELECT {', '.join(leaf_parts)} FROM {{shard}}{where}{suffix}"
    internal_sql = f"SELECT {', '.join(merge_parts)} FROM ({{children}}){suffix}"
    root_sql = f"SELECT {', '.join(root_parts)} FROM ({{children}}){suffix}"
    if ast.having is not None:
        root_sql += f" HAVING {canonical_text(ast.having)}"
    if ast.order_by is not None:
        target = canonical_text(ast.order_by[0])
        for expr, alias in ast.select:  # render aliases back where they exist
            if alias and canonical_text(expr) == target:
                target = alias
                break
        root_sql += f" ORDER BY {target}"
        root_sql += " DESC" if ast.order_by[1] else " ASC"
    if ast.limit is not None:
        root_sql += f" LIMIT {ast.limit}"
    return AggregationPlan(ast, levels, fanin, leaf_sql, internal_sql, root_sql)


# ----------------------------------------------------------------- dispatch

@dataclass
class ShardOutcome:
    shard: int
    primary: int
    replica: int
    winner: str  # "primary" | "replica"
    primary_latency_ms: float
    replica_latency_ms: float


@dataclass
class DispatchStats:
    outcomes: list
    virtual_time_ms: float
    replica_wins: int
    query: QueryStats

    def served_by(self, shard: int) -> str:
        return next(o.winner for o in self.outcomes if o.shard == shard)


def dispatch(store, plan: AggregationPlan, assignment: ShardAssignment,
             workers: dict, timeout_ms: float = None, seed: int = 0,
             opts: ExecOptions = None, verify_replicas: bool = True):
    """Execute the tree plan over all shards with 2-way replication.

    Every sub-query runs on both its primary and replica (cache warmth);
    the first response wins, late duplicates are discarded by shard id.
    Both replicas failing is an error naming the shard, never a silent
    partial answer.
    """
    from .engine import execute_partial

    opts = opts or ExecOptions()
    for w in workers.values():
        w.seed(seed)

    ast = plan.ast
    engine_plan = build_plan(store, ast, opts)
    qstats = QueryStats(kmv_seed=opts.kmv_seed)

    responses = []  # (latency, shard, role, partials)
    outcomes = []
    dead = []
    for shard_idx in sorted(assignment.placement):
        p_id, r_id = assignment.placement[shard_idx]
        primary, replica = workers[p_id], workers[r_id]
        results = {}
        lat = {}
        for role, worker in (("primary", primary), ("replica", replica)):
            lat[role] = worker.sample_latency()
            if worker.failed:
                continue
            partials, _plan, stats = execute_partial(
                store, ast, opts, shard_indices=[shard_idx]
            )
            results[role] = partials
            qstats.merge(stats)
        if not results:
            dead.append(shard_idx)
            continue
        if verify_replicas and len(results) == 2:
            if not _partials_equal(results["primary"], results["replica"], engine_plan):
                raise InternalError(
                    f"primary and replica disagree on shard {shard_idx}"
                )
        live = {role: lat[role] for role in results}
        winner = min(live, key=lambda r: (live[r], r))
        if timeout_ms is not None and live[winner] > timeout_ms:
            raise DispatchTimeout(
                f"shard {shard_idx}: no response within {timeout_ms} ms"
            )
        outcomes.append(ShardOutcome(
            shard=shard_idx,
            primary=p_id,
            replica=r_id,
            winner=winner,
            primary_latency_ms=lat["primary"],
            replica_latency_ms=lat["replica"],
        ))
        for role, partials in results.items():
            responses.append((live[role], shard_idx, role, partials))

    if dead:
        raise PartialResultError(
            f"both replicas failed for shard(s) {dead}; refusing a partial answer",
            shard_ids=dead,
        )

    # responses arrive in latency order; merges are keyed by shard id so
    # the duplicate (second) response of a shard is discarded
    responses.sort(key=lambda r: (r[0], r[1]))
    first_by_shard = {}
    for latency, shard_idx, role, partials in responses:
        first_by_shard.setdefault(shard_idx, partials)

    merged = _tree_merge(first_by_shard, engine_plan, plan.levels, plan.fanin)
    rows = finalize_value_partials(store, merged, engine_plan, opts)

    def winner_latency(o: ShardOutcome) -> float:
        return o.primary_latency_ms if o.winner == "primary" else o.replica_latency_ms

    virtual_time = max((winner_latency(o) for o in outcomes), default=0.0)
    # every level above the leaves adds one merge epoch
    virtual_time += (plan.levels - 1) * 1.0
    stats = DispatchStats(
        outcomes=outcomes,
        virtual_time_ms=virtual_time,
        replica_wins=sum(1 for o in outcomes if o.winner == "replica"),
        query=qstats,
    )
    return QueryResult(columns=engine_plan.columns, rows=rows, stats=qstats), stats


def _tree_merge(by_shard: dict, engine_plan, levels: int, fanin: int) -> dict:
    """Merge shard partials level by level with the configured fan-in."""
    nodes = [by_shard[s] for s in sorted(by_shard)]
    if not nodes:
        return {}
    for _level in range(levels - 1):
        grouped = []
        for i in range(0, len(nodes), fanin):
            acc: dict = {}
            for part in nodes[i : i + fanin]:
                _merge_value_partials(acc, part, engine_plan)
            grouped.append(acc)
        nodes = grouped
        if len(nodes) == 1:
            break
    while len(nodes) > 1:  # levels exhausted: collapse the rest at the root
        acc = {}
        for part in nodes:
            _merge_value_partials(acc, part, engine_plan)
        nodes = [acc]
    return nodes[0]


def _partials_equal(a: dict, b: dict, engine_plan) -> bool:
    if set(a) != set(b):
        return False
    for key in a:
        pa, aa = a[key]
        pb, ab = b[key]
        if pa != pb:
            return False
        for spec, x, y in zip(engine_plan.aggs, aa, ab):
            if spec.kind == "count_distinct":
                hx = None if x is None else x.hashes().tolist()
                hy = None if y is None else y.hashes().tolist()
                if hx != hy:
                    return False
            elif x != y:
                return False
    return True
