"""Query execution: restriction splitting, chunk classification, the
counts-array group-by loop, virtual fields, and result finalization.

The pipeline per query: split the WHERE tree at the special operators
(AND/OR/NOT/IN/NOT IN/=/!=), materialize any expression operands as
virtual fields, classify every chunk as skipped / fully active / partial
from the dictionaries alone, aggregate the surviving chunks with
accumulator arrays indexed by chunk-id, translate to global-ids, and only
materialize dictionary values for the rows that survive ORDER BY/LIMIT.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .encoding import GlobalDictionary, VirtualColumn
from .errors import InternalError, SchemaError, UnsupportedQueryError
from .kmv import KMVSketch, value_hash64
from .parser import (
    Agg,
    And,
    Arith,
    Cmp,
    Col,
    Func,
    InList,
    Lit,
    Not,
    Or,
    QueryAST,
    canonical_text,
    coerce_literal,
    COERCE_FAIL,
    is_aggregate,
    parse,
    result_column_name,
)
from .values import Kind, NUMERIC_KINDS, days_to_iso, sort_key

# ------------------------------------------------------------- restrictions

SKIPPED = "skipped"
FULLY_ACTIVE = "fully_active"
PARTIAL = "partial"


@dataclass
class ChunkStatus:
    kind: str
    mask: Optional[np.ndarray] = None  # bool per row, Partial only

    def __post_init__(self):
        if self.kind == PARTIAL and self.mask is None:
            raise InternalError("partial status needs a row mask")


@dataclass(frozen=True)
class RIn:
    expr: object
    values: tuple


@dataclass(frozen=True)
class RNotIn:
    expr: object
    values: tuple


@dataclass(frozen=True)
class REq:
    expr: object
    value: object


@dataclass(frozen=True)
class RNeq:
    expr: object
    value: object


@dataclass(frozen=True)
class RAnd:
    items: tuple


@dataclass(frozen=True)
class ROr:
    items: tuple


@dataclass(frozen=True)
class RNot:
    child: object


@dataclass(frozen=True)
class RResidual:
    expr: object


def split_restriction(expr):
    """WHERE tree -> (restriction tree, expression operands to materialize).

    The special operators stay at the top of the tree; only maximal
    special-operator-free sub-expressions (the non-column operands of
    IN/NOT IN/=/!=) become virtual-field candidates. Anything else is an
    opaque residual evaluated by row scan.
    """
    candidates: list = []

    def operand(e):
        if not isinstance(e, Col):
            candidates.append(e)
        return e

    def walk(e):
        if isinstance(e, And):
            return RAnd(tuple(walk(i) for i in e.items))
        if isinstance(e, Or):
            return ROr(tuple(walk(i) for i in e.items))
        if isinstance(e, Not):
            return RNot(walk(e.child))
        if isinstance(e, InList):
            node = RNotIn if e.negated else RIn
            return node(operand(e.expr), e.values)
        if isinstance(e, Cmp) and e.op in ("=", "!="):
            left_lit = isinstance(e.left, Lit)
            right_lit = isinstance(e.right, Lit)
            if left_lit != right_lit:
                col_side, lit_side = (e.right, e.left) if left_lit else (e.left, e.right)
                node = REq if e.op == "=" else RNeq
                return node(operand(col_side), lit_side.value)
            return RResidual(e)
        if isinstance(e, (Cmp, InList)):
            return RResidual(e)
        raise UnsupportedQueryError(
            f"WHERE clause must be boolean, got {canonical_text(e)!r}"
        )

    return (walk(expr), candidates) if expr is not None else (None, [])


def _field_name(expr, shard) -> str:
    """Column backing a restriction operand (virtual fields resolved by key)."""
    if isinstance(expr, Col):
        if not shard.has_column(expr.name):
            raise SchemaError(f"unknown field {expr.name!r}")
        return expr.name
    return canonical_text(expr)


def _resolve_id_set(gdict: GlobalDictionary, values) -> np.ndarray:
    """Global-ids matching the coerced literal values (absent ones drop out)."""
    ids = set()
    for v in values:
        coerced = coerce_literal(v, gdict.kind)
        if coerced is COERCE_FAIL or coerced is None:
            continue  # comparisons with NULL are always false
        gid = gdict.lookup_id(coerced)
        if gid is not None:
            ids.add(gid)
    return np.asarray(sorted(ids), dtype=np.uint32)


def classify_chunk(store, shard_idx: int, chunk_idx: int, restriction) -> ChunkStatus:
    """Sound three-valued classification from the dictionaries alone.

    Skipped/FullyActive are only returned when provable without touching
    rows; residual predicates always force a Partial row mask.
    """
    shard = store.shards[shard_idx]
    chunk = shard.chunks[chunk_idx]
    n = chunk.row_count

    if restriction is None:
        return ChunkStatus(FULLY_ACTIVE)

    def full_mask():
        return np.ones(n, dtype=bool)

    def leaf_in(expr, values, negated: bool) -> ChunkStatus:
        name = _field_name(expr, shard)
        gdict = shard.global_dict(name)
        cc = shard.column_chunk(name, chunk_idx)
        ids = _resolve_id_set(gdict, values)
        member = np.isin(cc.dict.global_ids, ids)
        if negated:
            # rows match when not in the set and not NULL
            if gdict.has_null:
                member |= cc.dict.global_ids == 0
            if member.all():
                return ChunkStatus(SKIPPED)
            if not member.any():
                return ChunkStatus(FULLY_ACTIVE)
        else:
            if not member.any():
                return ChunkStatus(SKIPPED)
            if member.all():
                return ChunkStatus(FULLY_ACTIVE)
        elems = store.elements(shard_idx, name, chunk_idx)
        mask = member[elems]
        return ChunkStatus(PARTIAL, ~mask if negated else mask)

    def invert(st: ChunkStatus) -> ChunkStatus:
        if st.kind == SKIPPED:
            return ChunkStatus(FULLY_ACTIVE)
        if st.kind == FULLY_ACTIVE:
            return ChunkStatus(SKIPPED)
        return ChunkStatus(PARTIAL, ~st.mask)

    def walk(node) -> ChunkStatus:
        if isinstance(node, RIn):
            return leaf_in(node.expr, node.values, negated=False)
        if isinstance(node, REq):
            return leaf_in(node.expr, (node.value,), negated=False)
        if isinstance(node, RNotIn):
            return leaf_in(node.expr, node.values, negated=True)
        if isinstance(node, RNeq):
            return leaf_in(node.expr, (node.value,), negated=True)
        if isinstance(node, RNot):
            return invert(walk(node.child))
        if isinstance(node, (RAnd, ROr)):
            is_and = isinstance(node, RAnd)
            # dictionary-decidable children first so residual scans can be skipped
            items = sorted(node.items, key=lambda c: isinstance(c, RResidual))
            mask = None
            for child in items:
                st = walk(child)
                if is_and:
                    if st.kind == SKIPPED:
                        return ChunkStatus(SKIPPED)
                    if st.kind == PARTIAL:
                        mask = st.mask if mask is None else (mask & st.mask)
                else:
                    if st.kind == FULLY_ACTIVE:
                        return ChunkStatus(FULLY_ACTIVE)
                    if st.kind == PARTIAL:
                        mask = st.mask if mask is None else (mask | st.mask)
            if mask is None:
                return ChunkStatus(FULLY_ACTIVE if is_and else SKIPPED)
            return ChunkStatus(PARTIAL, mask)
        if isinstance(node, RResidual):
            values, nulls = eval_expr_chunk(store, shard_idx, chunk_idx, node.expr)
            mask = np.asarray(values, dtype=bool) & ~nulls
            return ChunkStatus(PARTIAL, mask)
        raise InternalError(f"unknown restriction node {node!r}")

    status = walk(restriction)
    if status.kind == PARTIAL and status.mask.shape != (n,):
        raise InternalError("row mask shape mismatch")
    return status


# ------------------------------------------------------- expression evaluate

def expr_kind(shard, expr) -> Kind:
    if isinstance(expr, Col):
        return shard.column_kind(expr.name)
    if isinstance(expr, Lit):
        if isinstance(expr.value, str):
            return Kind.STR
        if isinstance(expr.value, float):
            return Kind.F64
        return Kind.I64
    if isinstance(expr, Func):
        if expr.name == "date":
            return Kind.STR
        if expr.name == "tuple":
            return Kind.STR
        raise UnsupportedQueryError(f"unknown function {expr.name!r}")
    if isinstance(expr, Arith):
        lk, rk = expr_kind(shard, expr.left), expr_kind(shard, expr.right)
        for k in (lk, rk):
            if k not in NUMERIC_KINDS:
                raise UnsupportedQueryError(
                    f"arithmetic needs numeric operands, got {k.value}"
                )
        if expr.op == "/" or Kind.F64 in (lk, rk):
            return Kind.F64
        return Kind.I64
    raise UnsupportedQueryError(f"cannot type expression {canonical_text(expr)}")


def eval_expr_chunk(store, shard_idx: int, chunk_idx: int, expr):
    """Evaluate a scalar expression over all rows of one chunk.

    Returns (values, null_mask): values is an ndarray for numerics and a
    list for strings; entries under the null mask are unspecified.
    """
    shard = store.shards[shard_idx]
    n = shard.chunks[chunk_idx].row_count

    if isinstance(expr, Col):
        if not shard.has_column(expr.name):
            raise SchemaError(f"unknown field {expr.name!r}")
        gids = store.gids(shard_idx, expr.name, chunk_idx)
        return shard.global_dict(expr.name).decode_array(gids)
    if isinstance(expr, Lit):
        nulls = np.full(n, expr.value is None)
        if isinstance(expr.value, str):
            return [expr.value] * n, nulls
        if expr.value is None:
            return np.zeros(n), nulls
        return np.full(n, expr.value), nulls
    if isinstance(expr, Func) and expr.name == "date":
        if len(expr.args) != 1:
            raise UnsupportedQueryError("date() takes exactly one argument")
        arg_kind = expr_kind(shard, expr.args[0])
        if arg_kind is not Kind.TIMESTAMP:
            raise UnsupportedQueryError("date() expects a timestamp argument")
        secs, nulls = eval_expr_chunk(store, shard_idx, chunk_idx, expr.args[0])
        days = np.asarray(secs, dtype=np.int64) // 86400
        uniq, inv = np.unique(days, return_inverse=True)
        iso = [days_to_iso(int(d)) for d in uniq]
        return [iso[i] for i in inv], nulls
    if isinstance(expr, Func) and expr.name == "tuple":
        parts = [eval_expr_chunk(store, shard_idx, chunk_idx, a) for a in expr.args]
        kinds = [expr_kind(shard, a) for a in expr.args]
        rows = []
        for r in range(n):
            comps = []
            for (vals, nulls), k in zip(parts, kinds):
                v = None if nulls[r] else vals[r]
                comps.append(_encode_component(v, k))
            rows.append("\x1f".join(comps))
        return rows, np.zeros(n, dtype=bool)
    if isinstance(expr, Func):
        raise UnsupportedQueryError(f"unknown function {expr.name!r}")
    if isinstance(expr, Arith):
        expr_kind(shard, expr)  # type-check operands
        lv, ln = eval_expr_chunk(store, shard_idx, chunk_idx, expr.left)
        rv, rn = eval_expr_chunk(store, shard_idx, chunk_idx, expr.right)
        lv = np.asarray(lv)
        rv = np.asarray(rv)
        nulls = ln | rn
        if expr.op == "+":
            return lv + rv, nulls
        if expr.op == "-":
            return lv - rv, nulls
        if expr.op == "*":
            return lv * rv, nulls
        denom = np.asarray(rv, dtype=np.float64)
        zero = denom == 0
        out = np.divide(
            np.asarray(lv, dtype=np.float64),
            np.where(zero, 1.0, denom),
        )
        return out, nulls | zero
    if isinstance(expr, Cmp):
        left, right = _coerce_date_sides(shard, expr.left, expr.right)
        if left is None:  # a date/string mismatch can never hold
            return np.zeros(n, dtype=bool), np.zeros(n, dtype=bool)
        lv, ln = eval_expr_chunk(store, shard_idx, chunk_idx, left)
        rv, rn = eval_expr_chunk(store, shard_idx, chunk_idx, right)
        nulls = ln | rn
        out = _compare(expr.op, lv, rv, n)
        return out & ~nulls, np.zeros(n, dtype=bool)
    if isinstance(expr, InList):
        # residual IN over a general expression (rare; the planner fast-paths
        # dictionary-backed IN separately)
        lv, ln = eval_expr_chunk(store, shard_idx, chunk_idx, expr.expr)
        lit = set(v for v in expr.values if v is not None)
        hits = np.asarray([(v in lit) for v in _aslist(lv)])
        hits &= ~ln
        if expr.negated:
            hits = ~hits & ~ln
        return hits, np.zeros(n, dtype=bool)
    raise UnsupportedQueryError(f"cannot evaluate expression {canonical_text(expr)}")


def _aslist(values):
    return values.tolist() if isinstance(values, np.ndarray) else values


def _coerce_date_sides(shard, left, right):
    """ISO string literals compared against DATE expressions become day counts.

    Returns (left, right), or (None, None) when the literal is not a valid
    date (such a comparison can never match).
    """
    from .values import iso_to_days

    def fix(lit, other):
        if not (isinstance(lit, Lit) and isinstance(lit.value, str)):
            return lit
        if expr_kind(shard, other) is not Kind.DATE:
            return lit
        try:
            return Lit(iso_to_days(lit.value))
        except Exception:
            return None

    if isinstance(left, Lit) and not isinstance(right, Lit):
        left = fix(left, right)
        if left is None:
            return None, None
    elif isinstance(right, Lit) and not isinstance(left, Lit):
        right = fix(right, left)
        if right is None:
            return None, None
    return left, right


def _compare(op, lv, rv, n):
    if isinstance(lv, list) or isinstance(rv, list):
        ll, rl = _aslist(lv), _aslist(rv)
        pairs = zip(ll if isinstance(ll, list) else [ll] * n,
                    rl if isinstance(rl, list) else [rl] * n)
        ops = {
            "=": lambda a, b: a == b,
            "!=": lambda a, b: a != b,
            "<": lambda a, b: a < b,
            "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b,
            ">=": lambda a, b: a >= b,
        }
        f = ops[op]

        def safe(a, b):
            # mismatched operand types never match (two-valued restriction
            # semantics); masked-out placeholder values may be anything
            if a is None or b is None:
                return False
            if isinstance(a, str) != isinstance(b, str):
                return False
            return bool(f(a, b))

        return np.fromiter((safe(a, b) for a, b in pairs), dtype=bool, count=n)
    lv = np.asarray(lv)
    rv = np.asarray(rv)
    if op == "=":
        return lv == rv
    if op == "!=":
        return lv != rv
    if op == "<":
        return lv < rv
    if op == "<=":
        return lv <= rv
    if op == ">":
        return lv > rv
    return lv >= rv


# ------------------------------------------------------------ virtual fields

def _escape_component(s: str) -> str:
    return s.replace("\\", "\\b").replace("\x1f", "\\u")


def _unescape_component(s: str) -> str:
    out = []
    i = 0
    while i < len(s):
        if s[i] == "\\" and i + 1 < len(s):
            out.append("\x1f" if s[i + 1] == "u" else "\\")
            i += 2
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def _encode_component(value, kind: Kind) -> str:
    if value is None:
        return "n"
    if kind is Kind.STR:
        return "s" + _escape_component(value)
    if kind is Kind.F64:
        return "f" + repr(float(value))
    tag = {Kind.I64: "i", Kind.DATE: "d", Kind.TIMESTAMP: "t"}[kind]
    return tag + str(int(value))


def decode_composite(encoded: str) -> tuple:
    """Composite group string -> tuple of component values."""
    out = []
    for comp in encoded.split("\x1f"):
        tag, rest = comp[0], comp[1:]
        if tag == "n":
            out.append(None)
        elif tag == "s":
            out.append(_unescape_component(rest))
        elif tag == "f":
            out.append(float(rest))
        else:
            out.append(int(rest))
    return tuple(out)


def materialize_virtual_field(store, shard_idx: int, expr) -> str:
    """Materialize ``expr`` as a chunk-aligned encoded column; idempotent.

    Returns the canonical key the column is registered under. The column
    participates in chunk skipping exactly like a physical one.
    """
    shard = store.shards[shard_idx]
    if isinstance(expr, Col):
        if not shard.has_column(expr.name):
            raise SchemaError(f"unknown field {expr.name!r}")
        return expr.name
    key = canonical_text(expr)
    if key in shard.virtual_fields:
        return key
    with store.vf_lock():
        if key in shard.virtual_fields:  # compute once, publish once
            return key
        kind = expr_kind(shard, expr)
        chunk_values = []
        for ci in range(len(shard.chunks)):
            vals, nulls = eval_expr_chunk(store, shard_idx, ci, expr)
            vals = _aslist(vals)
            chunk_values.append(
                [None if nulls[r] else _pyval(vals[r], kind) for r in range(len(vals))]
            )
        flat = [v for chunk in chunk_values for v in chunk]
        bounds = []
        at = 0
        for chunk in shard.chunks:
            bounds.append((at, at + chunk.row_count))
            at += chunk.row_count
        from .encoding import encode_column

        gdict, ccs = encode_column(flat, bounds, kind)
        column = VirtualColumn(key=key, kind=kind, global_dict=gdict, chunks=ccs)
        column.eval_count = 1
        shard.virtual_fields[key] = column
    return key


def _pyval(v, kind: Kind):
    if kind is Kind.F64:
        return float(v)
    if kind in NUMERIC_KINDS:
        return int(v)
    return v


# ------------------------------------------------------------------ planning

@dataclass
class AggSpec:
    kind: str  # count sum min max avg count_distinct
    field: Optional[str]  # measure column (None for count(*))
    measure_kind: Optional[Kind]
    out_name: str

    @property
    def canon(self) -> str:
        inner = "*" if self.field is None else self.field
        if self.kind == "count_distinct":
            return f"count(distinct {inner})"
        return f"{self.kind}({inner})"


@dataclass
class QueryPlan:
    ast: QueryAST
    restriction: object
    group_exprs: list
    group_field: Optional[str]  # None = global aggregate
    composite: bool
    aggs: list  # AggSpec
    select_map: list  # ("group", component index) | ("agg", agg index)
    order: Optional[tuple]  # ("group"|"agg"|None alias target, index, desc)
    fragment_key: str
    columns: list  # (name, kind string)


@dataclass
class QueryStats:
    chunks_skipped: int = 0
    chunks_cached: int = 0
    chunks_scanned: int = 0
    rows_skipped: int = 0
    rows_cached: int = 0
    rows_scanned: int = 0
    elapsed_ms: float = 0.0
    kmv_seed: int = 1

    @property
    def total_rows(self) -> int:
        return self.rows_skipped + self.rows_cached + self.rows_scanned

    def fraction(self, part: int) -> float:
        total = self.total_rows
        return part / total if total else 0.0

    @property
    def skipped_fraction(self) -> float:
        return self.fraction(self.rows_skipped)

    @property
    def cached_fraction(self) -> float:
        return self.fraction(self.rows_cached)

    @property
    def scanned_fraction(self) -> float:
        return self.fraction(self.rows_scanned)

    def merge(self, other: "QueryStats") -> None:
        for f in ("chunks_skipped", "chunks_cached", "chunks_scanned",
                  "rows_skipped", "rows_cached", "rows_scanned"):
            setattr(self, f, getattr(self, f) + getattr(other, f))

    def as_dict(self) -> dict:
        return {
            "chunks_skipped": self.chunks_skipped,
            "chunks_cached": self.chunks_cached,
            "chunks_scanned": self.chunks_scanned,
            "rows_skipped": self.rows_skipped,
            "rows_cached": self.rows_cached,
            "rows_scanned": self.rows_scanned,
            "skipped_fraction": self.skipped_fraction,
            "cached_fraction": self.cached_fraction,
            "scanned_fraction": self.scanned_fraction,
            "elapsed_ms": self.elapsed_ms,
            "kmv_seed": self.kmv_seed,
        }


@dataclass
class QueryResult:
    columns: list  # (name, kind string)
    rows: list
    stats: QueryStats


@dataclass
class ExecOptions:
    kmv_m: int = 4096
    kmv_seed: int = 1
    kmv_unbiased: bool = False
    use_result_cache: bool = True


_AGG_RESULT_KIND = {"count": Kind.I64, "avg": Kind.F64, "count_distinct": Kind.F64}


def build_plan(store, ast: QueryAST, opts: ExecOptions) -> QueryPlan:
    if ast.table != store.table:
        raise SchemaError(f"unknown table {ast.table!r} (store holds {store.table!r})")

    restriction, candidates = split_restriction(ast.where)
    for shard_idx in range(len(store.shards)):
        for cand in candidates:
            materialize_virtual_field(store, shard_idx, cand)

    group_exprs = list(ast.group_by)
    composite = len(group_exprs) > 1
    if composite:
        group_ast = Func("tuple", tuple(group_exprs))
    elif group_exprs:
        group_ast = group_exprs[0]
    else:
        group_ast = None

    group_field = None
    if group_ast is not None:
        for shard_idx in range(len(store.shards)):
            group_field = materialize_virtual_field(store, shard_idx, group_ast)

    aggs = []
    agg_lookup = {}
    for expr, alias in ast.select:
        if not is_aggregate(expr):
            continue
        spec = _agg_spec(store, expr, alias)
        agg_lookup[canonical_text(expr)] = len(aggs)
        aggs.append(spec)
    # HAVING / ORDER BY may use aggregates that are not selected
    for extra in _extra_aggs(ast):
        key = canonical_text(extra)
        if key not in agg_lookup:
            spec = _agg_spec(store, extra, None)
            agg_lookup[key] = len(aggs)
            aggs.append(spec)

    select_map = []
    for expr, alias in ast.select:
        if is_aggregate(expr):
            select_map.append(("agg", agg_lookup[canonical_text(expr)]))
        else:
            idx = next(
                i for i, g in enumerate(group_exprs)
                if canonical_text(g) == canonical_text(expr)
            )
            select_map.append(("group", idx))

    order = None
    if ast.order_by:
        target, desc = ast.order_by
        key = canonical_text(target)
        if key in agg_lookup:
            order = ("agg", agg_lookup[key], desc)
        else:
            gi = [i for i, g in enumerate(group_exprs) if canonical_text(g) == key]
            if not gi:
                raise SchemaError(f"ORDER BY target {key!r} is not selected or grouped")
            order = ("group", gi[0], desc)

    fragment = f"{group_field}|{','.join(a.canon for a in aggs)}"
    if any(a.kind == "count_distinct" for a in aggs):
        fragment += f"|kmv:{opts.kmv_m}:{opts.kmv_seed}"

    columns = []
    for (expr, alias), (role, idx) in zip(ast.select, select_map):
        if role == "agg":
            spec = aggs[idx]
            kind = _AGG_RESULT_KIND.get(spec.kind) or spec.measure_kind
            columns.append((result_column_name(expr, alias), kind.value))
        else:
            kind = expr_kind(store.shards[0], group_exprs[idx])
            columns.append((result_column_name(expr, alias), kind.value))

    return QueryPlan(
        ast=ast,
        restriction=restriction,
        group_exprs=group_exprs,
        group_field=group_field,
        composite=composite,
        aggs=aggs,
        select_map=select_map,
        order=order,
        fragment_key=fragment,
        columns=columns,
    )


def _extra_aggs(ast: QueryAST):
    out = []

    def scan(e):
        if isinstance(e, Agg):
            out.append(e)
        elif isinstance(e, (And, Or)):
            for i in e.items:
                scan(i)
        elif isinstance(e, Not):
            scan(e.child)
        elif isinstance(e, (Cmp, Arith)):
            scan(e.left)
            scan(e.right)
        elif isinstance(e, InList):
            scan(e.expr)

    if ast.having is not None:
        scan(ast.having)
    if ast.order_by is not None:
        scan(ast.order_by[0])
    return out


def _agg_spec(store, expr: Agg, alias) -> AggSpec:
    kind = "count_distinct" if (expr.func == "count" and expr.distinct) else expr.func
    field_name = None
    measure_kind = None
    if expr.arg is not None:
        for shard_idx in range(len(store.shards)):
            field_name = materialize_virtual_field(store, shard_idx, expr.arg)
        measure_kind = store.shards[0].column_kind(field_name) \
            if isinstance(expr.arg, Col) else expr_kind(store.shards[0], expr.arg)
        if kind in ("sum", "avg") and measure_kind not in NUMERIC_KINDS:
            raise UnsupportedQueryError(
                f"{kind.upper()} needs a numeric column, got {measure_kind.value}"
            )
    elif kind != "count":
        raise UnsupportedQueryError(f"{kind.upper()} needs an argument")
    return AggSpec(kind, field_name, measure_kind, result_column_name(expr, alias))


# ------------------------------------------------------- chunk-level group-by

class ChunkAccums:
    """Per-chunk accumulators indexed by the group column's chunk-ids."""

    __slots__ = ("presence", "per_agg", "group_gids")

    def __init__(self, presence, per_agg, group_gids):
        self.presence = presence  # rows contributing per slot
        self.per_agg = per_agg  # one entry per AggSpec
        self.group_gids = group_gids  # slot -> global-id (None for global agg)


def execute_chunk_groupby(store, shard_idx: int, chunk_idx: int,
                          status: ChunkStatus, plan: QueryPlan,
                          opts: ExecOptions) -> ChunkAccums:
    """The counts-array inner loop over one chunk.

    Accumulator arrays have the chunk-dictionary's size; rows passing the
    mask bump the slot their chunk-id addresses. Results are translated to
    global-ids by the caller via ``group_gids``.
    """
    if status.kind == SKIPPED:
        raise InternalError("cannot aggregate a skipped chunk")
    shard = store.shards[shard_idx]
    chunk = shard.chunks[chunk_idx]
    mask = status.mask if status.kind == PARTIAL else None

    if plan.group_field is not None:
        cc = shard.column_chunk(plan.group_field, chunk_idx)
        n_slots = len(cc.dict)
        g = store.elements(shard_idx, plan.group_field, chunk_idx).astype(np.int64)
        group_gids = cc.dict.global_ids
    else:
        n_slots = 1
        g = np.zeros(chunk.row_count, dtype=np.int64)
        group_gids = None

    gm = g[mask] if mask is not None else g
    presence = np.bincount(gm, minlength=n_slots).astype(np.int64)

    per_agg = []
    for spec in plan.aggs:
        per_agg.append(
            _accumulate(store, shard_idx, chunk_idx, spec, g, gm, mask, n_slots, opts)
        )
    return ChunkAccums(presence, per_agg, group_gids)


def _measure_arrays(store, shard_idx, chunk_idx, spec):
    shard = store.shards[shard_idx]
    gdict = shard.global_dict(spec.field)
    m_gids = store.gids(shard_idx, spec.field, chunk_idx).astype(np.int64)
    null_mask = (m_gids == 0) if gdict.has_null else np.zeros(len(m_gids), dtype=bool)
    return gdict, m_gids, null_mask


def _accumulate(store, shard_idx, chunk_idx, spec: AggSpec, g, gm, mask, n_slots, opts):
    if spec.kind == "count":
        return np.bincount(gm, minlength=n_slots).astype(np.int64)

    gdict, m_gids, m_null = _measure_arrays(store, shard_idx, chunk_idx, spec)
    live = ~m_null if mask is None else (mask & ~m_null)
    g_live = g[live]

    if spec.kind in ("sum", "avg"):
        vals, _ = gdict.decode_array(m_gids[live])
        vals = np.asarray(vals)
        if spec.measure_kind is Kind.F64:
            sums = np.zeros(n_slots, dtype=np.float64)
        else:
            sums = np.zeros(n_slots, dtype=np.int64)
            vals = vals.astype(np.int64)
        np.add.at(sums, g_live, vals)
        counts = np.bincount(g_live, minlength=n_slots).astype(np.int64)
        return (sums, counts)

    if spec.kind in ("min", "max"):
        # dictionary rank order == value order, so min/max work in gid space
        slot_gids = np.full(n_slots, -1, dtype=np.int64)
        if len(g_live):
            target = m_gids[live]
            if spec.kind == "min":
                init = np.full(n_slots, np.iinfo(np.int64).max, dtype=np.int64)
                np.minimum.at(init, g_live, target)
                got = init != np.iinfo(np.int64).max
            else:
                init = np.full(n_slots, -1, dtype=np.int64)
                np.maximum.at(init, g_live, target)
                got = init >= 0
            slot_gids[got] = init[got]
        return slot_gids

    if spec.kind == "count_distinct":
        hashes_per_slot = [None] * n_slots
        if len(g_live):
            pairs = (g_live.astype(np.uint64) << np.uint64(32)) | m_gids[live].astype(np.uint64)
            uniq = np.unique(pairs)
            u_slots = (uniq >> np.uint64(32)).astype(np.int64)
            u_mgids = (uniq & np.uint64(0xFFFFFFFF)).astype(np.int64)
            distinct_gids = np.unique(u_mgids)
            hash_of = {
                int(gid): value_hash64(gdict.value_at(int(gid)), opts.kmv_seed)
                for gid in distinct_gids
            }
            hashes = np.asarray([hash_of[int(m)] for m in u_mgids], dtype=np.uint64)
            for slot in range(n_slots):
                sel = u_slots == slot
                if sel.any():
                    hashes_per_slot[slot] = hashes[sel]
        return hashes_per_slot

    raise InternalError(f"unknown aggregate {spec.kind}")  # pragma: no cover


# -------------------------------------------------------- shard-level merging

class ShardAccums:
    """Global-id-indexed accumulators for one shard."""

    def __init__(self, store, shard_idx: int, plan: QueryPlan, opts: ExecOptions):
        self.store = store
        self.shard_idx = shard_idx
        self.plan = plan
        self.opts = opts
        shard = store.shards[shard_idx]
        self.size = len(shard.global_dict(plan.group_field)) if plan.group_field else 1
        self.presence = np.zeros(self.size, dtype=np.int64)
        self.per_agg = [self._fresh(spec) for spec in plan.aggs]

    def _fresh(self, spec: AggSpec):
        if spec.kind == "count":
            return np.zeros(self.size, dtype=np.int64)
        if spec.kind in ("sum", "avg"):
            dtype = np.float64 if spec.measure_kind is Kind.F64 else np.int64
            return (np.zeros(self.size, dtype=dtype), np.zeros(self.size, dtype=np.int64))
        if spec.kind in ("min", "max"):
            return np.full(self.size, -1, dtype=np.int64)
        if spec.kind == "count_distinct":
            return {}
        raise InternalError(spec.kind)  # pragma: no cover

    def merge_chunk(self, accums: ChunkAccums) -> None:
        slots = accums.group_gids if accums.group_gids is not None else np.zeros(1, dtype=np.int64)
        idx = slots.astype(np.int64)
        self.presence[idx] += accums.presence
        for spec, shard_acc, chunk_acc in zip(self.plan.aggs, self.per_agg, accums.per_agg):
            if spec.kind == "count":
                shard_acc[idx] += chunk_acc
            elif spec.kind in ("sum", "avg"):
                shard_acc[0][idx] += chunk_acc[0]
                shard_acc[1][idx] += chunk_acc[1]
            elif spec.kind in ("min", "max"):
                have = chunk_acc >= 0
                cur = shard_acc[idx]
                fresh = (cur < 0) & have
                shard_acc[idx[fresh]] = chunk_acc[fresh]
                both = (cur >= 0) & have
                if both.any():
                    op = np.minimum if spec.kind == "min" else np.maximum
                    shard_acc[idx[both]] = op(cur[both], chunk_acc[both])
            elif spec.kind == "count_distinct":
                for slot, hashes in enumerate(chunk_acc):
                    if hashes is None:
                        continue
                    gid = int(idx[slot])
                    sk = shard_acc.get(gid)
                    if sk is None:
                        sk = KMVSketch(self.opts.kmv_m, self.opts.kmv_seed)
                        shard_acc[gid] = sk
                    sk.add_hashes(hashes)


# ----------------------------------------------------------------- execution

def execute(store, query, opts: ExecOptions = None) -> QueryResult:
    """Full pipeline over every shard of the store."""
    opts = opts or ExecOptions()
    t0 = time.perf_counter()
    ast = parse(query) if isinstance(query, str) else query
    plan = build_plan(store, ast, opts)

    stats = QueryStats(kmv_seed=opts.kmv_seed)
    shard_accums = []
    for shard_idx in range(len(store.shards)):
        acc = _run_shard(store, shard_idx, plan, opts, stats)
        shard_accums.append(acc)

    if len(shard_accums) == 1 and not plan.composite:
        rows = _finalize_gid_space(store, shard_accums[0], plan, opts)
    else:
        merged = {}
        for acc in shard_accums:
            _merge_value_partials(merged, shard_to_value_partials(store, acc), plan)
        rows = finalize_value_partials(store, merged, plan, opts)

    stats.elapsed_ms = (time.perf_counter() - t0) * 1000
    return QueryResult(columns=plan.columns, rows=rows, stats=stats)


def _run_shard(store, shard_idx: int, plan: QueryPlan, opts: ExecOptions,
               stats: QueryStats) -> ShardAccums:
    shard = store.shards[shard_idx]
    acc = ShardAccums(store, shard_idx, plan, opts)
    for ci, chunk in enumerate(shard.chunks):
        status = classify_chunk(store, shard_idx, ci, plan.restriction)
        if status.kind == SKIPPED:
            stats.chunks_skipped += 1
            stats.rows_skipped += chunk.row_count
            continue
        if status.kind == FULLY_ACTIVE and opts.use_result_cache:
            cached = store.result_cache.lookup(shard.shard_id, ci, plan.fragment_key)
            if cached is not None:
                stats.chunks_cached += 1
                stats.rows_cached += chunk.row_count
                acc.merge_chunk(cached)
                continue
        accums = execute_chunk_groupby(store, shard_idx, ci, status, plan, opts)
        if status.kind == FULLY_ACTIVE and opts.use_result_cache:
            store.result_cache.store(shard.shard_id, ci, plan.fragment_key, accums)
        stats.chunks_scanned += 1
        stats.rows_scanned += chunk.row_count
        acc.merge_chunk(accums)
    return acc


def _present_gids(acc: ShardAccums) -> np.ndarray:
    if acc.plan.group_field is None:
        return np.zeros(1, dtype=np.int64)  # global aggregate: always one group
    return np.flatnonzero(acc.presence > 0).astype(np.int64)


def _finalize_agg_scalar(spec: AggSpec, shard_acc, gid: int, gdict_cache, store,
                         shard_idx, opts: ExecOptions):
    """Value-space result of one aggregate for one group."""
    if spec.kind == "count":
        return int(shard_acc[gid])
    if spec.kind in ("sum", "avg"):
        s, c = shard_acc[0][gid], shard_acc[1][gid]
        if c == 0:
            return None
        if spec.kind == "avg":
            return float(s) / float(c)
        return float(s) if spec.measure_kind is Kind.F64 else int(s)
    if spec.kind in ("min", "max"):
        g = int(shard_acc[gid])
        if g < 0:
            return None
        return gdict_cache(spec.field).value_at(g)
    if spec.kind == "count_distinct":
        sk = shard_acc.get(gid)
        if sk is None:
            return 0
        return _distinct_result(sk, opts)
    raise InternalError(spec.kind)  # pragma: no cover


def _distinct_result(sk: KMVSketch, opts: ExecOptions):
    if not sk.saturated:
        return int(sk.estimate())
    return sk.estimate(unbiased=opts.kmv_unbiased)


def _finalize_gid_space(store, acc: ShardAccums, plan: QueryPlan, opts: ExecOptions):
    """Single-shard finalize: order and limit in gid space, then materialize."""
    shard_idx = acc.shard_idx
    shard = store.shards[shard_idx]
    gids = _present_gids(acc)
    if plan.group_field is None and not len(gids):
        gids = np.zeros(1, dtype=np.int64)

    # per-group sortable metrics for ORDER BY / HAVING, all in gid space
    def agg_scalar(ai, gid):
        return _finalize_agg_scalar(
            plan.aggs[ai], acc.per_agg[ai], gid, shard.global_dict, store, shard_idx, opts
        )

    if plan.ast.having is not None:
        keep = [g for g in gids if _eval_having(plan, lambda ai, g=g: agg_scalar(ai, int(g)))]
        gids = np.asarray(keep, dtype=np.int64)

    records = [int(g) for g in gids]
    if plan.order:
        role, idx, desc = plan.order
        if role == "agg":
            spec = plan.aggs[idx]
            if spec.kind in ("min", "max"):
                # gid order == value order within one shard's dictionary
                metric = {g: int(acc.per_agg[idx][g]) for g in records}
                keyf = lambda g: _null_first(metric[g] if metric[g] >= 0 else None)
            else:
                keyf = lambda g: _null_first(agg_scalar(idx, g))
        else:
            keyf = lambda g: (1, g)
        wrap = _negate_key if desc else (lambda k: k)
        records.sort(key=lambda g: (wrap(keyf(g)), g))
    else:
        records.sort()

    if plan.ast.limit is not None:
        records = records[: plan.ast.limit]

    gdict = shard.global_dict(plan.group_field) if plan.group_field else None
    rows = []
    for g in records:
        group_vals = None
        if gdict is not None:
            v = gdict.value_at(g)
            group_vals = decode_composite(v) if plan.composite else (v,)
        rows.append(_project_row(plan, group_vals, lambda ai, g=g: agg_scalar(ai, g)))
    return rows


class _Rev:
    """Reverses the comparison order of a wrapped sort key."""

    __slots__ = ("k",)

    def __init__(self, k):
        self.k = k

    def __lt__(self, other):
        return other.k < self.k

    def __eq__(self, other):
        return other.k == self.k


def _negate_key(k):
    return _Rev(k)


def _null_first(v):
    return (0, 0) if v is None else (1, v)


def _eval_having(plan: QueryPlan, agg_scalar):
    """HAVING over finalized aggregate scalars; aliases resolve to aggregates."""
    ast = plan.ast
    alias_map = {alias: expr for expr, alias in ast.select if alias}
    agg_index = {plan.aggs[i].canon: i for i in range(len(plan.aggs))}

    def scalar(e):
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Col) and e.name in alias_map:
            return scalar(alias_map[e.name])
        if isinstance(e, Agg):
            spec = _agg_canon(e)
            if spec in agg_index:
                return agg_scalar(agg_index[spec])
            raise UnsupportedQueryError(f"HAVING aggregate {spec!r} not computed")
        if isinstance(e, Arith):
            l, r = scalar(e.left), scalar(e.right)
            if l is None or r is None:
                return None
            if e.op == "+":
                return l + r
            if e.op == "-":
                return l - r
            if e.op == "*":
                return l * r
            return None if r == 0 else l / r
        raise UnsupportedQueryError(
            f"HAVING references {canonical_text(e)!r}, which is not an aggregate"
        )

    def walk(e):
        if isinstance(e, And):
            return all(walk(i) for i in e.items)
        if isinstance(e, Or):
            return any(walk(i) for i in e.items)
        if isinstance(e, Not):
            return not walk(e.child)
        if isinstance(e, Cmp):
            l, r = scalar(e.left), scalar(e.right)
            if l is None or r is None:
                return False
            return {
                "=": l == r, "!=": l != r, "<": l < r,
                "<=": l <= r, ">": l > r, ">=": l >= r,
            }[e.op]
        if isinstance(e, InList):
            v = scalar(e.expr)
            if v is None:
                return False
            hit = v in [x for x in e.values if x is not None]
            return (not hit) if e.negated else hit
        raise UnsupportedQueryError("HAVING must be a boolean expression")

    return walk(ast.having)


def _agg_canon(e: Agg) -> str:
    kind = "count_distinct" if (e.func == "count" and e.distinct) else e.func
    inner = "*" if e.arg is None else canonical_text(e.arg)
    if kind == "count_distinct":
        return f"count(distinct {inner})"
    return f"{kind}({inner})"


def _project_row(plan: QueryPlan, group_vals, agg_scalar):
    out = []
    for role, idx in plan.select_map:
        if role == "agg":
            out.append(agg_scalar(idx))
        else:
            out.append(group_vals[idx])
    return tuple(out)


# ---------------------------------------------- value-space partials (shards)

def shard_to_value_partials(store, acc: ShardAccums) -> dict:
    """Materialize a shard's accumulators into value-keyed partial rows.

    Shards do not share dictionaries, so partial aggregates travel as
    (group value, accumulator tuple) pairs.
    """
    plan = acc.plan
    shard = store.shards[acc.shard_idx]
    out = {}
    gids = _present_gids(acc)
    if plan.group_field is not None:
        gdict = shard.global_dict(plan.group_field)
        keys = gdict.values_at(gids)
    else:
        keys = [None for _ in gids]
    for g, key in zip(gids, keys):
        g = int(g)
        accums = []
        for spec, shard_acc in zip(plan.aggs, acc.per_agg):
            if spec.kind == "count":
                accums.append(int(shard_acc[g]))
            elif spec.kind in ("sum", "avg"):
                s = shard_acc[0][g]
                accums.append(
                    (float(s) if spec.measure_kind is Kind.F64 else int(s),
                     int(shard_acc[1][g]))
                )
            elif spec.kind in ("min", "max"):
                mg = int(shard_acc[g])
                accums.append(None if mg < 0 else shard.global_dict(spec.field).value_at(mg))
            elif spec.kind == "count_distinct":
                accums.append(shard_acc.get(g))
        out[key] = (int(acc.presence[g]), accums)
    return out


def _merge_value_partials(target: dict, part: dict, plan: QueryPlan) -> None:
    for key, (presence, accums) in part.items():
        if key not in target:
            sketches = [
                a if not isinstance(a, KMVSketch) else _clone_sketch(a) for a in accums
            ]
            target[key] = (presence, sketches)
            continue
        t_presence, t_accums = target[key]
        merged = []
        for spec, a, b in zip(plan.aggs, t_accums, accums):
            merged.append(_merge_accum(spec, a, b))
        target[key] = (t_presence + presence, merged)


def _clone_sketch(sk):
    if sk is None:
        return None
    clone = KMVSketch(sk.m, sk.seed)
    clone.merge(sk)
    return clone


def _merge_accum(spec: AggSpec, a, b):
    if spec.kind == "count":
        return a + b
    if spec.kind in ("sum", "avg"):
        return (a[0] + b[0], a[1] + b[1])
    if spec.kind == "min":
        if a is None:
            return b
        if b is None:
            return a
        return a if sort_key(a) <= sort_key(b) else b
    if spec.kind == "max":
        if a is None:
            return b
        if b is None:
            return a
        return a if sort_key(a) >= sort_key(b) else b
    if spec.kind == "count_distinct":
        if a is None:
            return _clone_sketch(b)
        if b is None:
            return a
        a.merge(b)
        return a
    raise InternalError(spec.kind)  # pragma: no cover


def finalize_value_partials(store, merged: dict, plan: QueryPlan,
                            opts: ExecOptions) -> list:
    """Order, limit and project value-keyed partials (multi-shard / tree root)."""
    if plan.group_field is None and not merged:
        merged = {None: (0, [_empty_accum(spec) for spec in plan.aggs])}

    def finalize_one(spec: AggSpec, accum):
        if spec.kind == "count":
            return int(accum)
        if spec.kind in ("sum", "avg"):
            s, c = accum
            if c == 0:
                return None
            if spec.kind == "avg":
                return float(s) / float(c)
            return float(s) if spec.measure_kind is Kind.F64 else int(s)
        if spec.kind in ("min", "max"):
            return accum
        if spec.kind == "count_distinct":
            if accum is None:
                return 0
            return _distinct_result(accum, opts)
        raise InternalError(spec.kind)  # pragma: no cover

    records = []
    for key, (presence, accums) in merged.items():
        final_aggs = [finalize_one(s, a) for s, a in zip(plan.aggs, accums)]
        group_vals = None
        if plan.group_field is not None:
            group_vals = decode_composite(key) if plan.composite else (key,)
        records.append((key, group_vals, final_aggs))

    if plan.ast.having is not None:
        records = [
            r for r in records
            if _eval_having(plan, lambda ai, r=r: r[2][ai])
        ]

    def group_sort_key(rec):
        if rec[1] is None:
            return ()
        return tuple(sort_key(v) for v in rec[1])

    if plan.order:
        role, idx, desc = plan.order
        if role == "agg":
            keyf = lambda rec: (0,) if rec[2][idx] is None else (1, sort_key(rec[2][idx]))
        else:
            keyf = lambda rec: sort_key(rec[1][idx])
        wrap = _negate_key if desc else (lambda k: k)
        records.sort(key=lambda rec: (wrap(keyf(rec)),) + (group_sort_key(rec),))
    else:
        records.sort(key=group_sort_key)

    if plan.ast.limit is not None:
        records = records[: plan.ast.limit]

    return [
        _project_row(plan, group_vals, lambda ai, fa=final_aggs: fa[ai])
        for _, group_vals, final_aggs in records
    ]


def _empty_accum(spec: AggSpec):
    if spec.kind == "count":
        return 0
    if spec.kind in ("sum", "avg"):
        return (0, 0)
    return None


# ------------------------------------------------------ distribute-facing API

def execute_partial(store, query, opts: ExecOptions = None,
                    shard_indices=None) -> tuple:
    """Leaf-level execution: value-keyed partial aggregates plus stats.

    Used by the distributed tree; WHERE is evaluated here ("pushed down"),
    ORDER BY/LIMIT/HAVING are left to the root.
    """
    opts = opts or ExecOptions()
    ast = parse(query) if isinstance(query, str) else query
    plan = build_plan(store, ast, opts)
    stats = QueryStats(kmv_seed=opts.kmv_seed)
    merged: dict = {}
    indices = range(len(store.shards)) if shard_indices is None else shard_indices
    for shard_idx in indices:
        acc = _run_shard(store, shard_idx, plan, opts, stats)
        _merge_value_partials(merged, shard_to_value_partials(store, acc), plan)
    return merged, plan, stats
