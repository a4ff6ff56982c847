"""Brute-force row-scan oracle: the ground truth for differential tests.

Evaluates the same query subset as the engine by naive iteration over the
raw rows, with exact aggregation (including exact COUNT DISTINCT). It
shares the parser and the value-domain helpers with the engine but none
of its execution machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import SchemaError, UnsupportedQueryError
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
from .values import Kind, NUMERIC_KINDS, Schema, sort_key, timestamp_to_days, days_to_iso


@dataclass
class OracleTable:
    schema: Schema
    rows: list  # list of dicts: field name -> value

    @classmethod
    def from_columns(cls, schema: Schema, columns: dict) -> "OracleTable":
        names = schema.names()
        n = len(columns[names[0]]) if names else 0
        rows = [{f: columns[f][i] for f in names} for i in range(n)]
        return cls(schema, rows)

    def kind_of(self, expr) -> Kind:
        if isinstance(expr, Col):
            return self.schema.kind_of(expr.name)
        if isinstance(expr, Lit):
            if isinstance(expr.value, str):
                return Kind.STR
            if isinstance(expr.value, float):
                return Kind.F64
            return Kind.I64
        if isinstance(expr, Func):
            if expr.name in ("date", "tuple"):
                return Kind.STR
            raise UnsupportedQueryError(f"unknown function {expr.name!r}")
        if isinstance(expr, Arith):
            lk, rk = self.kind_of(expr.left), self.kind_of(expr.right)
            for k in (lk, rk):
                if k not in NUMERIC_KINDS:
                    raise UnsupportedQueryError("arithmetic needs numeric operands")
            if expr.op == "/" or Kind.F64 in (lk, rk):
                return Kind.F64
            return Kind.I64
        raise UnsupportedQueryError(f"cannot type {canonical_text(expr)}")


def _eval_scalar(table: OracleTable, row: dict, expr):
    if isinstance(expr, Col):
        if expr.name not in row:
            raise SchemaError(f"unknown field {expr.name!r}")
        return row[expr.name]
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Func) and expr.name == "date":
        if len(expr.args) != 1:
            raise UnsupportedQueryError("date() takes exactly one argument")
        if table.kind_of(expr.args[0]) is not Kind.TIMESTAMP:
            raise UnsupportedQueryError("date() expects a timestamp argument")
        secs = _eval_scalar(table, row, expr.args[0])
        if secs is None:
            return None
        return days_to_iso(timestamp_to_days(int(secs)))
    if isinstance(expr, Func):
        raise UnsupportedQueryError(f"unknown function {expr.name!r}")
    if isinstance(expr, Arith):
        left = _eval_scalar(table, row, expr.left)
        right = _eval_scalar(table, row, expr.right)
        if left is None or right is None:
            return None
        if expr.op == "+":
            out = left + right
        elif expr.op == "-":
            out = left - right
        elif expr.op == "*":
            out = left * right
        else:
            if right == 0:
                return None
            return left / right
        if table.kind_of(expr) is Kind.F64:
            return float(out)
        return out
    raise UnsupportedQueryError(f"cannot evaluate {canonical_text(expr)}")


def _cmp(op: str, left, right) -> bool:
    if left is None or right is None:
        return False
    if isinstance(left, str) != isinstance(right, str):
        return False
    if op == "=":
        return left == right
    if op == "!=":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def _coerced_set(table: OracleTable, expr, values):
    kind = table.kind_of(expr)
    out = set()
    for v in values:
        c = coerce_literal(v, kind)
        if c is not COERCE_FAIL and c is not None:
            out.add(c)
    return out


def _eval_bool(table: OracleTable, row: dict, expr) -> bool:
    if isinstance(expr, And):
        return all(_eval_bool(table, row, i) for i in expr.items)
    if isinstance(expr, Or):
        return any(_eval_bool(table, row, i) for i in expr.items)
    if isinstance(expr, Not):
        return not _eval_bool(table, row, expr.child)
    if isinstance(expr, InList):
        v = _eval_scalar(table, row, expr.expr)
        if v is None:
            return False
        hit = v in _coerced_set(table, expr.expr, expr.values)
        return (not hit) if expr.negated else hit
    if isinstance(expr, Cmp):
        left = _eval_scalar(table, row, expr.left)
        right = _eval_scalar(table, row, expr.right)
        # the only cross-type coercion: ISO string literals against DATE columns
        left, right = _date_fix(table, expr.left, expr.right, left, right)
        return _cmp(expr.op, left, right)
    raise UnsupportedQueryError("WHERE clause must be boolean")


def _date_fix(table: OracleTable, lexpr, rexpr, left, right):
    from .values import iso_to_days

    def fix(lit_expr, other_expr, lit_val):
        if not (isinstance(lit_expr, Lit) and isinstance(lit_val, str)):
            return lit_val
        if table.kind_of(other_expr) is not Kind.DATE:
            return lit_val
        try:
            return iso_to_days(lit_val)
        except Exception:
            return None

    if isinstance(lexpr, Lit) and not isinstance(rexpr, Lit):
        left = fix(lexpr, rexpr, left)
    elif isinstance(rexpr, Lit) and not isinstance(lexpr, Lit):
        right = fix(rexpr, lexpr, right)
    return left, right


class _ExactAgg:
    def __init__(self, spec: Agg):
        self.spec = spec
        self.count = 0
        self.total = 0
        self.non_null = 0
        self.best = None
        self.distinct = set()

    def add(self, table, row):
        self.count += 1
        if self.spec.arg is None:
            return
        v = _eval_scalar(table, row, self.spec.arg)
        if v is None:
            return
        self.non_null += 1
        func = self.spec.func
        if func in ("sum", "avg"):
            self.total += v
        elif func == "min":
            if self.best is None or sort_key(v) < sort_key(self.best):
                self.best = v
        elif func == "max":
            if self.best is None or sort_key(v) > sort_key(self.best):
                self.best = v
        if self.spec.distinct:
            self.distinct.add(v)

    def result(self, table):
        func = self.spec.func
        if func == "count":
            if self.spec.distinct:
                return len(self.distinct)
            return self.count
        if self.non_null == 0:
            return None
        if func == "sum":
            if table.kind_of(self.spec.arg) is Kind.F64:
                return float(self.total)
            return self.total
        if func == "avg":
            return float(self.total) / float(self.non_null)
        return self.best


def oracle_query(table: OracleTable, query) -> tuple:
    """Naive evaluation; returns (columns, rows) like the engine."""
    ast = parse(query) if isinstance(query, str) else query
    if ast.table != table.schema.table:
        raise SchemaError(f"unknown table {ast.table!r}")

    matching = [
        row for row in table.rows
        if ast.where is None or _eval_bool(table, row, ast.where)
    ]

    agg_exprs = []
    seen = {}
    for expr, _alias in ast.select:
        if is_aggregate(expr):
            key = canonical_text(expr)
            if key not in seen:
                seen[key] = len(agg_exprs)
                agg_exprs.append(expr)
    for extra in _order_having_aggs(ast):
        key = canonical_text(extra)
        if key not in seen:
            seen[key] = len(agg_exprs)
            agg_exprs.append(extra)

    for expr, _alias in ast.select:
        if is_aggregate(expr):
            if expr.func in ("sum", "avg") and table.kind_of(expr.arg) not in NUMERIC_KINDS:
                raise UnsupportedQueryError(f"{expr.func.upper()} needs a numeric column")

    groups: dict = {}
    if ast.group_by:
        for row in matching:
            key = tuple(_eval_scalar(table, row, g) for g in ast.group_by)
            state = groups.get(key)
            if state is None:
                state = [_ExactAgg(a) for a in agg_exprs]
                groups[key] = state
            for st in state:
                st.add(table, row)
    else:
        state = [_ExactAgg(a) for a in agg_exprs]
        for row in matching:
            for st in state:
                st.add(table, row)
        groups[()] = state

    records = []
    for key, state in groups.items():
        finals = [st.result(table) for st in state]
        records.append((key, finals))

    if ast.having is not None:
        records = [
            r for r in records if _having(table, ast, seen, r[1])
        ]

    def group_key(rec):
        return tuple(sort_key(v) for v in rec[0])

    if ast.order_by:
        target, desc = ast.order_by
        tkey = canonical_text(target)
        if tkey in seen:
            idx = seen[tkey]
            keyf = lambda rec: (0,) if rec[1][idx] is None else (1, sort_key(rec[1][idx]))
        else:
            gi = [i for i, g in enumerate(ast.group_by) if canonical_text(g) == tkey]
            if not gi:
                raise SchemaError(f"ORDER BY target {tkey!r} is not selected or grouped")
            keyf = lambda rec: sort_key(rec[0][gi[0]])
        records.sort(key=group_key)
        records.sort(key=keyf, reverse=desc)
    else:
        records.sort(key=group_key)

    if ast.limit is not None:
        records = records[: ast.limit]

    group_pos = {canonical_text(g): i for i, g in enumerate(ast.group_by)}
    columns = []
    rows = []
    for expr, alias in ast.select:
        name = result_column_name(expr, alias)
        if is_aggregate(expr):
            kind = _agg_kind(table, expr)
        else:
            kind = table.kind_of(expr)
        columns.append((name, kind.value))
    for key, finals in records:
        out = []
        for expr, _alias in ast.select:
            if is_aggregate(expr):
                out.append(finals[seen[canonical_text(expr)]])
            else:
                out.append(key[group_pos[canonical_text(expr)]])
        rows.append(tuple(out))
    return columns, rows


def _order_having_aggs(ast: QueryAST):
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


def _agg_kind(table: OracleTable, expr: Agg) -> Kind:
    if expr.func == "count":
        return Kind.F64 if expr.distinct else Kind.I64
    if expr.func == "avg":
        return Kind.F64
    return table.kind_of(expr.arg)


def _having(table: OracleTable, ast: QueryAST, seen: dict, finals) -> bool:
    aliases = {alias: expr for expr, alias in ast.select if alias}

    def scalar(e):
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, Col) and e.name in aliases:
            return scalar(aliases[e.name])
        if isinstance(e, Agg):
            return finals[seen[canonical_text(e)]]
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
        raise UnsupportedQueryError("HAVING must reference aggregates or aliases")

    def walk(e):
        if isinstance(e, And):
            return all(walk(i) for i in e.items)
        if isinstance(e, Or):
            return any(walk(i) for i in e.items)
        if isinstance(e, Not):
            return not walk(e.child)
        if isinstance(e, Cmp):
            return _cmp(e.op, scalar(e.left), scalar(e.right))
        if isinstance(e, InList):
            v = scalar(e.expr)
            if v is None:
                return False
            hit = v in [x for x in e.values if x is not None]
            return (not hit) if e.negated else hit
        raise UnsupportedQueryError("HAVING must be a boolean expression")

    return walk(ast.having)
