"""Hand-rolled lexer and recursive-descent parser for the query subset.

Supported shape:

    SELECT expr [AS alias], ... FROM table
    [WHERE boolean-expr] [GROUP BY expr, ...] [HAVING boolean-expr]
    [ORDER BY alias-or-expr [ASC|DESC]] [LIMIT n]

Aggregates: COUNT(*), COUNT(DISTINCT field), SUM, MIN, MAX, AVG.
Scalar functions: date(timestamp). WHERE trees may mix AND/OR/NOT,
IN/NOT IN/=/!= and free-form comparisons/arithmetic; keywords are
case-insensitive; string literals take single or double quotes with
doubled-quote escapes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import ParseError
from .values import Kind, iso_to_days

AGGREGATE_FUNCS = {"count", "sum", "min", "max", "avg"}
SCALAR_FUNCS = {"date"}

_KEYWORDS = {
    "select", "as", "from", "where", "group", "by", "having", "order",
    "limit", "and", "or", "not", "in", "asc", "desc", "null", "distinct",
}


# ---------------------------------------------------------------- AST nodes

@dataclass(frozen=True)
class Col:
    name: str


@dataclass(frozen=True)
class Lit:
    value: object  # None | str | int | float


@dataclass(frozen=True)
class Func:
    name: str
    args: tuple


@dataclass(frozen=True)
class Arith:
    op: str  # + - * /
    left: object
    right: object


@dataclass(frozen=True)
class Cmp:
    op: str  # = != < <= > >=
    left: object
    right: object


@dataclass(frozen=True)
class InList:
    expr: object
    values: tuple
    negated: bool = False


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Not:
    child: object


@dataclass(frozen=True)
class Agg:
    func: str  # count sum min max avg
    arg: object  # None for COUNT(*)
    distinct: bool = False


@dataclass
class QueryAST:
    select: list  # (expr, alias | None)
    table: str
    where: object = None
    group_by: list = None
    having: object = None
    order_by: Optional[tuple] = None  # (target expr, descending)
    limit: Optional[int] = None

    def __post_init__(self):
        if self.group_by is None:
            self.group_by = []


def is_aggregate(expr) -> bool:
    if isinstance(expr, Agg):
        return True
    if isinstance(expr, (Arith, Cmp)):
        return is_aggregate(expr.left) or is_aggregate(expr.right)
    if isinstance(expr, Func):
        return any(is_aggregate(a) for a in expr.args)
    if isinstance(expr, Not):
        return is_aggregate(expr.child)
    if isinstance(expr, (And, Or)):
        return any(is_aggregate(i) for i in expr.items)
    if isinstance(expr, InList):
        return is_aggregate(expr.expr)
    return False


def _lit_text(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, str):
        return "'" + value.replace("'", "''") + "'"
    return repr(value) if isinstance(value, float) else str(value)


def canonical_text(expr) -> str:
    """Normalized expression text: the registry key for virtual fields."""
    if isinstance(expr, Col):
        return expr.name
    if isinstance(expr, Lit):
        return _lit_text(expr.value)
    if isinstance(expr, Func):
        return f"{expr.name.lower()}({', '.join(canonical_text(a) for a in expr.args)})"
    if isinstance(expr, Arith):
        left, right = canonical_text(expr.left), canonical_text(expr.right)
        if expr.op in "+*" and right < left:
            left, right = right, left
        return f"({left} {expr.op} {right})"
    if isinstance(expr, Cmp):
        return f"({canonical_text(expr.left)} {expr.op} {canonical_text(expr.right)})"
    if isinstance(expr, Agg):
        inner = "*" if expr.arg is None else canonical_text(expr.arg)
        if expr.distinct:
            inner = "distinct " + inner
        return f"{expr.func}({inner})"
    if isinstance(expr, InList):
        op = "not in" if expr.negated else "in"
        vals = ", ".join(sorted(_lit_text(v) for v in expr.values))
        return f"({canonical_text(expr.expr)} {op} ({vals}))"
    if isinstance(expr, Not):
        return f"(not {canonical_text(expr.child)})"
    if isinstance(expr, (And, Or)):
        op = " and " if isinstance(expr, And) else " or "
        return "(" + op.join(canonical_text(i) for i in expr.items) + ")"
    raise ParseError(f"cannot canonicalize {expr!r}")


COERCE_FAIL = object()


def coerce_literal(value, kind: Kind):
    """Fit a literal to a column kind; COERCE_FAIL marks an impossible match."""
    if value is None:
        return None
    if kind is Kind.STR:
        return value if isinstance(value, str) else COERCE_FAIL
    if kind is Kind.F64:
        return float(value) if isinstance(value, (int, float)) else COERCE_FAIL
    if kind is Kind.DATE and isinstance(value, str):
        try:
            return iso_to_days(value)
        except Exception:
            return COERCE_FAIL
    if isinstance(value, bool):
        return COERCE_FAIL
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return COERCE_FAIL


# ------------------------------------------------------------------- lexer

@dataclass
class _Token:
    kind: str  # kw ident str num op eof
    text: str
    value: object
    pos: int


_OPS = ("<=", ">=", "!=", "<>", "=", "<", ">", "(", ")", ",", "*", "+", "-", "/")


def _lex(sql: str) -> list[_Token]:
    out = []
    i, n = 0, len(sql)
    while i < n:
        c = sql[i]
        if c.isspace():
            i += 1
            continue
        if c in "'\"":
            quote = c
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise ParseError("unterminated string literal", i)
                if sql[j] == quote:
                    if j + 1 < n and sql[j + 1] == quote:
                        buf.append(quote)
                        j += 2
                        continue
                    break
                buf.append(sql[j])
                j += 1
            out.append(_Token("str", sql[i : j + 1], "".join(buf), i))
            i = j + 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and sql[i + 1].isdigit()):
            j = i
            seen_dot = seen_exp = False
            while j < n and (
                sql[j].isdigit()
                or (sql[j] == "." and not seen_dot and not seen_exp)
                or (sql[j] in "eE" and not seen_exp and j > i)
                or (sql[j] in "+-" and j > i and sql[j - 1] in "eE")
            ):
                seen_dot |= sql[j] == "."
                seen_exp |= sql[j] in "eE"
                j += 1
            text = sql[i:j]
            value = float(text) if (seen_dot or seen_exp) else int(text)
            out.append(_Token("num", text, value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            text = sql[i:j]
            low = text.lower()
            out.append(_Token("kw" if low in _KEYWORDS else "ident", text, low, i))
            i = j
            continue
        for op in _OPS:
            if sql.startswith(op, i):
                out.append(_Token("op", op, "!=" if op == "<>" else op, i))
                i += len(op)
                break
        else:
            raise ParseError(f"unexpected character {c!r}", i)
    out.append(_Token("eof", "", None, n))
    return out


# ------------------------------------------------------------------ parser

class _Parser:
    def __init__(self, sql: str):
        self.sql = sql
        self.tokens = _lex(sql)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg: str):
        raise ParseError(msg, self.peek().pos)

    def expect_kw(self, word: str) -> _Token:
        tok = self.peek()
        if tok.kind == "kw" and tok.value == word:
            return self.next()
        self.error(f"expected {word.upper()}")

    def accept_kw(self, word: str) -> bool:
        tok = self.peek()
        if tok.kind == "kw" and tok.value == word:
            self.next()
            return True
        return False

    def accept_op(self, *ops) -> Optional[str]:
        tok = self.peek()
        if tok.kind == "op" and tok.value in ops:
            self.next()
            return tok.value
        return None

    def expect_op(self, op: str):
        if not self.accept_op(op):
            self.error(f"expected {op!r}")

    def parse_query(self) -> QueryAST:
        self.expect_kw("select")
        select = [self.select_item()]
        while self.accept_op(","):
            select.append(self.select_item())
        self.expect_kw("from")
        tok = self.peek()
        if tok.kind != "ident":
            self.error("expected table name")
        table = self.next().text
        where = group_by = having = order_by = None
        limit = None
        if self.accept_kw("where"):
            where = self.expr()
        if self.accept_kw("group"):
            self.expect_kw("by")
            group_by = [self.expr()]
            while self.accept_op(","):
                group_by.append(self.expr())
        if self.accept_kw("having"):
            having = self.expr()
        if self.accept_kw("order"):
            self.expect_kw("by")
            target = self.expr()
            desc = False
            if self.accept_kw("desc"):
                desc = True
            else:
                self.accept_kw("asc")
            order_by = (target, desc)
        if self.accept_kw("limit"):
            tok = self.peek()
            if tok.kind != "num" or not isinstance(tok.value, int) or tok.value < 0:
                self.error("LIMIT expects a non-negative integer")
            limit = self.next().value
        if self.peek().kind != "eof":
            self.error(f"unexpected input after query: {self.peek().text!r}")
        return QueryAST(select, table, where, group_by or [], having, order_by, limit)

    def select_item(self):
        expr = self.expr()
        alias = None
        if self.accept_kw("as"):
            tok = self.peek()
            if tok.kind not in ("ident", "kw"):
                self.error("expected alias after AS")
            alias = self.next().text
        return (expr, alias)

    # precedence: OR < AND < NOT < comparison/IN < additive < multiplicative
    def expr(self):
        return self.or_expr()

    def or_expr(self):
        items = [self.and_expr()]
        while self.accept_kw("or"):
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else Or(tuple(items))

    def and_expr(self):
        items = [self.not_expr()]
        while self.accept_kw("and"):
            items.append(self.not_expr())
        return items[0] if len(items) == 1 else And(tuple(items))

    def not_expr(self):
        if self.accept_kw("not"):
            return Not(self.not_expr())
        return self.predicate()

    def predicate(self):
        left = self.additive()
        op = self.accept_op("=", "!=", "<=", ">=", "<", ">")
        if op:
            return Cmp(op, left, self.additive())
        negated = False
        if self.peek().kind == "kw" and self.peek().value == "not":
            nxt = self.tokens[self.i + 1]
            if nxt.kind == "kw" and nxt.value == "in":
                self.next()
                negated = True
        if self.accept_kw("in"):
            self.expect_op("(")
            values = [self.literal_value()]
            while self.accept_op(","):
                values.append(self.literal_value())
            self.expect_op(")")
            return InList(left, tuple(values), negated)
        if negated:
            self.error("expected IN after NOT")
        return left

    def literal_value(self):
        tok = self.peek()
        if tok.kind == "str":
            return self.next().value
        if tok.kind == "num":
            return self.next().value
        if tok.kind == "kw" and tok.value == "null":
            self.next()
            return None
        if tok.kind == "op" and tok.value == "-":
            self.next()
            num = self.peek()
            if num.kind != "num":
                self.error("expected number after '-'")
            return -self.next().value
        self.error("expected literal value")

    def additive(self):
        left = self.multiplicative()
        while True:
            op = self.accept_op("+", "-")
            if not op:
                return left
            left = Arith(op, left, self.multiplicative())

    def multiplicative(self):
        left = self.unary()
        while True:
            op = self.accept_op("*", "/")
            if not op:
                return left
            left = Arith(op, left, self.unary())

    def unary(self):
        if self.accept_op("-"):
            inner = self.unary()
            if isinstance(inner, Lit) and isinstance(inner.value, (int, float)):
                return Lit(-inner.value)
            return Arith("-", Lit(0), inner)
        return self.primary()

    def primary(self):
        tok = self.peek()
        if tok.kind == "str" or tok.kind == "num":
            return Lit(self.next().value)
        if tok.kind == "kw" and tok.value == "null":
            self.next()
            return Lit(None)
        if tok.kind == "op" and tok.value == "(":
            self.next()
            inner = self.expr()
            self.expect_op(")")
            return inner
        if tok.kind == "ident":
            name = self.next()
            if self.accept_op("("):
                return self.call(name)
            return Col(name.text)
        self.error(f"unexpected token {tok.text!r}")

    def call(self, name_tok: _Token):
        fname = name_tok.text.lower()
        if fname in AGGREGATE_FUNCS:
            if fname == "count" and self.accept_op("*"):
                self.expect_op(")")
                return Agg("count", None)
            distinct = self.accept_kw("distinct")
            arg = self.expr()
            self.expect_op(")")
            if distinct and fname != "count":
                raise ParseError("DISTINCT is only supported inside COUNT", name_tok.pos)
            if fname != "count" and arg is None:
                self.error(f"{fname.upper()} needs an argument")
            return Agg(fname, arg, distinct)
        if fname in SCALAR_FUNCS:
            args = []
            if not self.accept_op(")"):
                args.append(self.expr())
                while self.accept_op(","):
                    args.append(self.expr())
                self.expect_op(")")
            return Func(fname, tuple(args))
        raise ParseError(f"unknown function {name_tok.text!r}", name_tok.pos)


def _resolve_alias(expr, aliases: dict):
    if isinstance(expr, Col) and expr.name in aliases:
        return aliases[expr.name]
    return expr


def parse(sql: str) -> QueryAST:
    """Parse and validate one query."""
    ast = _Parser(sql).parse_query()

    aliases = {alias: expr for expr, alias in ast.select if alias}
    ast.group_by = [_resolve_alias(e, aliases) for e in ast.group_by]
    if ast.order_by:
        ast.order_by = (_resolve_alias(ast.order_by[0], aliases), ast.order_by[1])

    if ast.where is not None and is_aggregate(ast.where):
        raise ParseError("aggregates are not allowed in WHERE")
    for g in ast.group_by:
        if is_aggregate(g):
            raise ParseError("aggregates are not allowed in GROUP BY")

    group_keys = {canonical_text(g) for g in ast.group_by}
    for expr, alias in ast.select:
        if is_aggregate(expr):
            if not isinstance(expr, Agg):
                raise ParseError("aggregates may not be nested in expressions")
            continue
        if canonical_text(expr) not in group_keys:
            raise ParseError(
                f"non-aggregate select expression {canonical_text(expr)!r} "
                "must appear in GROUP BY"
            )
    if ast.having is not None and ast.group_by == [] and not all(
        is_aggregate(e) for e, _ in ast.select
    ):
        raise ParseError("HAVING requires aggregation")
    return ast


def result_column_name(expr, alias) -> str:
    return alias if alias else canonical_text(expr)
