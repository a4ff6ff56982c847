"""SQL subset parser: the canonical query shapes, errors, normalization."""

import pytest

from skipstore.errors import ParseError
from skipstore.parser import (
    Agg,
    And,
    Cmp,
    Col,
    Func,
    InList,
    Lit,
    Not,
    Or,
    canonical_text,
    parse,
)

DRILLDOWN = """SELECT search_string, COUNT(*) as c FROM data
WHERE search_string IN
      ("la redoute", "voyages snfc")
GROUP BY search_string ORDER BY c DESC LIMIT 10"""

TOP_COUNTRIES = (
    "SELECT country, COUNT(*) as c FROM data "
    "GROUP BY country ORDER BY c DESC LIMIT 10"
)

PER_DAY = (
    "SELECT date(timestamp) as date, COUNT(*), SUM(latency) FROM data "
    "GROUP BY date ORDER BY date ASC LIMIT 10"
)

TOP_TABLES = (
    "SELECT table_name, COUNT(*) as c FROM data "
    "GROUP BY table_name ORDER BY c DESC LIMIT 10"
)


def test_drilldown_query_shape():
    ast = parse(DRILLDOWN)
    assert ast.table == "data"
    assert isinstance(ast.where, InList)
    assert ast.where.values == ("la redoute", "voyages snfc")
    assert not ast.where.negated
    assert ast.group_by == [Col("search_string")]
    assert ast.order_by == (Agg("count", None), True)
    assert ast.limit == 10


def test_top_countries_query():
    ast = parse(TOP_COUNTRIES)
    assert ast.select[0] == (Col("country"), None)
    assert ast.select[1] == (Agg("count", None), "c")


def test_per_day_query_resolves_group_alias():
    ast = parse(PER_DAY)
    assert ast.group_by == [Func("date", (Col("timestamp"),))]
    assert ast.order_by[0] == Func("date", (Col("timestamp"),))
    assert ast.order_by[1] is False


def test_top_tables_query():
    ast = parse(TOP_TABLES)
    assert ast.group_by == [Col("table_name")]


def test_keywords_are_case_insensitive():
    ast = parse("select a, count(*) from t group by a limit 3")
    assert ast.limit == 3


def test_quote_styles_and_escapes():
    ast = parse("SELECT a, COUNT(*) FROM t WHERE a IN ('it''s', \"x\") GROUP BY a")
    assert ast.where.values == ("it's", "x")


def test_numbers_and_negative_literals():
    ast = parse("SELECT a, COUNT(*) FROM t WHERE a IN (-5, 2.5, 1e3) GROUP BY a")
    assert ast.where.values == (-5, 2.5, 1000.0)


@pytest.mark.parametrize("bad", [
    "SELECT COUNT(*) FROM data GROUP BY",
    "SELECT FROM data",
    "SELECT a FROM",
    "SELECT a, COUNT(*) FROM t GROUP BY a LIMIT -1",
    "SELECT a COUNT(*) FROM t GROUP BY a",
    "SELECT a, COUNT(*) FROM t WHERE a IN () GROUP BY a",
    "SELECT a, COUNT(*) FROM t GROUP BY a ORDER",
])
def test_syntax_errors_carry_position(bad):
    with pytest.raises(ParseError) as err:
        parse(bad)
    assert err.value.position is not None


def test_aggregate_in_where_is_rejected():
    with pytest.raises(ParseError, match="WHERE"):
        parse("SELECT a, COUNT(*) FROM t WHERE SUM(x) > 3 GROUP BY a")


def test_unknown_function_is_rejected():
    with pytest.raises(ParseError, match="unknown function"):
        parse("SELECT frob(a), COUNT(*) FROM t GROUP BY frob(a)")


def test_ungrouped_select_column_is_rejected():
    with pytest.raises(ParseError, match="GROUP BY"):
        parse("SELECT a, b, COUNT(*) FROM t GROUP BY a")


def test_count_distinct():
    ast = parse("SELECT a, COUNT(DISTINCT b) AS d FROM t GROUP BY a")
    assert ast.select[1][0] == Agg("count", Col("b"), True)


def test_distinct_outside_count_is_rejected():
    with pytest.raises(ParseError):
        parse("SELECT a, SUM(DISTINCT b) FROM t GROUP BY a")


def test_boolean_precedence():
    ast = parse(
        "SELECT a, COUNT(*) FROM t "
        "WHERE NOT a = 1 AND b = 2 OR c IN (3) GROUP BY a"
    )
    assert isinstance(ast.where, Or)
    left = ast.where.items[0]
    assert isinstance(left, And)
    assert isinstance(left.items[0], Not)


def test_arithmetic_precedence():
    ast = parse("SELECT a, SUM(b + c * 2) FROM t GROUP BY a")
    agg = ast.select[1][0]
    assert canonical_text(agg) == "sum(((2 * c) + b))"


def test_canonical_text_sorts_commutative_operands():
    a = parse("SELECT x + y AS k, COUNT(*) FROM t GROUP BY k").group_by[0]
    b = parse("SELECT y + x AS k, COUNT(*) FROM t GROUP BY k").group_by[0]
    assert canonical_text(a) == canonical_text(b)


def test_not_in_parses_to_negated_inlist():
    ast = parse("SELECT a, COUNT(*) FROM t WHERE a NOT IN (1, 2) GROUP BY a")
    assert ast.where == InList(Col("a"), (1, 2), True)


def test_having_clause():
    ast = parse("SELECT a, COUNT(*) AS c FROM t GROUP BY a HAVING c > 5")
    assert isinstance(ast.having, Cmp)


def test_null_literal():
    ast = parse("SELECT a, COUNT(*) FROM t WHERE a != NULL GROUP BY a")
    assert ast.where == Cmp("!=", Col("a"), Lit(None))


def test_global_aggregate_without_group_by():
    ast = parse("SELECT COUNT(*), AVG(x) FROM t")
    assert ast.group_by == []
