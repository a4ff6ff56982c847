"""Column value domain: typed values with a single total order.

A column holds exactly one kind of value plus NULL. At runtime values are
plain Python objects (``None``, ``str``, ``int``, ``float``); the kind lives
in the schema. DATE values are days since 1970-01-01 (UTC), TIMESTAMP values
are seconds since the epoch (UTC) — both carried as ints.

NULL sorts before every non-null value; strings compare byte-wise
(``str`` comparison on Python strings matches byte order for the UTF-8
encodings we store, and dictionaries store the decoded strings anyway, so
we order by the encoded bytes explicitly to keep the contract exact).
"""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from enum import Enum

from .errors import DataError, SchemaError


class Kind(str, Enum):
    STR = "str"
    I64 = "i64"
    F64 = "f64"
    DATE = "date"
    TIMESTAMP = "timestamp"


NUMERIC_KINDS = (Kind.I64, Kind.F64, Kind.DATE, Kind.TIMESTAMP)

_EPOCH_ORDINAL = _dt.date(1970, 1, 1).toordinal()


def sort_key(value):
    """Total-order key: NULL first, strings byte-wise, numerics numeric."""
    if value is None:
        return (0, b"")
    if isinstance(value, str):
        return (1, value.encode("utf-8"))
    return (1, value)


def compare_lt(a, b) -> bool:
    return sort_key(a) < sort_key(b)


def value_matches_kind(value, kind: Kind) -> bool:
    if value is None:
        return True
    if kind is Kind.STR:
        return isinstance(value, str)
    if kind is Kind.F64:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    # I64 / DATE / TIMESTAMP are integer-carried
    return isinstance(value, int) and not isinstance(value, bool)


def days_to_iso(days: int) -> str:
    return _dt.date.fromordinal(_EPOCH_ORDINAL + days).isoformat()


def iso_to_days(text: str) -> int:
    try:
        d = _dt.date.fromisoformat(text)
    except ValueError as exc:
        raise DataError(f"not a calendar date: {text!r}") from exc
    return d.toordinal() - _EPOCH_ORDINAL


def timestamp_to_days(seconds: int) -> int:
    # floor division keeps pre-1970 timestamps on the correct day
    return seconds // 86400


def format_value(value, kind: Kind):
    """Human/CSV representation of a value."""
    if value is None:
        return ""
    if kind is Kind.DATE:
        return days_to_iso(value)
    return str(value)


def json_value(value, kind: Kind):
    """JSON-safe representation: big ints become decimal strings."""
    if value is None:
        return None
    if kind is Kind.DATE:
        return days_to_iso(value)
    if isinstance(value, int) and abs(value) > 2**53:
        return str(value)
    return value


@dataclass(frozen=True)
class Field:
    name: str
    kind: Kind
    nullable: bool = True


@dataclass
class Schema:
    table: str
    fields: list[Field] = field(default_factory=list)

    def __post_init__(self):
        if not self.fields:
            raise SchemaError("schema must declare at least one field")
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate field names in schema for {self.table!r}")
        self._by_name = {f.name: f for f in self.fields}

    def names(self) -> list[str]:
        return [f.name for f in self.fields]

    def field(self, name: str) -> Field:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown field {name!r} in table {self.table!r}") from None

    def has_field(self, name: str) -> bool:
        return name in self._by_name

    def kind_of(self, name: str) -> Kind:
        return self.field(name).kind
