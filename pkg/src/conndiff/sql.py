"""Parser for the integer-only SQL subset accepted inside traces.

Supported statements::

    CREATE TABLE t (c0 INT PRIMARY KEY [, c1 INT ...])
    DROP TABLE t
    INSERT INTO t VALUES (1 [, 2 ...])
    SELECT c0 [, c1 ...] FROM t [WHERE c0 = 3]
    SELECT * FROM t [WHERE c0 = 3]
    SELECT 1
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_INT = r"-?\d+"

_CREATE_RE = re.compile(
    rf"^CREATE\s+TABLE\s+({_IDENT})\s*\(\s*({_IDENT})\s+INT\s+PRIMARY\s+KEY\s*((?:,\s*{_IDENT}\s+INT\s*)*)\)$",
    re.IGNORECASE,
)
_EXTRA_COL_RE = re.compile(rf",\s*({_IDENT})\s+INT", re.IGNORECASE)
_DROP_RE = re.compile(rf"^DROP\s+TABLE\s+({_IDENT})$", re.IGNORECASE)
_INSERT_RE = re.compile(
    rf"^INSERT\s+INTO\s+({_IDENT})\s+VALUES\s*\(\s*({_INT}(?:\s*,\s*{_INT})*)\s*\)$",
    re.IGNORECASE,
)
_SELECT_RE = re.compile(
    rf"^SELECT\s+(\*|{_IDENT}(?:\s*,\s*{_IDENT})*)\s+FROM\s+({_IDENT})"
    rf"(?:\s+WHERE\s+({_IDENT})\s*=\s*({_INT}))?$",
    re.IGNORECASE,
)
_SELECT_CONST_RE = re.compile(rf"^SELECT\s+({_INT})$", re.IGNORECASE)


class SqlError(ValueError):
    """Raised when text falls outside the supported SQL subset."""


@dataclass(frozen=True)
class CreateTable:
    table: str
    columns: tuple[str, ...]  # first column is the primary key


@dataclass(frozen=True)
class DropTable:
    table: str


@dataclass(frozen=True)
class Insert:
    table: str
    values: tuple[int, ...]


@dataclass(frozen=True)
class Select:
    table: str
    columns: tuple[str, ...] | None  # None means *
    where: tuple[str, int] | None = None


@dataclass(frozen=True)
class SelectConst:
    value: int


Statement = CreateTable | DropTable | Insert | Select | SelectConst


def is_query(stmt: Statement) -> bool:
    return isinstance(stmt, (Select, SelectConst))


def is_ddl(stmt: Statement) -> bool:
    return isinstance(stmt, (CreateTable, DropTable))


@lru_cache(maxsize=4096)
def parse_sql(text: str) -> Statement:
    sql = " ".join(text.strip().rstrip(";").split())
    if m := _CREATE_RE.match(sql):
        extra = tuple(c.lower() for c in _EXTRA_COL_RE.findall(m.group(3)))
        cols = (m.group(2).lower(),) + extra
        if len(set(cols)) != len(cols):
            raise SqlError(f"duplicate column in {text!r}")
        return CreateTable(m.group(1).lower(), cols)
    if m := _DROP_RE.match(sql):
        return DropTable(m.group(1).lower())
    if m := _INSERT_RE.match(sql):
        values = tuple(int(v) for v in m.group(2).split(","))
        return Insert(m.group(1).lower(), values)
    if m := _SELECT_CONST_RE.match(sql):
        return SelectConst(int(m.group(1)))
    if m := _SELECT_RE.match(sql):
        cols = None if m.group(1) == "*" else tuple(c.strip().lower() for c in m.group(1).split(","))
        where = (m.group(3).lower(), int(m.group(4))) if m.group(3) else None
        return Select(m.group(2).lower(), cols, where)
    raise SqlError(f"unsupported SQL: {text!r}")
