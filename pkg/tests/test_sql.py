from __future__ import annotations

import pytest

from conndiff import sql


@pytest.mark.parametrize(
    "text, expected",
    [
        ("CREATE TABLE t0(c0 INT PRIMARY KEY, c1 INT)", sql.CreateTable("t0", ("c0", "c1"))),
        ("create table t1 (k int primary key)", sql.CreateTable("t1", ("k",))),
        ("DROP TABLE t0", sql.DropTable("t0")),
        ("INSERT INTO t0 VALUES (1, -2)", sql.Insert("t0", (1, -2))),
        ("SELECT c0 FROM t0 WHERE c0 = 3", sql.Select("t0", ("c0",), ("c0", 3))),
        ("SELECT * FROM t0", sql.Select("t0", None, None)),
        ("SELECT 1", sql.SelectConst(1)),
    ],
)
def test_parses_subset(text, expected):
    assert sql.parse_sql(text) == expected


@pytest.mark.parametrize(
    "text",
    ["", "UPDATE t0 SET c0 = 1", "SELECT c0 FROM t0 WHERE c0 > 1", "INSERT INTO t0 VALUES ('a')", "SELECT 1; SELECT 2"],
)
def test_rejects_outside_subset(text):
    with pytest.raises(sql.SqlError):
        sql.parse_sql(text)


def test_query_and_ddl_predicates():
    assert sql.is_query(sql.parse_sql("SELECT 1"))
    assert not sql.is_query(sql.parse_sql("DROP TABLE t0"))
    assert sql.is_ddl(sql.parse_sql("DROP TABLE t0"))
    assert not sql.is_ddl(sql.parse_sql("INSERT INTO t0 VALUES (1)"))
