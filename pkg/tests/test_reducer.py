from __future__ import annotations

import itertools

import pytest
from conftest import SHIPPED_CATALOG, forward_only_trace, random_traces, witness
from hypothesis import HealthCheck, assume, given, settings

from conndiff import reducer as rd
from conndiff import trace as tr
from conndiff.backends import RULES, DivergenceCatalog

ALL_MEMBERS = SHIPPED_CATALOG.flatten()
ORACLE = rd.discrepancy_oracle(DivergenceCatalog.all(), partner=lambda _a: ALL_MEMBERS)

KERNEL = forward_only_trace().ops


def padded_forward_only() -> tr.Trace:
    c, s, q, move = KERNEL
    pad = [
        tr.ExecuteUpdate("CREATE TABLE t1(c0 INT PRIMARY KEY)"),
        tr.ExecuteUpdate("INSERT INTO t1 VALUES (1)"),
        tr.ExecuteQuery("SELECT c0 FROM t1"),
        tr.ExecuteUpdate("INSERT INTO t1 VALUES (2)"),
        tr.ExecuteUpdate("INSERT INTO t1 VALUES (3)"),
        tr.ExecuteQuery("SELECT c0 FROM t1"),
    ]
    ops = (c, s, pad[0], pad[1], pad[2], pad[3], q, move, pad[4], pad[5])
    return tr.Trace("padded-forward-only", ops)


def is_subsequence(short, long) -> bool:
    it = iter(long)
    return all(any(x is y or x == y for y in it) for x in short)


def brute_force_minimal(trace: tr.Trace, oracle) -> list[tuple]:
    """Every smallest valid subsequence (Connect kept) on which the oracle holds."""
    rest = trace.ops[1:]
    for size in range(0, len(rest) + 1):
        found = []
        for idx in itertools.combinations(range(len(rest)), size):
            cand = trace.with_ops((trace.ops[0], *(rest[i] for i in idx)))
            if tr.is_valid(cand) and oracle(cand):
                found.append(cand.ops)
        if found:
            return found
    return []


def test_padded_forward_only_unique_minimal_witness():
    t = padded_forward_only()
    assert len(t.ops) == 10
    assert ORACLE(t)
    minimal = brute_force_minimal(t, ORACLE)
    assert minimal == [KERNEL]
    reduced = rd.reduce(t, ORACLE)
    assert reduced.ops == KERNEL
    assert rd.is_one_minimal(reduced, ORACLE)


def test_already_minimal_is_fixpoint():
    assert rd.reduce(forward_only_trace(), ORACLE) == forward_only_trace()


def test_nothing_to_reduce():
    quiet = forward_only_trace().with_ops(KERNEL[:3])
    with pytest.raises(rd.ReductionError, match="nothing to reduce"):
        rd.reduce(quiet, ORACLE)


def test_oracle_needing_every_op():
    t = padded_forward_only()
    full = len(t.ops)
    out = rd.reduce(t, lambda x: len(x.ops) == full)
    assert out == t
    assert rd.is_one_minimal(out, lambda x: len(x.ops) == full)


def test_budget_enforced():
    with pytest.raises(rd.BudgetExceeded):
        rd.reduce(padded_forward_only(), ORACLE, budget=3)


def test_repair_drops_dangling_dependents():
    c, s, q, move = KERNEL
    ops = [c, s, move, tr.ReadRow(), tr.ExecuteBatch(), q, move]
    assert rd.repair(ops) == [c, s, q, move]


@pytest.mark.parametrize("tag", sorted(RULES))
def test_witnesses_reduce_and_stay_one_minimal(tag):
    oracle = rd.discrepancy_oracle(DivergenceCatalog.of([tag]), partner=lambda _a: ALL_MEMBERS)
    t = witness(tag)
    out = rd.reduce(t, oracle)
    assert oracle(out)
    assert is_subsequence(out.ops, t.ops)
    assert rd.is_one_minimal(out, oracle)


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.filter_too_much, HealthCheck.too_slow])
@given(random_traces(max_ops=16))
def test_reduction_properties(trace):
    assume(ORACLE(trace))
    calls = []

    def counting(t):
        calls.append(1)
        return ORACLE(t)

    out = rd.reduce(trace, counting)
    n = len(trace.ops)
    assert len(calls) <= n * n + 4 * n + 8
    assert ORACLE(out)
    assert tr.is_valid(out)
    assert out.ops[0] == tr.Connect()
    assert is_subsequence(out.ops, trace.ops)
    assert rd.is_one_minimal(out, ORACLE)
