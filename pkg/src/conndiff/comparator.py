"""Report comparison, discrepancy classification and round reward."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from conndiff import trace as tr
from conndiff.backends import (
    FINAL,
    THREW,
    ExecutionReport,
    FinalState,
    Outcome,
)

CROSS_CONNECTOR = "cross-connector"
CROSS_PROPERTY = "cross-property"
MODES = (CROSS_CONNECTOR, CROSS_PROPERTY)

VALUE_MISMATCH = "ValueMismatch"
EXCEPTION_MISMATCH = "ExceptionMismatch"
UPDATE_COUNT_MISMATCH = "UpdateCountMismatch"
STATE_MISMATCH = "StateMismatch"
RESOURCE_MISMATCH = "ResourceLifecycleMismatch"
MESSAGE_MISMATCH = "MessageMismatch"

BUG = "Bug"
UNSAFE = "UnsafeImplementation"

# ops whose exception text is itself part of the contract
MESSAGE_OPS = frozenset({"SetMaxRows"})


class CompareError(ValueError):
    pass


@dataclass(frozen=True)
class Discrepancy:
    trace_id: str
    op_index: int | str  # int, or FINAL for snapshot differences
    kind: str
    mode: str
    left: Any
    right: Any
    op_name: str | None = None
    table: str | None = None
    rules: tuple[str, ...] = ()

    @property
    def key(self) -> tuple:
        return (self.kind, self.op_index, self.mode)

    def swapped(self) -> "Discrepancy":
        return Discrepancy(
            self.trace_id, self.op_index, self.kind, self.mode, self.right, self.left,
            self.op_name, self.table, self.rules,
        )

    def to_dict(self) -> dict:
        out = {
            "trace_id": self.trace_id,
            "op_index": self.op_index,
            "op": self.op_name,
            "kind": self.kind,
            "mode": self.mode,
            "left": self.left,
            "right": self.right,
            "rules": list(self.rules),
        }
        if self.table is not None:
            out["table"] = self.table
        return out


@dataclass(frozen=True)
class Classification:
    verdict: str
    rationale: str


def _side(outcome: Outcome | None) -> Any:
    return None if outcome is None else outcome.to_dict()


def _op_names(a: ExecutionReport, b: ExecutionReport) -> tuple[str, ...]:
    return a.op_names if len(a.op_names) >= len(b.op_names) else b.op_names


def _outcome_kind(op_name: str | None, x: Outcome | None, y: Outcome | None, message_ops) -> str | None:
    """Return the discrepancy kind for a pair of outcomes, or None when equal."""
    if x is None or y is None:
        return VALUE_MISMATCH if x is not y else None
    if op_name == "ExecuteBatch":
        # exceptions from executeBatch carry counts; any difference is a count difference
        same = (x.kind, x.value, x.exc_class) == (y.kind, y.value, y.exc_class)
        return None if same else UPDATE_COUNT_MISMATCH
    if (x.kind == THREW) != (y.kind == THREW):
        return EXCEPTION_MISMATCH
    if x.kind == THREW:
        if x.exc_class != y.exc_class:
            return EXCEPTION_MISMATCH
        if x.value != y.value:
            return UPDATE_COUNT_MISMATCH
        if op_name in message_ops and x.message != y.message:
            return MESSAGE_MISMATCH
        return None
    if (x.kind, x.value) == (y.kind, y.value):
        return None
    if op_name == "CheckResultSetClosed":
        return RESOURCE_MISMATCH
    if x.kind == y.kind == "UpdateCounts":
        return UPDATE_COUNT_MISMATCH
    return VALUE_MISMATCH


def _state_diffs(a: FinalState, b: FinalState) -> list[tuple[str, Any, Any, str | None]]:
    out = []
    ta = {name: (cols, rows) for name, cols, rows in a.tables}
    tb = {name: (cols, rows) for name, cols, rows in b.tables}
    for name in sorted(set(ta) | set(tb)):
        if ta.get(name) != tb.get(name):
            left = None if name not in ta else {"columns": list(ta[name][0]), "rows": [list(r) for r in ta[name][1]]}
            right = None if name not in tb else {"columns": list(tb[name][0]), "rows": [list(r) for r in tb[name][1]]}
            out.append((STATE_MISMATCH, left, right, name))
    la = {"result_set_open": a.result_set_open, "statement_open": a.statement_open}
    lb = {"result_set_open": b.result_set_open, "statement_open": b.statement_open}
    if la != lb:
        out.append((RESOURCE_MISMATCH, la, lb, None))
    return out


def compare(
    a: ExecutionReport,
    b: ExecutionReport,
    mode: str = CROSS_CONNECTOR,
    message_ops: frozenset[str] = MESSAGE_OPS,
) -> list[Discrepancy]:
    """Compare two reports of the same trace, op by op and then final state.

    Exceptions are equal when their class tags match; messages only count for
    ops listed in ``message_ops``.
    """
    if a.trace_id != b.trace_id:
        raise CompareError(f"reports are for different traces: {a.trace_id!r} vs {b.trace_id!r}")
    if mode not in MODES:
        raise CompareError(f"unknown comparison mode {mode!r}")
    if mode == CROSS_CONNECTOR and a.property_assignment != b.property_assignment:
        raise CompareError("cross-connector comparison needs equal property assignments")

    names = _op_names(a, b)
    out: list[Discrepancy] = []
    n = max(len(a.outcomes), len(b.outcomes))
    for i in range(n):
        x = a.outcomes[i] if i < len(a.outcomes) else None
        y = b.outcomes[i] if i < len(b.outcomes) else None
        name = names[i] if i < len(names) else None
        kind = _outcome_kind(name, x, y, message_ops)
        if kind is not None:
            rules = tuple(sorted(a.rules_at(i) | b.rules_at(i)))
            out.append(Discrepancy(a.trace_id, i, kind, mode, _side(x), _side(y), name, None, rules))
    for kind, left, right, table in _state_diffs(a.final_state, b.final_state):
        rules = tuple(sorted(a.rules_at(FINAL) | b.rules_at(FINAL)))
        out.append(Discrepancy(a.trace_id, FINAL, kind, mode, left, right, None, table, rules))
    return out


def is_unequal(d: Discrepancy) -> bool:
    """Re-check from the recorded sides that a discrepancy is real."""
    if d.kind == MESSAGE_MISMATCH:
        return d.left.get("message") != d.right.get("message")
    if d.kind == EXCEPTION_MISMATCH:
        return (d.left or {}).get("class") != (d.right or {}).get("class") or (
            (d.left or {}).get("kind") != (d.right or {}).get("kind")
        )
    return d.left != d.right


def _governing_statement(trace: tr.Trace, op_index: int) -> tr.CreateStatement | None:
    query_at = None
    for j in range(op_index - 1, -1, -1):
        if isinstance(trace.ops[j], tr.ExecuteQuery):
            query_at = j
            break
    if query_at is None:
        return None
    for j in range(query_at - 1, -1, -1):
        if isinstance(trace.ops[j], tr.CreateStatement):
            return trace.ops[j]
    return None


def classify(d: Discrepancy, trace: tr.Trace) -> Classification:
    """Label a discrepancy as a bug or a (legacy-compatible) unsafe implementation.

    Only the forward-only navigation family counts as unsafe: a backward or
    absolute cursor move on a forward-only result set where one side raised the
    mandated exception and the other did not.
    """
    if isinstance(d.op_index, int) and d.kind == EXCEPTION_MISMATCH and d.op_index < len(trace.ops):
        op = trace.ops[d.op_index]
        if isinstance(op, tr.CursorMove) and op.kind in tr.BACKWARD_KINDS:
            stmt = _governing_statement(trace, d.op_index)
            classes = {(d.left or {}).get("class"), (d.right or {}).get("class")}
            if stmt is not None and stmt.result_set_type == "ForwardOnly" and "forward-only-violation" in classes:
                return Classification(
                    UNSAFE,
                    f"{op.kind} on a TYPE_FORWARD_ONLY result set did not raise the required exception",
                )
    where = d.op_name or d.op_index
    return Classification(BUG, f"{d.kind} at {where} ({d.mode})")


def reward_of(discrepancies: list[Discrepancy]) -> int:
    return len({d.key for d in discrepancies})


def nav_kind(d: Discrepancy, trace: tr.Trace) -> str | None:
    """The cursor-move kind a discrepancy sits on, if any."""
    if isinstance(d.op_index, int) and d.op_index < len(trace.ops):
        op = trace.ops[d.op_index]
        if isinstance(op, tr.CursorMove):
            return op.kind
    return None
