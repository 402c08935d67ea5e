"""Simulated connector backends.

:class:`ReferenceBackend` follows the JDBC specification over an in-memory,
integer-only relational store. :class:`DivergentBackend` runs the same
semantics but layers a catalog of known deviations on top, each one modelled on
a connector issue observed in practice:

==== ========================================= =====================================
Tag  Name                                      Effect
==== ========================================= =====================================
R1   forward-only-navigation-no-throw          backward/absolute moves on a
                                               forward-only result set succeed
R2   batch-non-dml-illegal-return              SELECT inside a batch yields count -1
R3   holdability-throws                        GetHoldability throws
R4   holdability-misreport                     CloseAtCommit reported as HoldOverCommit
R5   multiquery-breaks-batch-atomicity         with allowMultiQueries=false a failing
                                               batch keeps going past the failure
R6   rewrite-batch-alters-results              with rewriteBatchedStatements=true the
                                               first query after a rewritten insert
                                               batch sees the pre-batch table
R7   resultset-not-closed                      closing a statement leaves its result
                                               set open
R8   maxrows-wrong-message                     out-of-range SetMaxRows reports the
                                               wrong message
==== ========================================= =====================================

Every op yields exactly one :class:`Outcome`. A divergent backend also records
which rules changed the outcome of which op (``ExecutionReport.fired``), so
discrepancies can be attributed to rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from conndiff import sql as sqlmod
from conndiff import trace as tr
from conndiff.props import PropertyAssignment

EXECUTE_FAILED = -3
SUCCESS_NO_INFO = -2
ILLEGAL_COUNT = -1
MAX_ROWS_LIMIT = 50_000_000

FINAL = "final-state"

VALUE = "Value"
ROWS = "Rows"
UPDATE_COUNTS = "UpdateCounts"
THREW = "ThrewException"
UNIT = "Unit"
STRUCTURAL = "StructuralError"

RULES: dict[str, str] = {
    "R1": "forward-only-navigation-no-throw",
    "R2": "batch-non-dml-illegal-return",
    "R3": "holdability-throws",
    "R4": "holdability-misreport",
    "R5": "multiquery-breaks-batch-atomicity",
    "R6": "rewrite-batch-alters-results",
    "R7": "resultset-not-closed",
    "R8": "maxrows-wrong-message",
}
# rules whose effect can persist into the final snapshot
_LASTING_RULES = ("R2", "R5")

# connector defaults for properties the trace leaves unbound
PROPERTY_DEFAULTS = {
    "allowMultiQueries": False,
    "rewriteBatchedStatements": False,
    "resultSetHoldability": 1,
    "cachePrepStmts": False,
}


class BackendError(ValueError):
    pass


@dataclass(frozen=True)
class Outcome:
    op_index: int
    kind: str
    value: Any = None
    exc_class: str | None = None
    message: str | None = None

    @classmethod
    def unit(cls, i: int) -> "Outcome":
        return cls(i, UNIT)

    @classmethod
    def of_value(cls, i: int, value: Any) -> "Outcome":
        return cls(i, VALUE, value)

    @classmethod
    def threw(cls, i: int, exc_class: str, message: str, counts: tuple[int, ...] | None = None) -> "Outcome":
        return cls(i, THREW, counts, exc_class, message)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"op_index": self.op_index, "kind": self.kind}
        if self.kind in (VALUE, ROWS, UPDATE_COUNTS) or self.value is not None:
            out["value"] = _jsonable(self.value)
        if self.exc_class is not None:
            out["class"] = self.exc_class
        if self.message is not None:
            out["message"] = self.message
        return out


def _jsonable(value):
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    return value


@dataclass(frozen=True)
class FinalState:
    tables: tuple[tuple[str, tuple[str, ...], tuple[tuple[int, ...], ...]], ...]
    result_set_open: bool
    statement_open: bool

    def table(self, name: str) -> tuple[tuple[int, ...], ...] | None:
        for tname, _, rows in self.tables:
            if tname == name:
                return rows
        return None

    def to_dict(self) -> dict:
        return {
            "tables": {name: {"columns": list(cols), "rows": _jsonable(rows)} for name, cols, rows in self.tables},
            "result_set_open": self.result_set_open,
            "statement_open": self.statement_open,
        }


@dataclass(frozen=True)
class ExecutionReport:
    trace_id: str
    backend_id: str
    property_assignment: PropertyAssignment
    outcomes: tuple[Outcome, ...]
    final_state: FinalState
    fired: tuple[tuple[int | str, str], ...] = ()
    op_names: tuple[str, ...] = ()

    def rules_at(self, where: int | str) -> set[str]:
        return {rule for at, rule in self.fired if at == where}


@dataclass(frozen=True)
class DivergenceCatalog:
    rules: frozenset[str] = frozenset()

    def __post_init__(self):
        unknown = set(self.rules) - set(RULES)
        if unknown:
            raise BackendError(f"unknown divergence rule(s): {', '.join(sorted(unknown))}")
        object.__setattr__(self, "rules", frozenset(self.rules))

    @classmethod
    def of(cls, rules: Iterable[str]) -> "DivergenceCatalog":
        return cls(frozenset(rules))

    @classmethod
    def all(cls) -> "DivergenceCatalog":
        return cls(frozenset(RULES))

    @classmethod
    def from_toggles(cls, toggles: dict[str, bool]) -> "DivergenceCatalog":
        """Build from a ``{tag: on/off}`` mapping; tags may be ``R1`` or the long name."""
        by_name = {name: tag for tag, name in RULES.items()}
        enabled = set()
        for key, on in toggles.items():
            tag = key if key in RULES else by_name.get(key)
            if tag is None:
                raise BackendError(f"unknown divergence rule: {key}")
            if on:
                enabled.add(tag)
        return cls(frozenset(enabled))

    def to_toggles(self) -> dict[str, bool]:
        return {tag: tag in self.rules for tag in RULES}


# -- session state ------------------------------------------------------------


class _SqlFailure(Exception):
    def __init__(self, exc_class: str, message: str):
        super().__init__(message)
        self.exc_class = exc_class
        self.message = message


@dataclass
class _Table:
    columns: tuple[str, ...]
    rows: dict[int, tuple[int, ...]] = field(default_factory=dict)


@dataclass
class _Statement:
    result_set_type: str
    holdability: str
    max_rows: int = 0
    batch: list = field(default_factory=list)
    closed: bool = False
    stale_tables: dict | None = None


@dataclass
class _ResultSet:
    rows: list[tuple[int, ...]]
    result_set_type: str
    holdability: str
    owner: _Statement
    pos: int = 0  # 0 = before first, len(rows) + 1 = after last
    closed: bool = False
    leaked: bool = False  # open only because a divergence rule skipped the close


@dataclass
class Session:
    properties: dict
    connected: bool = False
    tables: dict[str, _Table] = field(default_factory=dict)
    autocommit: bool = True
    savepoint: dict[str, _Table] | None = None
    stmt: _Statement | None = None
    rs: _ResultSet | None = None
    fired: list[tuple[int | str, str]] = field(default_factory=list)

    @classmethod
    def fresh(cls, assignment: PropertyAssignment) -> "Session":
        return cls({**PROPERTY_DEFAULTS, **assignment.as_dict()})

    def prop(self, name: str):
        return self.properties.get(name)

    def snapshot(self) -> FinalState:
        tables = tuple(
            (name, t.columns, tuple(t.rows[k] for k in sorted(t.rows)))
            for name, t in sorted(self.tables.items())
        )
        return FinalState(
            tables,
            result_set_open=self.rs is not None and not self.rs.closed,
            statement_open=self.stmt is not None and not self.stmt.closed,
        )


def _copy_tables(tables: dict[str, _Table]) -> dict[str, _Table]:
    return {name: _Table(t.columns, dict(t.rows)) for name, t in tables.items()}


# -- reference semantics --------------------------------------------------------


class ReferenceBackend:
    """JDBC-conformant connector model.

    Pinned choices where JDBC leaves room: a failing batch stops at the first
    failing statement, the successful prefix persists, and the failure carries
    the prefix's update counts; connection properties never change results.
    """

    backend_id = "reference"

    def execute(self, trace: tr.Trace) -> ExecutionReport:
        session = Session.fresh(trace.property_assignment)
        outcomes = []
        for i, op in enumerate(trace.ops):
            outcome = self.step(op, session, i)
            outcomes.append(outcome)
            if outcome.kind == STRUCTURAL:
                break
        self._finish(session)
        return ExecutionReport(
            trace.id,
            self.backend_id,
            trace.property_assignment,
            tuple(outcomes),
            session.snapshot(),
            tuple(session.fired),
            tuple(op.name for op in trace.ops),
        )

    def _finish(self, session: Session) -> None:
        pass

    def step(self, op: tr.TraceOp, session: Session, i: int) -> Outcome:
        if not isinstance(op, tr.Connect) and not session.connected:
            return Outcome(i, STRUCTURAL, message=f"{op.name} before Connect")
        if op.statement_scoped:
            if session.stmt is None:
                return Outcome(i, STRUCTURAL, message=f"{op.name} without a statement")
            if session.stmt.closed and not isinstance(op, tr.CloseStatement):
                return Outcome.threw(i, "closed-statement", "No operations allowed after statement closed.")
        handler = getattr(self, "_op_" + op.name)
        return handler(op, session, i)

    # connection

    def _op_Connect(self, op, s: Session, i):
        if s.connected:
            return Outcome(i, STRUCTURAL, message="already connected")
        s.connected = True
        return Outcome.unit(i)

    def _op_CreateStatement(self, op: tr.CreateStatement, s: Session, i):
        s.stmt = _Statement(op.result_set_type, op.holdability)
        return Outcome.unit(i)

    def _op_SetAutoCommit(self, op: tr.SetAutoCommit, s: Session, i):
        if op.on and not s.autocommit:
            self._commit(s)
            s.savepoint = None
        elif not op.on and s.autocommit:
            s.savepoint = _copy_tables(s.tables)
        s.autocommit = op.on
        return Outcome.unit(i)

    def _op_Commit(self, op, s: Session, i):
        if s.autocommit:
            return Outcome.threw(i, "invalid-state", "Can't call commit when autocommit=true")
        self._commit(s)
        s.savepoint = _copy_tables(s.tables)
        return Outcome.unit(i)

    def _op_Rollback(self, op, s: Session, i):
        if s.autocommit:
            return Outcome.threw(i, "invalid-state", "Can't call rollback when autocommit=true")
        s.tables = _copy_tables(s.savepoint or {})
        return Outcome.unit(i)

    def _commit(self, s: Session) -> None:
        if s.rs is not None and not s.rs.closed and s.rs.holdability == "CloseAtCommit":
            s.rs.closed = True

    # statement

    def _op_SetMaxRows(self, op: tr.SetMaxRows, s: Session, i):
        if op.n > MAX_ROWS_LIMIT:
            return Outcome.threw(i, "invalid-argument", self._max_rows_message(op.n, s, i))
        s.stmt.max_rows = op.n
        return Outcome.unit(i)

    def _max_rows_message(self, n: int, s: Session, i: int) -> str:
        return f"setMaxRows() out of range. ({n} > {MAX_ROWS_LIMIT})."

    def _op_ExecuteUpdate(self, op: tr.ExecuteUpdate, s: Session, i):
        self._close_current(s)
        try:
            count = _apply(s.tables, op.statement)
        except _SqlFailure as f:
            return Outcome.threw(i, f.exc_class, f.message)
        return Outcome.of_value(i, count)

    def _op_ExecuteQuery(self, op: tr.ExecuteQuery, s: Session, i):
        self._close_current(s)
        try:
            rows = self._query(s, op.statement, i)
        except _SqlFailure as f:
            return Outcome.threw(i, f.exc_class, f.message)
        if s.stmt.max_rows:
            rows = rows[: s.stmt.max_rows]
        s.rs = _ResultSet(rows, s.stmt.result_set_type, s.stmt.holdability, s.stmt)
        return Outcome(i, ROWS, tuple(rows))

    def _query(self, s: Session, stmt, i: int) -> list[tuple[int, ...]]:
        return _select(s.tables, stmt)

    def _op_AddBatch(self, op: tr.AddBatch, s: Session, i):
        s.stmt.batch.append(op.statement)
        return Outcome.unit(i)

    def _op_ExecuteBatch(self, op, s: Session, i):
        self._close_current(s)
        batch, s.stmt.batch = s.stmt.batch, []
        if not batch:
            return Outcome(i, UPDATE_COUNTS, ())
        return self._run_batch(batch, s, i)

    def _run_batch(self, batch: list, s: Session, i: int) -> Outcome:
        counts: list[int] = []
        for stmt in batch:
            if sqlmod.is_query(stmt):
                return Outcome.threw(
                    i, "batch-failure", "Statement in batch returned a result set.", tuple(counts)
                )
            try:
                counts.append(_apply(s.tables, stmt))
            except _SqlFailure as f:
                return Outcome.threw(i, "batch-failure", f.message, tuple(counts))
        return Outcome(i, UPDATE_COUNTS, tuple(counts))

    def _op_GetHoldability(self, op, s: Session, i):
        return Outcome.of_value(i, s.stmt.holdability)

    def _op_GetResultSetHoldability(self, op, s: Session, i):
        return Outcome.of_value(i, s.stmt.holdability)

    def _op_CloseStatement(self, op, s: Session, i):
        if s.stmt.closed:
            return Outcome.unit(i)
        s.stmt.closed = True
        if s.rs is not None and s.rs.owner is s.stmt and not s.rs.closed:
            self._close_owned_result_set(s, i)
        return Outcome.unit(i)

    def _close_owned_result_set(self, s: Session, i: int) -> None:
        s.rs.closed = True

    def _close_current(self, s: Session) -> None:
        # every execute method implicitly closes the statement's open result set
        if s.rs is not None and s.rs.owner is s.stmt:
            s.rs.closed = True
            s.rs.leaked = False

    # result set

    def _rs_guard(self, s: Session, i: int) -> Outcome | None:
        if s.rs is None:
            return Outcome.threw(i, "no-result-set", "No current result set.")
        if s.rs.closed:
            return Outcome.threw(i, "closed-result-set", "Operation not allowed after ResultSet closed.")
        if s.rs.leaked:
            s.fired.append((i, "R7"))
        return None

    def _op_CursorMove(self, op: tr.CursorMove, s: Session, i):
        if (err := self._rs_guard(s, i)) is not None:
            return err
        rs = s.rs
        if op.kind != "Next" and rs.result_set_type == "ForwardOnly":
            if not self._allow_backward(op, s, i):
                return Outcome.threw(
                    i, "forward-only-violation", f"{_method(op.kind)} not allowed on a TYPE_FORWARD_ONLY ResultSet."
                )
        return _move(rs, op, i)

    def _allow_backward(self, op: tr.CursorMove, s: Session, i: int) -> bool:
        return False

    def _op_ReadRow(self, op, s: Session, i):
        if (err := self._rs_guard(s, i)) is not None:
            return err
        rs = s.rs
        if 1 <= rs.pos <= len(rs.rows):
            return Outcome.of_value(i, rs.rows[rs.pos - 1])
        where = "Before start" if rs.pos == 0 else "After end"
        return Outcome.threw(i, "invalid-cursor-position", f"{where} of result set.")

    def _op_CloseResultSet(self, op, s: Session, i):
        if s.rs is not None:
            s.rs.closed = True
            s.rs.leaked = False
        return Outcome.unit(i)

    def _op_CheckResultSetClosed(self, op, s: Session, i):
        if s.rs is None:
            return Outcome.of_value(i, True)
        if s.rs.leaked and not s.rs.closed:
            s.fired.append((i, "R7"))
        return Outcome.of_value(i, s.rs.closed)


def _method(kind: str) -> str:
    return kind[0].lower() + kind[1:] + "()"


def _move(rs: _ResultSet, op: tr.CursorMove, i: int) -> Outcome:
    n = len(rs.rows)
    kind = op.kind
    if kind == "Next":
        if rs.pos <= n:
            rs.pos += 1
    elif kind == "Previous":
        if rs.pos >= 1:
            rs.pos -= 1
    elif kind == "First":
        rs.pos = 1 if n else 0
    elif kind == "Last":
        rs.pos = n
    elif kind == "BeforeFirst":
        rs.pos = 0
        return Outcome.unit(i)
    elif kind == "AfterLast":
        rs.pos = n + 1 if n else 0
        return Outcome.unit(i)
    elif kind == "Absolute":
        k = op.n
        if k > 0:
            rs.pos = min(k, n + 1)
        elif k < 0:
            rs.pos = max(n + 1 + k, 0)
        else:
            rs.pos = 0
    return Outcome.of_value(i, 1 <= rs.pos <= n)


def _apply(tables: dict[str, _Table], stmt) -> int:
    if isinstance(stmt, sqlmod.CreateTable):
        if stmt.table in tables:
            raise _SqlFailure("table-exists", f"Table '{stmt.table}' already exists")
        tables[stmt.table] = _Table(stmt.columns)
        return 0
    if isinstance(stmt, sqlmod.DropTable):
        if stmt.table not in tables:
            raise _SqlFailure("no-such-table", f"Unknown table '{stmt.table}'")
        del tables[stmt.table]
        return 0
    if isinstance(stmt, sqlmod.Insert):
        table = tables.get(stmt.table)
        if table is None:
            raise _SqlFailure("no-such-table", f"Table '{stmt.table}' doesn't exist")
        if len(stmt.values) != len(table.columns):
            raise _SqlFailure("column-count-mismatch", "Column count doesn't match value count")
        key = stmt.values[0]
        if key in table.rows:
            raise _SqlFailure("integrity-violation", f"Duplicate entry '{key}' for key 'PRIMARY'")
        table.rows[key] = stmt.values
        return 1
    raise _SqlFailure("not-dml", "Statement is not DDL/DML")


def _select(tables: dict[str, _Table], stmt) -> list[tuple[int, ...]]:
    if isinstance(stmt, sqlmod.SelectConst):
        return [(stmt.value,)]
    table = tables.get(stmt.table)
    if table is None:
        raise _SqlFailure("no-such-table", f"Table '{stmt.table}' doesn't exist")
    cols = stmt.columns or table.columns
    for col in cols + ((stmt.where[0],) if stmt.where else ()):
        if col not in table.columns:
            raise _SqlFailure("unknown-column", f"Unknown column '{col}'")
    idx = [table.columns.index(c) for c in cols]
    rows = [table.rows[k] for k in sorted(table.rows)]
    if stmt.where:
        w = table.columns.index(stmt.where[0])
        rows = [r for r in rows if r[w] == stmt.where[1]]
    return [tuple(r[j] for j in idx) for r in rows]


def reference_semantics(op: tr.TraceOp, session: Session, op_index: int = 0) -> tuple[Outcome, Session]:
    """Apply one op under the reference semantics, mutating ``session`` in place."""
    return ReferenceBackend().step(op, session, op_index), session


# -- divergent backend --------------------------------------------------------------


class DivergentBackend(ReferenceBackend):
    def __init__(self, catalog: DivergenceCatalog):
        self.catalog = catalog
        self.rules = catalog.rules

    @property
    def backend_id(self) -> str:  # type: ignore[override]
        return "divergent[" + ",".join(sorted(self.rules)) + "]"

    def _allow_backward(self, op, s, i):
        if "R1" in self.rules:
            s.fired.append((i, "R1"))
            return True
        return False

    def _run_batch(self, batch, s, i):
        r2 = "R2" in self.rules
        r5 = "R5" in self.rules and not s.prop("allowMultiQueries")
        rewrite = (
            "R6" in self.rules
            and s.prop("rewriteBatchedStatements")
            and sum(isinstance(b, sqlmod.Insert) for b in batch) >= 2
        )
        before = _copy_tables(s.tables) if rewrite else None
        counts: list[int] = []
        failure: str | None = None
        for stmt in batch:
            if sqlmod.is_query(stmt):
                if r2:
                    counts.append(ILLEGAL_COUNT)
                    _fire(s, i, "R2")
                    continue
                return _batch_failure(i, failure or "Statement in batch returned a result set.", counts)
            try:
                counts.append(_apply(s.tables, stmt))
            except _SqlFailure as f:
                if not r5:
                    return _batch_failure(i, failure or f.message, counts)
                # keep going past the failure instead of stopping
                counts.append(EXECUTE_FAILED)
                failure = failure or f.message
                _fire(s, i, "R5")
        if failure is not None:
            return _batch_failure(i, failure, counts)
        if rewrite:
            s.stmt.stale_tables = before
        return Outcome(i, UPDATE_COUNTS, tuple(counts))

    def _query(self, s, stmt, i):
        fresh = super()._query(s, stmt, i)
        stale_tables, s.stmt.stale_tables = s.stmt.stale_tables, None
        if stale_tables is None:
            return fresh
        try:
            stale = _select(stale_tables, stmt)
        except _SqlFailure:
            return fresh
        if stale != fresh:
            s.fired.append((i, "R6"))
        return stale

    def _op_GetHoldability(self, op, s, i):
        if "R3" in self.rules:
            s.fired.append((i, "R3"))
            return Outcome.threw(i, "not-supported", "Feature not supported: getHoldability()")
        return super()._op_GetHoldability(op, s, i)

    def _op_GetResultSetHoldability(self, op, s, i):
        if "R4" in self.rules and s.stmt.holdability == "CloseAtCommit":
            s.fired.append((i, "R4"))
            return Outcome.of_value(i, "HoldOverCommit")
        return super()._op_GetResultSetHoldability(op, s, i)

    def _close_owned_result_set(self, s, i):
        if "R7" in self.rules:
            s.rs.leaked = True
            return
        super()._close_owned_result_set(s, i)

    def _max_rows_message(self, n, s, i):
        if "R8" in self.rules:
            s.fired.append((i, "R8"))
            return "Illegal value for setFetchSize()."
        return super()._max_rows_message(n, s, i)

    def _finish(self, s):
        fired = {rule for _, rule in s.fired}
        for rule in _LASTING_RULES:
            if rule in fired:
                s.fired.append((FINAL, rule))
        if s.rs is not None and s.rs.leaked and not s.rs.closed:
            s.fired.append((FINAL, "R7"))


def _fire(s: Session, i: int, rule: str) -> None:
    if (i, rule) not in s.fired:
        s.fired.append((i, rule))


def _batch_failure(i: int, message: str, counts: list[int]) -> Outcome:
    return Outcome.threw(i, "batch-failure", message, tuple(counts))


def make_divergent(catalog: DivergenceCatalog, reference: ReferenceBackend | None = None) -> ReferenceBackend:
    """Return a backend that deviates from ``reference`` per ``catalog``.

    An empty catalog yields plain reference behaviour.
    """
    if not isinstance(catalog, DivergenceCatalog):
        catalog = DivergenceCatalog.of(catalog)
    return DivergentBackend(catalog)


def execute(trace: tr.Trace, backend: ReferenceBackend) -> ExecutionReport:
    return backend.execute(trace)

