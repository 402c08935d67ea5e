"""The connector-trace DSL: op catalog, structural validation, text format.

A trace file looks like::

    conndiff-trace v1
    id: forward-only
    provenance: manual
    property: allowMultiQueries=true
    op: Connect
    op: CreateStatement result_set_type=ForwardOnly holdability=HoldOverCommit
    op: ExecuteQuery sql="SELECT 1"
    op: CursorMove kind=BeforeFirst

Header records (``id``, ``provenance``, ``property``) come first, then one
``op:`` record per line. Payload keys are written in declaration order;
strings are JSON-quoted, integers and enum tags are bare. Blank lines and
``#`` comments are ignored.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from typing import ClassVar, Union

from conndiff import fileformat, sql as sqlmod
from conndiff.props import PropertyAssignment

TRACE_KIND = "conndiff-trace"

RESULT_SET_TYPES = ("ForwardOnly", "ScrollInsensitive")
HOLDABILITIES = ("HoldOverCommit", "CloseAtCommit")
CURSOR_KINDS = ("Next", "Previous", "First", "Last", "BeforeFirst", "AfterLast", "Absolute")
# cursor moves that JDBC forbids on a forward-only result set
BACKWARD_KINDS = ("Previous", "First", "Last", "BeforeFirst", "AfterLast", "Absolute")


class TraceError(ValueError):
    """Invalid op payload."""


class ParseError(ValueError):
    def __init__(self, reason: str, line: int | None = None, op_index: int | None = None):
        self.reason = reason
        self.line = line
        self.op_index = op_index
        where = []
        if line is not None:
            where.append(f"line {line}")
        if op_index is not None:
            where.append(f"op {op_index}")
        super().__init__(f"{', '.join(where)}: {reason}" if where else reason)


class _Op:
    # ops that need an open statement (JDBC Statement methods)
    statement_scoped: ClassVar[bool] = False

    @property
    def name(self) -> str:
        return type(self).__name__

    def payload(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    def __str__(self) -> str:
        parts = [self.name]
        for key, value in self.payload().items():
            if value is not None:
                parts.append(f"{key}={_format_value(value)}")
        return " ".join(parts)


@dataclass(frozen=True)
class Connect(_Op):
    pass


@dataclass(frozen=True)
class CreateStatement(_Op):
    result_set_type: str = "ForwardOnly"
    holdability: str = "HoldOverCommit"

    def __post_init__(self):
        _check_enum("result_set_type", self.result_set_type, RESULT_SET_TYPES)
        _check_enum("holdability", self.holdability, HOLDABILITIES)


@dataclass(frozen=True)
class SetMaxRows(_Op):
    n: int
    statement_scoped: ClassVar[bool] = True

    def __post_init__(self):
        _check_int("n", self.n)
        if self.n < 0:
            raise TraceError(f"n must be non-negative, got {self.n}")


@dataclass(frozen=True)
class _SqlOp(_Op):
    sql: str
    statement_scoped: ClassVar[bool] = True

    def __post_init__(self):
        if not isinstance(self.sql, str):
            raise TraceError("sql must be a string")
        try:
            stmt = sqlmod.parse_sql(self.sql)
        except sqlmod.SqlError as exc:
            raise TraceError(str(exc)) from None
        self._check_kind(stmt)

    def _check_kind(self, stmt: sqlmod.Statement) -> None:
        pass

    @property
    def statement(self) -> sqlmod.Statement:
        return sqlmod.parse_sql(self.sql)


@dataclass(frozen=True)
class ExecuteUpdate(_SqlOp):
    def _check_kind(self, stmt):
        if sqlmod.is_query(stmt):
            raise TraceError("ExecuteUpdate needs DDL/DML, got a SELECT")


@dataclass(frozen=True)
class ExecuteQuery(_SqlOp):
    def _check_kind(self, stmt):
        if not sqlmod.is_query(stmt):
            raise TraceError("ExecuteQuery needs a SELECT")


@dataclass(frozen=True)
class AddBatch(_SqlOp):
    pass


@dataclass(frozen=True)
class ExecuteBatch(_Op):
    statement_scoped: ClassVar[bool] = True


@dataclass(frozen=True)
class CursorMove(_Op):
    kind: str
    n: int | None = None

    def __post_init__(self):
        _check_enum("kind", self.kind, CURSOR_KINDS)
        if self.kind == "Absolute":
            if self.n is None:
                raise TraceError("Absolute requires an integer n")
            _check_int("n", self.n)
        elif self.n is not None:
            raise TraceError(f"{self.kind} takes no n")


@dataclass(frozen=True)
class ReadRow(_Op):
    pass


@dataclass(frozen=True)
class GetHoldability(_Op):
    statement_scoped: ClassVar[bool] = True


@dataclass(frozen=True)
class GetResultSetHoldability(_Op):
    statement_scoped: ClassVar[bool] = True


@dataclass(frozen=True)
class SetAutoCommit(_Op):
    on: bool

    def __post_init__(self):
        if not isinstance(self.on, bool):
            raise TraceError(f"on must be true or false, got {self.on!r}")


@dataclass(frozen=True)
class Commit(_Op):
    pass


@dataclass(frozen=True)
class Rollback(_Op):
    pass


@dataclass(frozen=True)
class CloseResultSet(_Op):
    pass


@dataclass(frozen=True)
class CloseStatement(_Op):
    statement_scoped: ClassVar[bool] = True


@dataclass(frozen=True)
class CheckResultSetClosed(_Op):
    pass


TraceOp = Union[
    Connect, CreateStatement, SetMaxRows, ExecuteUpdate, ExecuteQuery, AddBatch,
    ExecuteBatch, CursorMove, ReadRow, GetHoldability, GetResultSetHoldability,
    SetAutoCommit, Commit, Rollback, CloseResultSet, CloseStatement, CheckResultSetClosed,
]

OP_TYPES: dict[str, type] = {
    cls.__name__: cls
    for cls in (
        Connect, CreateStatement, SetMaxRows, ExecuteUpdate, ExecuteQuery, AddBatch,
        ExecuteBatch, CursorMove, ReadRow, GetHoldability, GetResultSetHoldability,
        SetAutoCommit, Commit, Rollback, CloseResultSet, CloseStatement, CheckResultSetClosed,
    )
}


def _check_enum(key: str, value, allowed: tuple[str, ...]) -> None:
    if value not in allowed:
        raise TraceError(f"{key} must be one of {'|'.join(allowed)}, got {value!r}")


def _check_int(key: str, value) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise TraceError(f"{key} must be an integer, got {value!r}")


@dataclass(frozen=True)
class Provenance:
    prompt_id: str
    round: int

    def __str__(self) -> str:
        return f"prompt={self.prompt_id} round={self.round}"


MANUAL = "manual"


@dataclass(frozen=True)
class Trace:
    id: str
    ops: tuple[TraceOp, ...]
    property_assignment: PropertyAssignment = field(default_factory=PropertyAssignment)
    provenance: Provenance | str = MANUAL

    def with_ops(self, ops) -> "Trace":
        return dataclasses.replace(self, ops=tuple(ops))


@dataclass(frozen=True)
class Violation:
    message: str
    op_index: int | None = None

    def __str__(self) -> str:
        return self.message if self.op_index is None else f"op {self.op_index}: {self.message}"


def validate(trace: Trace) -> list[Violation]:
    """Return every structural violation in ``trace`` (empty when valid)."""
    out: list[Violation] = []
    if not trace.id:
        out.append(Violation("trace id must be non-empty"))
    ops = trace.ops
    if not ops:
        out.append(Violation("trace has no ops"))
        return out
    if not isinstance(ops[0], Connect):
        out.append(Violation("must begin with Connect", 0))
    seen_query = seen_statement = False
    pending_batch = 0
    connects = 0
    for i, op in enumerate(ops):
        if type(op) not in OP_TYPES.values():
            out.append(Violation(f"unknown op {op!r}", i))
            continue
        if isinstance(op, Connect):
            connects += 1
            if connects > 1:
                out.append(Violation("at most one Connect per trace", i))
        if op.statement_scoped and not seen_statement:
            out.append(Violation(f"{op.name} requires an earlier CreateStatement", i))
        if isinstance(op, (CursorMove, ReadRow)) and not seen_query:
            out.append(Violation(f"{op.name} requires an earlier ExecuteQuery", i))
        if isinstance(op, ExecuteBatch):
            if pending_batch == 0:
                out.append(Violation("ExecuteBatch requires an AddBatch since the last ExecuteBatch", i))
            pending_batch = 0
        elif isinstance(op, AddBatch):
            pending_batch += 1
        elif isinstance(op, CreateStatement):
            seen_statement = True
            pending_batch = 0  # batches belong to the statement
        elif isinstance(op, ExecuteQuery):
            seen_query = True
    return out


def is_valid(trace: Trace) -> bool:
    return not validate(trace)


# -- text format ---------------------------------------------------------------


def _format_value(value) -> str:
    return fileformat.format_scalar(value)


def serialize(trace: Trace) -> str:
    problems = validate(trace)
    if problems:
        raise TraceError("cannot serialize invalid trace: " + "; ".join(map(str, problems)))
    lines = [fileformat.header(TRACE_KIND), f"id: {trace.id}", f"provenance: {trace.provenance}"]
    for name, value in trace.property_assignment.bindings:
        lines.append(f"property: {name}={fileformat.format_scalar(value)}")
    for op in trace.ops:
        lines.append(f"op: {op}")
    return "\n".join(lines) + "\n"


_KV_RE = re.compile(r'\s*([A-Za-z_][A-Za-z0-9_]*)=("(?:[^"\\]|\\.)*"|[^\s"]+)')
_RECORD_RE = re.compile(r"^([a-z_]+):\s*(.*)$")
_PROVENANCE_RE = re.compile(r"^prompt=(\S+)\s+round=(\d+)$")


def _parse_kv(text: str, line: int, op_index: int | None) -> dict:
    out: dict = {}
    pos = 0
    while pos < len(text):
        if not text[pos:].strip():
            break
        m = _KV_RE.match(text, pos)
        if not m:
            raise ParseError(f"malformed key=value near {text[pos:].strip()!r}", line, op_index)
        key, raw = m.group(1), m.group(2)
        if key in out:
            raise ParseError(f"duplicate key {key!r}", line, op_index)
        try:
            out[key] = fileformat.parse_scalar(raw)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}", line, op_index) from None
        pos = m.end()
    return out


def parse_op(text: str, line: int | None = None, op_index: int | None = None) -> TraceOp:
    name, _, rest = text.strip().partition(" ")
    cls = OP_TYPES.get(name)
    if cls is None:
        raise ParseError(f"unknown op {name!r}", line, op_index)
    kwargs = _parse_kv(rest, line, op_index)
    known = {f.name for f in dataclasses.fields(cls)}
    for key in kwargs:
        if key not in known:
            raise ParseError(f"unknown field {key!r} for {name}", line, op_index)
    missing = [
        f.name for f in dataclasses.fields(cls)
        if f.name not in kwargs
        and f.default is dataclasses.MISSING
        and f.default_factory is dataclasses.MISSING
    ]
    if missing:
        raise ParseError(f"{name} missing field(s): {', '.join(missing)}", line, op_index)
    if "sql" in kwargs and not isinstance(kwargs["sql"], str):
        raise ParseError("sql must be a quoted string", line, op_index)
    try:
        return cls(**kwargs)
    except TraceError as exc:
        raise ParseError(str(exc), line, op_index) from None


def parse(text: str) -> Trace:
    try:
        body = fileformat.split_header(text, TRACE_KIND)
    except fileformat.FormatError as exc:
        raise ParseError(str(exc), 1 if text.strip() else None) from None

    trace_id: str | None = None
    provenance: Provenance | str = MANUAL
    bindings: dict = {}
    ops: list = []
    for lineno, raw in enumerate(body.splitlines(), start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _RECORD_RE.match(line)
        if not m:
            raise ParseError(f"unrecognized record {line!r}", lineno)
        key, value = m.group(1), m.group(2).strip()
        if key == "op":
            ops.append(parse_op(value, lineno, len(ops)))
            continue
        if ops:
            raise ParseError(f"header record {key!r} after ops", lineno)
        if key == "id":
            if trace_id is not None:
                raise ParseError("duplicate id", lineno)
            trace_id = value
        elif key == "provenance":
            if value == MANUAL:
                provenance = MANUAL
            elif pm := _PROVENANCE_RE.match(value):
                provenance = Provenance(pm.group(1), int(pm.group(2)))
            else:
                raise ParseError(f"bad provenance {value!r}", lineno)
        elif key == "property":
            kv = _parse_kv(value, lineno, None)
            if len(kv) != 1:
                raise ParseError("property record holds exactly one name=value", lineno)
            (name, val), = kv.items()
            if name in bindings:
                raise ParseError(f"duplicate property {name!r}", lineno)
            bindings[name] = val
        else:
            raise ParseError(f"unknown field {key!r}", lineno)
    if trace_id is None:
        raise ParseError("missing id record")
    if not ops:
        raise ParseError("trace has no ops")
    return Trace(trace_id, tuple(ops), PropertyAssignment.of(bindings), provenance)
