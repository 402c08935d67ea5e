from __future__ import annotations

from pathlib import Path

from hypothesis import strategies as st

from conndiff import props
from conndiff import trace as tr
from conndiff.generator import GeneratorRequest, StubGenerator
from conndiff.prompts import FOCUS_GROUPS, default_prompt_set
from conndiff.reducer import repair

SHIPPED_SCHEMA = props.default_schema()
SHIPPED_CATALOG = props.curate_subsets(SHIPPED_SCHEMA)
STUB = StubGenerator(default_prompt_set().generator)
WITNESS_DIR = Path(__file__).parent / "witnesses"

def witness(tag: str) -> tr.Trace:
    """Shipped trace on which divergence rule ``tag`` is observable."""
    return tr.parse((WITNESS_DIR / f"{tag}.trace").read_text())

def forward_only_trace() -> tr.Trace:
    """Forward-only result set, then beforeFirst()."""
    return tr.Trace(
        "forward-only",
        (
            tr.Connect(),
            tr.CreateStatement("ForwardOnly", "HoldOverCommit"),
            tr.ExecuteQuery("SELECT 1"),
            tr.CursorMove("BeforeFirst"),
        ),
    )

def duplicate_batch_trace(allow_multi_queries: bool = True) -> tr.Trace:
    """Batch inserting duplicate primary keys (1), (1), (2) into t0."""
    return tr.Trace(
        "duplicate-batch",
        (
            tr.Connect(),
            tr.CreateStatement(),
            tr.ExecuteUpdate("CREATE TABLE t0(c0 INT PRIMARY KEY)"),
            tr.AddBatch("INSERT INTO t0 VALUES (1)"),
            tr.AddBatch("INSERT INTO t0 VALUES (1)"),
            tr.AddBatch("INSERT INTO t0 VALUES (2)"),
            tr.ExecuteBatch(),
        ),
        props.PropertyAssignment.of({"allowMultiQueries": allow_multi_queries}),
    )

ACCEPTANCE_LINES: list[str] = []

def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

def stub_trace(seed: int, group: str, assignment: props.PropertyAssignment | None = None) -> tr.Trace:
    assignment = assignment if assignment is not None else props.PropertyAssignment()
    return STUB.build(GeneratorRequest("stub", group, assignment, seed))

assignments = st.sampled_from(SHIPPED_CATALOG.flatten())

stub_traces = st.builds(
    stub_trace,
    st.integers(min_value=0, max_value=2**31 - 1),
    st.sampled_from(FOCUS_GROUPS),
    assignments,
)

_SQL_UPDATES = [
    "CREATE TABLE t0(c0 INT PRIMARY KEY, c1 INT)",
    "CREATE TABLE t1(c0 INT PRIMARY KEY)",
    "DROP TABLE t1",
] + [f"INSERT INTO t0 VALUES ({k}, {k * 7})" for k in range(4)]
_SQL_QUERIES = ["SELECT c0, c1 FROM t0", "SELECT c0 FROM t0 WHERE c0 = 1", "SELECT 1"]

_ops = st.one_of(
    st.builds(tr.CreateStatement, st.sampled_from(tr.RESULT_SET_TYPES), st.sampled_from(tr.HOLDABILITIES)),
    st.builds(tr.SetMaxRows, st.one_of(st.integers(0, 10), st.just(60_000_000))),
    st.builds(tr.ExecuteUpdate, st.sampled_from(_SQL_UPDATES)),
    st.builds(tr.ExecuteQuery, st.sampled_from(_SQL_QUERIES)),
    st.builds(tr.AddBatch, st.sampled_from(_SQL_UPDATES[3:] + _SQL_QUERIES[:1])),
    st.just(tr.ExecuteBatch()),
    st.builds(tr.CursorMove, st.sampled_from([k for k in tr.CURSOR_KINDS if k != "Absolute"])),
    st.builds(tr.CursorMove, st.just("Absolute"), st.integers(-3, 3)),
    st.sampled_from(
        [
            tr.ReadRow(),
            tr.GetHoldability(),
            tr.GetResultSetHoldability(),
            tr.SetAutoCommit(False),
            tr.SetAutoCommit(True),
            tr.Commit(),
            tr.Rollback(),
            tr.CloseResultSet(),
            tr.CloseStatement(),
            tr.CheckResultSetClosed(),
        ]
    ),
)

@st.composite
def random_traces(draw, max_ops: int = 20) -> tr.Trace:
    """Arbitrary op soup made valid by dropping ops with missing prerequisites."""
    body = draw(st.lists(_ops, max_size=max_ops))
    ops = repair([tr.Connect(), *body])
    ident = draw(st.from_regex(r"[a-z][a-z0-9-]{0,11}", fullmatch=True))
    provenance = draw(
        st.one_of(st.just(tr.MANUAL), st.builds(tr.Provenance, st.sampled_from(["P1", "P2", "P6"]), st.integers(1, 999)))
    )
    return tr.Trace(ident, tuple(ops), draw(assignments), provenance)
