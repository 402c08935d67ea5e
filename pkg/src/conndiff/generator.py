"""Test-case generation: rendered prompt in, validated trace out.

Two generators share one interface. :class:`StubGenerator` is an offline,
deterministic grammar sampler whose op mix depends on the focus group;
:class:`RemoteGenerator` posts the prompt to a chat-completion endpoint. Both
feed their raw text through :func:`rewrite`, the trace parser and
:func:`conndiff.trace.validate`.
"""

from __future__ import annotations

import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Protocol

from conndiff import fileformat
from conndiff import trace as tr
from conndiff.backends import MAX_ROWS_LIMIT
from conndiff.prompts import FOCUS_GROUPS
from conndiff.props import PropertyAssignment

log = logging.getLogger(__name__)

TABLE = "t0"
CREATE_SQL = f"CREATE TABLE {TABLE}(c0 INT PRIMARY KEY, c1 INT)"
SELECT_SQL = f"SELECT c0, c1 FROM {TABLE}"
NON_DML_SQL = f"SELECT c0 FROM {TABLE}"

REWRITE_RULES = ("strip-fences", "normalize-whitespace", "inject-header", "drop-after-close")


class GeneratorError(RuntimeError):
    pass


class TransportError(GeneratorError):
    """The remote endpoint could not be reached; the caller may retry."""


@dataclass(frozen=True)
class GeneratorRequest:
    prompt_text: str
    focus_group: str
    property_assignment: PropertyAssignment = field(default_factory=PropertyAssignment)
    seed: int = 0

    def __post_init__(self):
        if not self.prompt_text:
            raise GeneratorError("prompt_text must be non-empty")


@dataclass(frozen=True)
class ParseFailure:
    reason: str


@dataclass(frozen=True)
class GeneratorOutput:
    raw_text: str
    parsed: tr.Trace | ParseFailure
    rewrites_applied: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return isinstance(self.parsed, tr.Trace)


class Generator(Protocol):
    name: str

    def complete(self, request: GeneratorRequest) -> str:
        ...


# -- rewriting -----------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_RECORD_RE = re.compile(r"^\s*(?:op|id|provenance|property)\s*:")


def _has_trace_content(text: str) -> bool:
    for line in text.splitlines():
        if _RECORD_RE.match(line) or line.strip().startswith(tr.TRACE_KIND):
            return True
    return False


def rewrite(raw_text: str) -> tuple[str, list[str]]:
    """Massage generator output into parseable trace text.

    Rules run in a fixed order and each one that changes the text is reported:
    strip code fences and surrounding prose, normalize whitespace, add a missing
    version header, and drop ops after the first CloseStatement.
    """
    if not _has_trace_content(raw_text):
        return raw_text, []
    applied: list[str] = []
    text = raw_text

    blocks = [b for b in _FENCE_RE.findall(text) if _has_trace_content(b)]
    if blocks:
        stripped = blocks[0]
    else:
        lines = text.splitlines()
        keep = [i for i, ln in enumerate(lines) if _RECORD_RE.match(ln) or ln.strip().startswith(tr.TRACE_KIND)]
        stripped = "\n".join(lines[keep[0] : keep[-1] + 1]) + "\n"
    if stripped != text:
        applied.append("strip-fences")
        text = stripped

    # collapse whitespace outside quoted values only
    normalized = "\n".join(_normalize_line(ln) for ln in text.replace("\r\n", "\n").splitlines() if ln.strip()) + "\n"
    if normalized != text:
        applied.append("normalize-whitespace")
        text = normalized

    if not text.startswith(fileformat.header(tr.TRACE_KIND)):
        if text.split(" ", 1)[0] != tr.TRACE_KIND:
            text = fileformat.header(tr.TRACE_KIND) + "\n" + text
            applied.append("inject-header")

    lines = text.splitlines()
    for idx, ln in enumerate(lines):
        if re.match(r"^op:\s*CloseStatement\b", ln):
            if idx + 1 < len(lines) and any(re.match(r"^op:", x) for x in lines[idx + 1 :]):
                text = "\n".join(lines[: idx + 1]) + "\n"
                applied.append("drop-after-close")
            break
    return text, applied


def _normalize_line(line: str) -> str:
    parts = re.split(r'("(?:[^"\\]|\\.)*")', line.strip())
    out = []
    for i, part in enumerate(parts):
        out.append(part if i % 2 else re.sub(r"[ \t]+", " ", part))
    return "".join(out)


def funnel(raw_text: str, request: GeneratorRequest | None = None) -> GeneratorOutput:
    """Rewrite, parse and validate raw generator text."""
    text, applied = rewrite(raw_text)
    try:
        trace = tr.parse(text)
    except tr.ParseError as exc:
        return GeneratorOutput(raw_text, ParseFailure(str(exc)), tuple(applied))
    if request is not None:
        # the round's property assignment is an input, not something the generator picks
        trace = tr.Trace(trace.id, trace.ops, request.property_assignment, trace.provenance)
    problems = tr.validate(trace)
    if problems:
        return GeneratorOutput(raw_text, ParseFailure("; ".join(map(str, problems))), tuple(applied))
    return GeneratorOutput(raw_text, trace, tuple(applied))


def generate(request: GeneratorRequest, backend: Generator) -> GeneratorOutput:
    return funnel(backend.complete(request), request)


# -- offline stub ----------------------------------------------------------------------

_DEFAULT_GRAMMAR = {
    "baseline": {
        "insert": 2, "query": 3, "next": 3, "cursor": 1, "read": 2, "batch": 1,
        "holdability": 1, "max_rows": 1, "txn": 1, "close_rs": 0.5, "new_statement": 0.5,
    },
    "groups": {g: {} for g in FOCUS_GROUPS},
    "defaults": {
        "forward_only": 0.6, "close_at_commit": 0.3, "non_dml_in_batch": 0.2,
        "max_rows_out_of_range": 0.3, "min_moves": 3, "max_moves": 8,
    },
}


class _Builder:
    def __init__(self, rng: random.Random, knobs: dict):
        self.rng = rng
        self.knobs = knobs
        self.ops: list = []
        self.has_query = False
        self.autocommit = True
        self.next_key = 10

    def fresh_key(self) -> int:
        self.next_key += 1
        return self.next_key

    def emit(self, op) -> None:
        self.ops.append(op)

    def statement(self) -> None:
        rng = self.rng
        rs_type = "ForwardOnly" if rng.random() < self.knobs["forward_only"] else "ScrollInsensitive"
        hold = "CloseAtCommit" if rng.random() < self.knobs["close_at_commit"] else "HoldOverCommit"
        self.emit(tr.CreateStatement(rs_type, hold))

    def ensure_query(self) -> None:
        if not self.has_query:
            self.move_query()

    # moves

    def move_insert(self):
        k = self.rng.randint(1, 8)
        self.emit(tr.ExecuteUpdate(f"INSERT INTO {TABLE} VALUES ({k}, {self.rng.randint(0, 99)})"))

    def move_query(self):
        r = self.rng.random()
        if r < 0.6:
            sql = SELECT_SQL
        elif r < 0.8:
            sql = f"{SELECT_SQL} WHERE c0 = {self.rng.randint(1, 4)}"
        else:
            sql = f"SELECT {self.rng.randint(1, 9)}"
        self.emit(tr.ExecuteQuery(sql))
        self.has_query = True

    def move_next(self):
        self.ensure_query()
        self.emit(tr.CursorMove("Next"))

    def move_cursor(self):
        self.ensure_query()
        kind = self.rng.choice(tr.BACKWARD_KINDS)
        n = self.rng.randint(-3, 3) if kind == "Absolute" else None
        self.emit(tr.CursorMove(kind, n))

    def move_read(self):
        self.ensure_query()
        self.emit(tr.ReadRow())

    def _inserts(self, count: int) -> None:
        for _ in range(count):
            self.emit(tr.AddBatch(f"INSERT INTO {TABLE} VALUES ({self.fresh_key()}, {self.rng.randint(0, 99)})"))

    def move_batch(self):
        count = self.rng.randint(2, 4)
        marker_at = self.rng.randint(0, count) if self.rng.random() < self.knobs["non_dml_in_batch"] else None
        for j in range(count + 1):
            if j == marker_at:
                self.emit(tr.AddBatch(NON_DML_SQL))
            if j < count:
                self._inserts(1)
        self.emit(tr.ExecuteBatch())

    def move_dup_batch(self):
        a, b = self.fresh_key(), self.fresh_key()
        for k in (a, a, b):
            self.emit(tr.AddBatch(f"INSERT INTO {TABLE} VALUES ({k}, {self.rng.randint(0, 99)})"))
        self.emit(tr.ExecuteBatch())
        if self.rng.random() < 0.5:
            self.emit(tr.ExecuteQuery(SELECT_SQL))
            self.has_query = True

    def move_batch_then_query(self):
        self._inserts(self.rng.randint(2, 4))
        self.emit(tr.ExecuteBatch())
        self.emit(tr.ExecuteQuery(SELECT_SQL))
        self.has_query = True

    def move_holdability(self):
        self.emit(self.rng.choice((tr.GetHoldability(), tr.GetResultSetHoldability())))

    def move_result_set_holdability(self):
        self.emit(tr.GetResultSetHoldability())

    def move_max_rows(self):
        if self.rng.random() < self.knobs["max_rows_out_of_range"]:
            n = self.rng.randint(MAX_ROWS_LIMIT + 1, 2 * MAX_ROWS_LIMIT)
        else:
            n = self.rng.randint(0, 5)
        self.emit(tr.SetMaxRows(n))

    def move_txn(self):
        if self.autocommit:
            self.emit(tr.SetAutoCommit(False))
            self.autocommit = False
            return
        choice = self.rng.choice(("commit", "rollback", "autocommit"))
        if choice == "commit":
            self.emit(tr.Commit())
        elif choice == "rollback":
            self.emit(tr.Rollback())
        else:
            self.emit(tr.SetAutoCommit(True))
            self.autocommit = True

    def move_close_rs(self):
        self.emit(self.rng.choice((tr.CloseResultSet(), tr.CheckResultSetClosed())))

    def move_new_statement(self):
        self.statement()

    def move_close_statement(self):
        # placed last by the stub: the rewrite funnel drops anything after it
        self.ensure_query()
        if self.rng.random() < 0.5:
            self.emit(tr.CheckResultSetClosed())
        self.emit(tr.CloseStatement())


class StubGenerator:
    """Deterministic grammar-based generator; a pure function of the request.

    The prompt text is ignored; the focus group selects the move weights and
    the moves every trace of that group must contain.
    """

    name = "stub"

    def __init__(self, grammar: dict | None = None):
        grammar = grammar or _DEFAULT_GRAMMAR
        self.baseline = dict(grammar.get("baseline") or _DEFAULT_GRAMMAR["baseline"])
        self.defaults = {**_DEFAULT_GRAMMAR["defaults"], **(grammar.get("defaults") or {})}
        self.groups = {g: dict((grammar.get("groups") or {}).get(g) or {}) for g in FOCUS_GROUPS}

    def signature(self, group: str) -> str | None:
        return self.groups[group].get("signature")

    def build(self, request: GeneratorRequest) -> tr.Trace:
        if request.focus_group not in self.groups:
            raise GeneratorError(f"unknown focus group {request.focus_group!r}")
        spec = self.groups[request.focus_group]
        knobs = {k: spec.get(k, v) for k, v in self.defaults.items()}
        rng = random.Random(f"{request.seed}|{request.focus_group}|{request.property_assignment.bindings!r}")
        b = _Builder(rng, knobs)

        b.emit(tr.Connect())
        b.statement()
        b.emit(tr.ExecuteUpdate(CREATE_SQL))
        for k in rng.sample(range(1, 5), rng.randint(1, 3)):
            b.emit(tr.ExecuteUpdate(f"INSERT INTO {TABLE} VALUES ({k}, {rng.randint(0, 99)})"))

        weights = {m: w * spec.get("boost", {}).get(m, 1) for m, w in self.baseline.items()}
        names = sorted(weights)
        count = rng.randint(knobs["min_moves"], knobs["max_moves"])
        plan = rng.choices(names, weights=[weights[m] for m in names], k=count)
        closing = []
        for required in spec.get("require", []):
            if required == "close_statement":
                closing.append(required)
            else:
                plan.insert(rng.randint(0, len(plan)), required)
        for move in plan + closing:
            getattr(b, "move_" + move)()

        trace_id = f"stub-{request.focus_group}-{request.seed}"
        return tr.Trace(trace_id, tuple(b.ops), request.property_assignment)

    def complete(self, request: GeneratorRequest) -> str:
        body = tr.serialize(self.build(request))
        return f"Here is a test trace for the {request.focus_group} scenario.\n\n```conndiff\n{body}```\n"


# -- remote LLM ---------------------------------------------------------------------------


@dataclass
class RemoteSettings:
    endpoint: str
    model: str
    api_key_env: str = "CONNDIFF_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    backoff: float = 1.0


class RemoteGenerator:
    """Chat-completion client; returns the assistant message text."""

    name = "remote"

    def __init__(self, settings: RemoteSettings, client=None):
        import httpx

        self.settings = settings
        self._client = client or httpx.Client(timeout=settings.timeout)
        self._slots = threading.BoundedSemaphore(max(1, settings.max_in_flight))

    def _payload(self, request: GeneratorRequest) -> dict:
        return {
            "model": self.settings.model,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "seed": request.seed,
        }

    def complete(self, request: GeneratorRequest) -> str:
        import httpx

        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.settings.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        last: Exception | None = None
        for attempt in range(self.settings.max_retries + 1):
            try:
                with self._slots:
                    resp = self._client.post(self.settings.endpoint, json=self._payload(request), headers=headers)
                if resp.status_code >= 500 or resp.status_code == 429:
                    raise TransportError(f"endpoint returned HTTP {resp.status_code}")
                resp.raise_for_status()
                return _message_text(resp.json())
            except (httpx.TransportError, TransportError) as exc:
                last = exc
                log.warning("generator attempt %d failed: %s", attempt + 1, exc)
                if attempt < self.settings.max_retries and self.settings.backoff:
                    time.sleep(self.settings.backoff * 2**attempt)
            except httpx.HTTPStatusError as exc:
                raise GeneratorError(f"endpoint rejected request: {exc}") from exc
        raise TransportError(f"giving up after {self.settings.max_retries + 1} attempts: {last}")


def _message_text(data: dict) -> str:
    try:
        return data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        try:
            return data["choices"][0]["text"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GeneratorError("unrecognized completion response shape") from exc
