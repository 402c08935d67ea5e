"""Delta-debugging reduction of discrepancy-exhibiting traces.

The reducer runs ddmin over the op list (``Connect`` is pinned). A candidate
that loses the ``ExecuteQuery`` feeding a cursor op, or the ``AddBatch`` feeding
an ``ExecuteBatch``, is repaired by dropping the dependents instead of being
thrown away. A final single-removal sweep makes the result 1-minimal.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

from conndiff import trace as tr
from conndiff.backends import DivergenceCatalog, ReferenceBackend, make_divergent
from conndiff.comparator import CROSS_CONNECTOR, CROSS_PROPERTY, compare

Oracle = Callable[[tr.Trace], bool]


class ReductionError(ValueError):
    pass


class BudgetExceeded(ReductionError):
    pass


def repair(ops: Sequence) -> list:
    """Drop ops whose structural prerequisites were removed."""
    out = []
    seen_query = seen_statement = False
    pending = 0
    for op in ops:
        if op.statement_scoped and not seen_statement:
            continue
        if isinstance(op, (tr.CursorMove, tr.ReadRow)) and not seen_query:
            continue
        if isinstance(op, tr.ExecuteBatch):
            if pending == 0:
                continue
            pending = 0
        elif isinstance(op, tr.AddBatch):
            pending += 1
        elif isinstance(op, tr.CreateStatement):
            seen_statement = True
            pending = 0
        elif isinstance(op, tr.ExecuteQuery):
            seen_query = True
        out.append(op)
    return out


class _Counter:
    def __init__(self, oracle: Oracle, budget: int | None):
        self.oracle = oracle
        self.budget = budget
        self.calls = 0
        self.cache: dict[tuple, bool] = {}

    def __call__(self, trace: tr.Trace) -> bool:
        key = trace.ops
        if key in self.cache:
            return self.cache[key]
        if self.budget is not None and self.calls >= self.budget:
            raise BudgetExceeded(f"oracle call budget of {self.budget} exhausted")
        self.calls += 1
        result = bool(self.oracle(trace))
        self.cache[key] = result
        return result


def _split(items: list[int], n: int) -> list[list[int]]:
    size, extra = divmod(len(items), n)
    out, start = [], 0
    for i in range(n):
        end = start + size + (1 if i < extra else 0)
        out.append(items[start:end])
        start = end
    return [c for c in out if c]


def reduce(trace: tr.Trace, oracle: Oracle, budget: int | None = None) -> tr.Trace:
    """Return a 1-minimal subsequence of ``trace`` for which ``oracle`` still holds.

    ``budget`` caps oracle calls. The default, quadratic in the op count, sits
    above the ddmin worst case.
    """
    n_ops = len(trace.ops)
    if budget is None:
        budget = n_ops * n_ops + 4 * n_ops + 8
    test = _Counter(oracle, budget)
    if tr.validate(trace) or not test(trace):
        raise ReductionError("nothing to reduce: oracle does not hold on the input trace")

    def attempt(ops: list) -> tr.Trace | None:
        cand = trace.with_ops(repair(ops))
        if cand.ops and not tr.validate(cand) and test(cand):
            return cand
        return None

    head = [trace.ops[0]]  # Connect
    current = list(trace.ops[1:])
    n = 2
    while len(current) >= 2:
        idx = list(range(len(current)))
        chunks = _split(idx, min(n, len(current)))
        reduced = False
        for chunk in chunks:
            keep = set(chunk)
            hit = attempt(head + [current[i] for i in idx if i in keep])
            if hit is not None:
                current, n, reduced = list(hit.ops[1:]), 2, True
                break
        if not reduced:
            for chunk in chunks:
                drop = set(chunk)
                hit = attempt(head + [current[i] for i in idx if i not in drop])
                if hit is not None:
                    current, n, reduced = list(hit.ops[1:]), max(n - 1, 2), True
                    break
        if not reduced:
            if n >= len(current):
                break
            n = min(2 * n, len(current))

    # single-removal sweep to a fixpoint: guarantees 1-minimality
    changed = True
    while changed:
        changed = False
        for i in range(len(current)):
            cand = trace.with_ops(head + current[:i] + current[i + 1 :])
            if not tr.validate(cand) and test(cand):
                current = list(cand.ops[1:])
                changed = True
                break
    return trace.with_ops(head + current)


def is_one_minimal(trace: tr.Trace, oracle: Oracle) -> bool:
    """True when deleting any single non-Connect op breaks validity or the oracle."""
    for i in range(1, len(trace.ops)):
        cand = trace.with_ops(trace.ops[:i] + trace.ops[i + 1 :])
        if not tr.validate(cand) and oracle(cand):
            return False
    return True


def discrepancy_oracle(
    catalog: DivergenceCatalog,
    modes: Iterable[str] = (CROSS_CONNECTOR, CROSS_PROPERTY),
    partner=None,
) -> Oracle:
    """Oracle that holds when the trace shows any discrepancy.

    The catalog and modes are fixed when the oracle is built. ``partner`` maps a
    trace's property assignment to the other assignments tried in cross-property
    mode; without one, cross-property mode is skipped.
    """
    modes = tuple(modes)
    reference = ReferenceBackend()
    divergent = make_divergent(catalog)

    def oracle(trace: tr.Trace) -> bool:
        if CROSS_CONNECTOR in modes:
            if compare(reference.execute(trace), divergent.execute(trace), CROSS_CONNECTOR):
                return True
        if CROSS_PROPERTY in modes and partner is not None:
            base = divergent.execute(trace)
            for other in partner(trace.property_assignment):
                if other == trace.property_assignment:
                    continue
                twin = tr.Trace(trace.id, trace.ops, other, trace.provenance)
                if compare(base, divergent.execute(twin), CROSS_PROPERTY):
                    return True
        return False

    return oracle
