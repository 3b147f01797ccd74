"""Sequential oracles and an exact linearizability check.

Operations are recovered from a trace's call/ret note pairs (top-level
only; the structures emit notes for their internals too, which are
filtered out by nesting depth).  The checker searches all orders that
respect real-time precedence, threading a hashable oracle state through,
and accepts when some order explains every completed operation's observed
result.  Exponential in the worst case, which is fine at harness scale;
memoization on (linearized-set, state) prunes the common blowups.

An operation that never returned (possible in truncated schedules) is
optional: it may be linearized with any result the oracle allows, or left
out entirely.
"""

from dataclasses import dataclass

PENDING = object()  # result of an operation whose return was never observed


@dataclass
class Op:
    pid: object
    kind: str
    obj: object
    field: object
    old: object
    new: object
    result: object
    call: int
    ret: int

    def args(self):
        return (self.obj, self.field, self.old, self.new)


_INF = float("inf")


def extract_ops(trace, kinds=None) -> list:
    """Top-level call/ret pairs from a trace, as Op records."""
    ops = []
    depth = {}
    open_ops = {}
    for ev in trace:
        seq, pid, kind, obj, field, old, new, ok = ev
        if kind.startswith("call:"):
            d = depth.get(pid, 0)
            depth[pid] = d + 1
            if d == 0:
                name = kind[5:]
                op = Op(pid, name, obj, field, old, new, PENDING, seq, _INF)
                open_ops[pid] = op
                if kinds is None or name in kinds:
                    ops.append(op)
        elif kind.startswith("ret:"):
            d = depth.get(pid, 1)
            depth[pid] = d - 1
            if d == 1:
                op = open_ops.pop(pid, None)
                if op is not None:
                    op.result = new
                    op.ret = seq
    return ops


def check_linearizable(ops, oracle) -> bool:
    """True iff some real-time-respecting order of *ops* is legal for
    *oracle*.  See the module docstring for pending-operation handling."""
    ops = sorted(ops, key=lambda o: o.call)
    n = len(ops)
    full_mask = (1 << n) - 1
    required = 0
    for i, op in enumerate(ops):
        if op.result is not PENDING:
            required |= 1 << i
    seen = set()

    def search(mask, state):
        if mask & required == required:
            return True
        key = (mask, state)
        if key in seen:
            return False
        seen.add(key)
        min_ret = _INF
        for i in range(n):
            if not mask & (1 << i):
                min_ret = min(min_ret, ops[i].ret)
        for i in range(n):
            bit = 1 << i
            if mask & bit:
                continue
            op = ops[i]
            if op.call > min_ret:
                continue
            for nxt in oracle.apply(state, op):
                if search(mask | bit, nxt):
                    return True
        return False

    return search(0, oracle.initial())


class ChainOracle:
    """Sequential append-at-head list with timestamped nodes.

    ``ts_map`` gives each node name its (eventual) timestamp; finds compare
    against it.  Removals do not affect find results here: under the list's
    usage contract a find never seeks a removed node's interval, so the
    positional answer is the correct sequential one.
    """

    def __init__(self, initial_chain, ts_map):
        self._initial = tuple(initial_chain)
        self.ts_map = dict(ts_map)

    def initial(self):
        return (self._initial, frozenset())

    def apply(self, state, op):
        chain, removed = state
        head = chain[-1] if chain else None
        kind = op.kind
        if kind == "tryAppend":
            expected = head == op.old
            outcomes = []
            if op.result is PENDING or op.result == expected:
                if expected:
                    outcomes.append((chain + (op.new,), removed))
                else:
                    outcomes.append(state)
            return outcomes
        if kind == "remove":
            if op.obj not in chain or op.obj in removed:
                return []
            return [(chain, removed | {op.obj})]
        if kind == "find":
            start, ts = op.old, op.new
            try:
                idx = chain.index(start)
            except ValueError:
                return []
            answer = None
            for name in reversed(chain[: idx + 1]):
                if self.ts_map[name] <= ts:
                    answer = name
                    break
            if op.result is PENDING or op.result == answer:
                return [state]
            return []
        if kind == "getHead":
            if op.result is PENDING or op.result == head:
                return [state]
            return []
        raise ValueError(f"chain oracle got {kind}")


class TrackerOracle:
    """Range tracking per its abstract definition: a multiset of active
    announcements and a set of deprecated (payload, interval) triples.
    A deprecate may return any subset of deprecated objects whose
    intervals miss every active announcement; returned objects leave the
    set, which enforces exactly-once across the whole history.
    """

    def __init__(self, source_value=0, announced=()):
        self._source = source_value
        self._announced = frozenset(announced)  # (slot, value) pairs

    def initial(self):
        return (self._source, self._announced, frozenset())

    def apply(self, state, op):
        source, announced, live = state
        kind = op.kind
        if kind == "setsrc":
            value = op.new
            if value < source:
                return []
            return [(value, announced, live)]
        if kind == "announce":
            if op.result is not PENDING and op.result != source:
                return []
            return [(source, announced | {(op.obj, source)}, live)]
        if kind == "unannounce":
            entries = [e for e in announced if e[0] == op.obj]
            if not entries:
                return []
            return [(source, announced - {entries[0]}, live)]
        if kind == "deprecate":
            payload = op.obj
            low, high = op.old
            live2 = live | {(payload, low, high)}
            returned = op.result
            if returned is PENDING:
                returned = ()
            values = {v for _, v in announced}
            by_payload = {p: (lo, hi) for p, lo, hi in live2}
            taken = set()
            for p in returned:
                if p not in by_payload or p in taken:
                    return []
                lo, hi = by_payload[p]
                if any(lo <= v < hi for v in values):
                    return []
                taken.add(p)
            live2 = frozenset(
                (p, lo, hi) for p, lo, hi in live2 if p not in taken
            )
            return [(source, announced, live2)]
        raise ValueError(f"tracker oracle got {kind}")


class SnapshotOracle:
    """Atomic-register semantics for versioned cells plus composite
    queries that read several cells in one indivisible step."""

    def __init__(self, initial_values: dict):
        self._names = tuple(sorted(initial_values))
        self._initial = tuple(initial_values[name] for name in self._names)

    def initial(self):
        return self._initial

    def _index(self, name):
        return self._names.index(name)

    def apply(self, state, op):
        kind = op.kind
        if kind == "vcas":
            idx = self._index(op.obj)
            current = state[idx]
            expected = current == op.old
            if op.result is not PENDING and op.result != expected:
                return []
            if expected and op.new != op.old:
                nxt = list(state)
                nxt[idx] = op.new
                return [tuple(nxt)]
            return [state]
        if kind == "vread":
            idx = self._index(op.obj)
            if op.result is not PENDING and op.result != state[idx]:
                return []
            return [state]
        if kind == "query":
            keys = op.old
            answer = tuple(state[self._index(k)] for k in keys)
            if op.result is not PENDING and tuple(op.result) != answer:
                return []
            return [state]
        if kind == "readversion" or kind == "takesnapshot":
            # Raw snapshot primitives appear only inside composite queries
            # in harness scenarios; top-level occurrences are not checked.
            return [state]
        raise ValueError(f"snapshot oracle got {kind}")
