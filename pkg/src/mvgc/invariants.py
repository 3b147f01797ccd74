"""Structural invariant checking over event traces.

The simulation runtime records every shared read/write/CAS (including
failed CAS attempts) plus operation-level notes.  This module replays a
trace through a small state machine and checks the list invariants on
every mutating event:

* status discipline  -- unmarked -> marked -> finalized, absorbing;
* link monotonicity  -- a link only ever jumps further along append order;
* head discipline    -- successive heads have counters increasing by one;
* no-overlap         -- no splice triples (W,X,Y) and (X,Y,Z) ever coexist;
* no-skip            -- a finalized node's links never skip an unfinalized
                        node;
* freeze discipline  -- no descriptor lands in a field after the first
                        freeze attempt on it;
* top discipline     -- TOP only on finalized nodes, never on both links;
* splice uniqueness  -- at most one splice-family call per node succeeds;
* tie discipline     -- priority ties are never compared by removal;
* find distinctness  -- upward sources / forward destinations distinct
                        within one find;
* quiescent chain    -- at the end of a completed run, the unfinalized
                        active nodes form a mutually linked chain ending
                        at the head.

The first violation stops the replay; the report carries the invariant
id, the offending event index (== minimal failing prefix length), and a
message.
"""

from dataclasses import dataclass


@dataclass
class InvariantReport:
    ok: bool
    invariant: str | None = None
    seq: int | None = None
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "pass": self.ok,
            "invariant": self.invariant,
            "seq": self.seq,
            "message": self.message,
        }


class _Node:
    __slots__ = ("name", "lst", "counter", "priority", "status",
                 "left", "right", "freeze_attempt")

    def __init__(self, name, lst, counter, priority, left):
        self.name = name
        self.lst = lst
        self.counter = counter
        self.priority = priority
        self.status = 0
        self.left = left
        self.right = None
        self.freeze_attempt = {"left_desc": False, "right_desc": False}


class _Violation(Exception):
    def __init__(self, invariant, message):
        self.invariant = invariant
        self.message = message


class TraceChecker:
    def __init__(self):
        self.nodes = {}            # name -> _Node
        self.lists = {}            # list name -> head node name or None
        self.by_list = {}          # list name -> [node names in counter order]
        self.desc_triples = {}     # descriptor name -> (A, B, C) names
        self.triples_fm = set()    # (first, middle) of recorded splice triples
        self.triples_ml = set()    # (middle, last)
        self.splice_winners = {}   # node name -> count of successful splices
        self.find_state = {}       # pid -> (set of up sources, set of fwd dests)

    # -- helpers ---------------------------------------------------------------

    def _node(self, name) -> "_Node | None":
        return self.nodes.get(name)

    def _register_triple(self, a, b, c):
        if a is not None and (a, b) in self.triples_ml:
            raise _Violation(
                "no-overlap", f"splice triples (*,{a},{b}) and ({a},{b},{c})")
        if c is not None and (b, c) in self.triples_fm:
            raise _Violation(
                "no-overlap", f"splice triples ({a},{b},{c}) and ({b},{c},*)")
        self.triples_fm.add((a, b))
        self.triples_ml.add((b, c))

    def _check_no_skip(self, lst):
        order = self.by_list.get(lst, [])
        nodes = [self.nodes[n] for n in order]
        for i, x in enumerate(nodes):
            if x.status != 2:
                continue
            for field in ("right", "left"):
                target = getattr(x, field)
                if target == "TOP":
                    continue
                if target is None:
                    lo, hi = (i + 1, len(nodes)) if field == "right" else (0, i)
                else:
                    t = self.nodes.get(target)
                    if t is None or t.lst != lst:
                        continue
                    j = t.counter - 2
                    lo, hi = (i + 1, j) if field == "right" else (j + 1, i)
                for k in range(lo, hi):
                    if nodes[k].status != 2:
                        raise _Violation(
                            "no-skip",
                            f"finalized {x.name}.{field} -> {target} skips "
                            f"unfinalized {nodes[k].name}",
                        )

    # -- event handlers -----------------------------------------------------------

    def _on_node_active(self, ev):
        _, _, _, name, lst, meta, left, _ = ev
        counter, priority = meta
        node = _Node(name, lst, counter, priority, left)
        self.nodes[name] = node
        order = self.by_list.setdefault(lst, [])
        if counter != len(order) + 2:
            raise _Violation(
                "head-order", f"{name} activated with counter {counter}, "
                f"expected {len(order) + 2}")
        order.append(name)

    def _on_head_change(self, ev, lst, old, new, via_cas):
        if new is None:
            self.lists[lst] = None
            return
        if via_cas:
            # node-active is noted right after the head CAS, so the new
            # node may not be registered yet; its activation event checks
            # the counter succession instead.
            new_node = self._node(new)
            old_node = self._node(old) if old is not None else None
            old_counter = old_node.counter if old_node is not None else 1
            if new_node is not None and new_node.counter != old_counter + 1:
                raise _Violation(
                    "head-order",
                    f"head {old}->{new} counter jump "
                    f"{old_counter}->{new_node.counter}")
        self.lists[lst] = new

    def _on_status(self, ev, node_name, old, new, kind, ok):
        node = self._node(node_name)
        if node is None:
            return
        if kind == "write":
            if new == 1:
                if node.status == 2:
                    raise _Violation(
                        "status", f"{node_name} marked after finalized")
                node.status = max(node.status, 1)
            else:
                raise _Violation("status", f"write of status {new}")
        elif ok:
            if not (old == 1 and new == 2):
                raise _Violation(
                    "status", f"{node_name} status CAS {old}->{new}")
            if node.status == 2:
                raise _Violation(
                    "status", f"{node_name} finalized twice")
            node.status = 2

    def _on_link(self, ev, node_name, field, old, new, kind, ok):
        node = self._node(node_name)
        if node is None:
            return
        if kind == "cas" and not ok:
            return
        if new == "TOP":
            if node.status != 2:
                raise _Violation(
                    "top", f"TOP written to unfinalized {node_name}.{field}")
            other = node.right if field == "left" else node.left
            if other == "TOP":
                raise _Violation(
                    "top", f"both links of {node_name} are TOP")
            setattr(node, field, "TOP")
            self._check_no_skip(node.lst)
            return
        old_node = self._node(old) if isinstance(old, str) else None
        new_node = self._node(new) if isinstance(new, str) else None
        mine = node.counter
        if field == "right":
            if old is None and new_node is not None:
                if not mine < new_node.counter:
                    raise _Violation(
                        "link-order",
                        f"{node_name}.right set to older {new}")
            elif old_node is not None and new_node is not None:
                if not (mine < old_node.counter < new_node.counter):
                    raise _Violation(
                        "link-order",
                        f"{node_name}.right {old}->{new} not monotone")
        elif field == "left":
            if old_node is not None and new_node is not None:
                if not (new_node.counter < old_node.counter < mine):
                    raise _Violation(
                        "link-order",
                        f"{node_name}.left {old}->{new} not monotone")
        setattr(node, field, new)
        self._check_no_skip(node.lst)

    def _on_desc_field(self, ev, node_name, field, old, new, kind, ok):
        node = self._node(node_name)
        if node is None:
            return
        attempted_freeze = new == "FROZEN"
        if kind == "cas" and ok and not attempted_freeze:
            if node.freeze_attempt[field]:
                raise _Violation(
                    "freeze",
                    f"descriptor {new} installed in {node_name}.{field} "
                    "after a freeze attempt")
            triple = self.desc_triples.get(new)
            if triple is not None:
                self._register_triple(*triple)
        if attempted_freeze:
            node.freeze_attempt[field] = True

    # -- main entry ---------------------------------------------------------------

    def feed(self, ev):
        seq, pid, kind, obj, field, old, new, ok = ev
        if kind == "list":
            self.lists.setdefault(obj, None)
            return
        if kind == "node-active":
            self._on_node_active(ev)
            return
        if kind == "desc":
            self.desc_triples[obj] = old
            return
        if kind in ("call:splice", "call:splice.help"):
            self._register_triple(old, obj, new)
            return
        if kind in ("ret:splice", "ret:sul", "ret:sur"):
            if new is True:
                wins = self.splice_winners.get(obj, 0) + 1
                self.splice_winners[obj] = wins
                if wins > 1:
                    raise _Violation(
                        "splice-unique",
                        f"{wins} splice-family successes for {obj}")
            return
        if kind == "rr":
            a, b, c = old
            if a == b or b == c:
                raise _Violation(
                    "tie-compare", f"priority tie compared at {obj}: {old}")
            return
        if kind == "call:find":
            self.find_state[pid] = (set(), set())
            return
        if kind == "ret:find":
            self.find_state.pop(pid, None)
            return
        if kind in ("find-up", "find-fwd"):
            state = self.find_state.get(pid)
            if state is None:
                return
            ups, fwds = state
            if kind == "find-up":
                if obj in ups:
                    raise _Violation(
                        "find-distinct", f"upward source {obj} revisited")
                ups.add(obj)
            else:
                if new is not None and new != "TOP":
                    if new in fwds:
                        raise _Violation(
                            "find-distinct",
                            f"forward destination {new} revisited")
                    fwds.add(new)
            return
        if kind not in ("read", "write", "cas"):
            return
        if field == "head":
            # Only version-list heads; the pool queue has a head too.
            if obj in self.lists and (kind == "write"
                                      or (kind == "cas" and ok)):
                self._on_head_change(ev, obj, old, new, kind == "cas")
            return
        if field == "status":
            if kind in ("write", "cas"):
                self._on_status(ev, obj, old, new, kind, ok)
            return
        if field in ("left", "right") and kind in ("write", "cas"):
            self._on_link(ev, obj, field, old, new, kind, ok)
            return
        if field in ("left_desc", "right_desc") and kind == "cas":
            self._on_desc_field(ev, obj, field, old, new, kind, ok)
            return

    def final_chain_check(self):
        for lst, order in self.by_list.items():
            live = [self.nodes[n] for n in order if self.nodes[n].status != 2]
            head = self.lists.get(lst)
            if not live:
                if head is not None:
                    raise _Violation(
                        "chain", f"{lst} head {head} but no live nodes")
                continue
            if head != live[-1].name:
                raise _Violation(
                    "chain", f"{lst} head {head} is not newest live node "
                    f"{live[-1].name}")
            if live[0].left is not None:
                raise _Violation(
                    "chain", f"{lst} leftmost {live[0].name}.left = "
                    f"{live[0].left}")
            if live[-1].right is not None:
                raise _Violation(
                    "chain", f"{lst} head {live[-1].name}.right = "
                    f"{live[-1].right}")
            for a, b in zip(live, live[1:]):
                if a.right != b.name or b.left != a.name:
                    raise _Violation(
                        "chain", f"{lst}: {a.name} and {b.name} not mutually "
                        "linked")


def check_invariants(trace, *, quiescent: bool = True) -> InvariantReport:
    """Replay *trace* through every structural check.

    ``quiescent`` additionally runs the end-state chain check, which is
    only meaningful when the trace comes from a run whose operations all
    completed."""
    checker = TraceChecker()
    for ev in trace:
        try:
            checker.feed(ev)
        except _Violation as v:
            return InvariantReport(False, v.invariant, ev[0], v.message)
    if quiescent:
        try:
            checker.final_chain_check()
        except _Violation as v:
            return InvariantReport(False, v.invariant, len(trace), v.message)
    return InvariantReport(True)
