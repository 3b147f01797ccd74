"""Restricted lock-free doubly-linked version lists.

Nodes are appended only at the head but may be removed from anywhere.
Each node gets a counter (one more than its predecessor) and a priority
derived from it; the priorities induce an implicit right-heavy tree whose
in-order traversal is the list.  A node is physically spliced out only
when its priority exceeds both neighbours' -- so two adjacent nodes are
never spliced concurrently -- or, when one neighbour is unmarked, through
a published splice descriptor that lets the neighbour's own removal help
complete the splice first.  Priorities strictly decrease along recursion,
which bounds every removal by the priority of its argument: remove is
wait-free.

Two build modes share this code path, selected by the memory context:

* baseline    -- exactly the algorithm above, nodes never reclaimed.
* reclaiming  -- after a node is spliced out, any of its links that point
  to a *descendant* in the implicit tree are overwritten with TOP, so a
  stalled traversal parked on a dead node can pin at most the O(log L)
  ancestor chain.  ``find`` then steps right whenever it reads a TOP left
  link, and ``try_append`` fails fast on a TOP predecessor link.

All shared accesses go through the context's runtime; all node/descriptor
lifetime bookkeeping goes through the context's memory manager.
"""

from .errors import ContractViolation
from .runtime import FINALIZED, MARKED, TBD, TOP, UNMARKED


class VNode:
    """Version-list node.  ``counter`` and ``priority`` are fixed when the
    node becomes active; ``status`` only ever moves unmarked -> marked ->
    finalized; ``ts`` transitions once from TBD and is then immutable."""

    __slots__ = (
        "value", "ts", "left", "right", "status", "counter", "priority",
        "left_desc", "right_desc", "refcount", "canary", "name",
    )

    _counted_fields_ = ("left", "right", "left_desc", "right_desc")

    def __init__(self):
        self.value = None
        self.ts = TBD
        self.left = None
        self.right = None
        self.status = UNMARKED
        self.counter = 0
        self.priority = 0
        self.left_desc = None
        self.right_desc = None
        self.refcount = 0
        self.canary = True
        self.name = "?"

    def __repr__(self):
        return f"<VNode {self.name} c={self.counter} ts={self.ts}>"


class Descriptor:
    """Immutable record of a pending splice of B out from between A and C."""

    __slots__ = ("A", "B", "C", "refcount", "canary", "name")

    _counted_fields_ = ("A", "B", "C")

    def __init__(self):
        self.A = None
        self.B = None
        self.C = None
        self.refcount = 0
        self.canary = True
        self.name = "?"

    def __repr__(self):
        return f"<Descriptor {self.name}>"


#: Distinguished descriptor marking a field as permanently closed to new
#: descriptors; never dereferenced for its A/B/C fields and never counted.
FROZEN = Descriptor()
FROZEN.name = "FROZEN"


def priority_of(counter: int) -> int:
    """Priority of the node with the given counter (counter >= 2).

    Powers of two get their exponent k (these form the spine of the
    implicit tree); any other counter in (2^k, 2^(k+1)) gets
    2k + 1 - (index of its lowest set bit).  Between any two nodes of
    equal priority there is always one with lower priority, and the tree
    depth of counter c is O(log c).
    """
    k = counter.bit_length() - 1
    if counter == (1 << k):
        return k
    return 2 * k + 1 - ((counter & -counter).bit_length() - 1)


class VersionList:
    """Head pointer plus the append/find operations anchored at it."""

    __slots__ = ("head", "name", "ctx")

    def __init__(self, ctx, name: str | None = None):
        self.ctx = ctx
        self.head = None
        self.name = name if name is not None else ctx.next_list_name()
        if ctx.trace_ops:
            ctx.rt.note("list", self.name)

    # -- reads --------------------------------------------------------------

    def get_head(self):
        """Current head node (or None).  In reclaiming mode the returned
        node is pinned; pair with ctx.mem.release_ref."""
        if self.ctx.trace_ops:
            self.ctx.rt.note("call:getHead", self)
            node = self.ctx.mem.acquire_field(self, "head")
            self.ctx.rt.note("ret:getHead", self, None, None,
                             None if node is None else node.name)
            return node
        return self.ctx.mem.acquire_field(self, "head")

    def find(self, start, ts):
        """First node at or left of *start* whose timestamp is <= ts, or
        None.  A TBD timestamp reads as "bigger than anything sought"
        (it will be fixed to a newer time than any active query).  In
        reclaiming mode a TOP left link redirects the step through the
        right link, climbing out of spliced-out territory; the result is
        pinned like ``get_head``'s.
        """
        ctx = self.ctx
        rt = ctx.rt
        mem = ctx.mem
        reclaiming = ctx.reclaiming
        trace = ctx.trace_ops
        if trace:
            rt.note("call:find", self, None, None if start is None else start.name, ts)
        checking = ctx.check_find_distinct
        up_sources = set() if checking else None
        fwd_dests = set() if checking else None
        cur = start
        mem.ref_inc(cur)
        while cur is not None:
            t = rt.read(cur, "ts")
            if t is not TBD and t <= ts:
                break
            nxt = mem.acquire_field(cur, "left")
            upward = False
            if reclaiming and nxt is TOP:
                nxt = mem.acquire_field(cur, "right")
                upward = True
            if trace:
                rt.note("find-up" if upward else "find-fwd", cur, None, None,
                        None if nxt is None else getattr(nxt, "name", nxt))
            if checking:
                if upward:
                    if cur.name in up_sources:
                        raise ContractViolation(
                            f"find revisited upward source {cur.name}")
                    up_sources.add(cur.name)
                elif nxt is not None and nxt is not TOP:
                    if nxt.name in fwd_dests:
                        raise ContractViolation(
                            f"find revisited forward destination {nxt.name}")
                    fwd_dests.add(nxt.name)
            mem.release_ref(cur)
            cur = nxt
        if trace:
            rt.note("ret:find", self, None, None,
                    None if cur is None else cur.name)
        return cur

    # -- append ---------------------------------------------------------------

    def try_append(self, old_head, node) -> bool:
        """Install *node* as the new head if the head is still *old_head*.

        Fills in counter, priority, and the left link, helps complete a
        predecessor's half-done append, then swings the head.  Returns
        False (leaving the list unchanged apart from helping) if the head
        moved.
        """
        ctx = self.ctx
        rt = ctx.rt
        mem = ctx.mem
        if ctx.trace_ops:
            rt.note("call:tryAppend", self, None,
                    None if old_head is None else old_head.name, node.name)
        if old_head is not None:
            node.counter = old_head.counter + 1
            prev = mem.acquire_field(old_head, "left")
            if ctx.reclaiming and prev is TOP:
                # A TOP link means old_head was already spliced out, so the
                # head moved long ago and the append is doomed.
                if ctx.trace_ops:
                    rt.note("ret:tryAppend", self, None, None, False)
                return False
            if prev is not None:
                mem.cas_field(prev, "right", None, old_head)
            mem.release_ref(prev)
        else:
            node.counter = 2
        node.priority = priority_of(node.counter)
        mem.init_link(node, "left", old_head)
        if mem.cas_field(self, "head", old_head, node):
            if ctx.trace_ops:
                rt.note("node-active", node, self.name,
                        (node.counter, node.priority),
                        None if old_head is None else old_head.name)
            if old_head is not None:
                mem.cas_field(old_head, "right", None, node)
            ctx.appends.add()
            if ctx.trace_ops:
                rt.note("ret:tryAppend", self, None, None, True)
            return True
        if ctx.trace_ops:
            rt.note("ret:tryAppend", self, None, None, False)
        return False

    # -- teardown ---------------------------------------------------------------

    def dismantle(self):
        """Retire a list nobody appends to or reads any more: detach the
        head (keeping every node reachable *from* the head protocol-wise)
        and remove it."""
        ctx = self.ctx
        node = ctx.mem.acquire_field(self, "head")
        if node is None:
            return
        ctx.mem.write_known(self, "head", node, None)
        remove(ctx, node)
        ctx.mem.release_ref(node)


# -- removal (node-centric; a node's list is irrelevant once appended) --------


def remove(ctx, node):
    """Remove a previously appended node.

    Marks the node, permanently freezes both of its descriptor fields
    (helping any installed descriptor first; the second freeze attempt on
    a field always succeeds), then splices recursively.  Total work is
    O(priority of *node*): wait-free.

    The caller's reference may be uncounted (the tracker hands nodes back
    raw); pinning it here is sound because a node that has not been
    removed is still linked, and nothing can splice it out before the
    mark below.  Once marked and frozen, helpers may finalize and reclaim
    it at any moment, so the pin covers the whole call.
    """
    rt = ctx.rt
    mem = ctx.mem
    if ctx.trace_ops:
        rt.note("call:remove", node, None, None, node.counter)
    ctx.removes.add()
    mem.ref_inc(node)
    rt.write(node, "status", MARKED)
    for field in ("left_desc", "right_desc"):
        for _ in range(2):
            desc = mem.acquire_field(node, field)
            _help(ctx, desc)
            mem.cas_field(node, field, desc, FROZEN)
            mem.release_ref(desc)
    mem.ref_inc(node)  # consumed by the splice loop
    _remove_rec(ctx, node)
    if ctx.trace_ops:
        rt.note("ret:remove", node, None, None, None)
    mem.release_ref(node)


def mark_and_freeze(ctx, node):
    """First half of ``remove``, exposed so tests can park a process
    between freezing and splicing.  Returns holding a pin on the node;
    ``finish_remove`` consumes it."""
    rt = ctx.rt
    mem = ctx.mem
    ctx.removes.add()
    mem.ref_inc(node)
    rt.write(node, "status", MARKED)
    for field in ("left_desc", "right_desc"):
        for _ in range(2):
            desc = mem.acquire_field(node, field)
            _help(ctx, desc)
            mem.cas_field(node, field, desc, FROZEN)
            mem.release_ref(desc)


def finish_remove(ctx, node):
    """Second half of ``remove``; pairs with ``mark_and_freeze`` and
    releases its pin."""
    mem = ctx.mem
    mem.ref_inc(node)
    _remove_rec(ctx, node)
    mem.release_ref(node)


def valid_and_frozen(ctx, node) -> bool:
    # right_desc is frozen second, so checking it alone suffices.
    if node is None:
        return False
    return ctx.rt.read(node, "right_desc") is FROZEN


def _help(ctx, desc):
    if desc is not None and desc is not FROZEN:
        splice(ctx, desc.A, desc.B, desc.C, helping=True)


def _remove_rec(ctx, node):
    """Splice *node* and walk up the implicit tree while this process is
    the one responsible for the next ancestor.

    The recursion of the reference algorithm is a tail call, expressed
    here as a loop; each iteration owns one pin on its node and hands a
    pin to the next iteration's node before releasing its own.
    """
    rt = ctx.rt
    mem = ctx.mem
    depth = 0
    start_priority = node.priority
    while node is not None:
        depth += 1
        ctx.remove_rec_calls.add()
        a_node = mem.acquire_field(node, "left")
        c_node = mem.acquire_field(node, "right")
        nxt = None
        if rt.read(node, "status") != FINALIZED:
            a = a_node.priority if (a_node is not None and a_node is not TOP) else 0
            c = c_node.priority if (c_node is not None and c_node is not TOP) else 0
            b = node.priority
            if ctx.debug and ((a_node is TOP) or (c_node is TOP)):
                # TOP can only be read off an already finalized node.
                raise ContractViolation(f"unfinalized {node.name} had a TOP link")
            if ctx.trace_ops:
                rt.note("rr", node, None, (a, b, c), None)
            if ctx.debug and (a == b or b == c):
                raise ContractViolation(
                    f"priority tie compared at {node.name}: ({a}, {b}, {c})"
                )
            if a < b > c:
                if splice(ctx, a_node, node, c_node):
                    if valid_and_frozen(ctx, a_node):
                        if valid_and_frozen(ctx, c_node) and c > a:
                            nxt = c_node
                        else:
                            nxt = a_node
                    elif valid_and_frozen(ctx, c_node):
                        if valid_and_frozen(ctx, a_node) and a > c:
                            nxt = a_node
                        else:
                            nxt = c_node
            elif a > b > c:
                if _splice_unmarked_left(ctx, a_node, node, c_node) and \
                        valid_and_frozen(ctx, c_node):
                    nxt = c_node
            elif a < b < c:
                if _splice_unmarked_right(ctx, a_node, node, c_node) and \
                        valid_and_frozen(ctx, a_node):
                    nxt = a_node
        if nxt is not None:
            mem.ref_inc(nxt)
        mem.release_ref(a_node)
        mem.release_ref(c_node)
        mem.release_ref(node)
        node = nxt
    if ctx.check_depth and depth > start_priority:
        raise ContractViolation(
            f"removal chain depth {depth} exceeded priority {start_priority}"
        )


def splice(ctx, a_node, node, c_node, helping: bool = False) -> bool:
    """Physically unlink *node* from between its (frozen-time) neighbours.

    Fails without touching anything if a_node no longer points at node
    (either the splice already happened, or a pending splice of the left
    neighbour will take node with it).  Exactly one splice of a given
    node wins the finalize CAS; the winner also redirects both neighbour
    links and, in reclaiming mode, caps the dead node's descendant links
    with TOP.
    """
    rt = ctx.rt
    mem = ctx.mem
    kind = "splice.help" if helping else "splice"
    if ctx.trace_ops:
        rt.note("call:" + kind, node.name, None,
                None if a_node is None else a_node.name,
                None if c_node is None else c_node.name)
    if a_node is not None and rt.read(a_node, "right") != node:
        if ctx.trace_ops:
            rt.note("ret:" + kind, node, None, None, False)
        return False
    result = rt.cas(node, "status", MARKED, FINALIZED)
    if c_node is not None:
        mem.cas_field(c_node, "left", node, a_node)
    if a_node is not None:
        mem.cas_field(a_node, "right", node, c_node)
    if result and ctx.reclaiming:
        # Cap links into the implicit subtree below the dead node; only
        # ancestor links may survive.  A neighbour with higher priority is
        # a descendant.  nodes' own links cannot change after the splice
        # triple exists, so plain writes are race-free here.
        if a_node is not None and a_node is not TOP and \
                a_node.priority > node.priority:
            mem.write_known(node, "left", a_node, TOP)
        if c_node is not None and c_node is not TOP and \
                c_node.priority > node.priority:
            mem.write_known(node, "right", c_node, TOP)
    if ctx.trace_ops:
        rt.note("ret:" + kind, node, None, None, result)
    return result


def _splice_unmarked_left(ctx, a_node, node, c_node) -> bool:
    """Splice *node* whose left neighbour outranks it but is unmarked, by
    publishing a descriptor in that neighbour; the neighbour's own removal
    will help complete this splice before its own."""
    rt = ctx.rt
    mem = ctx.mem
    if ctx.trace_ops:
        rt.note("call:sul", node.name, None, a_node.name,
                None if c_node is None else c_node.name)
    old_desc = mem.acquire_field(a_node, "right_desc")
    try:
        if rt.read(a_node, "status") != UNMARKED:
            return _noted(ctx, "ret:sul", node, False)
        _help(ctx, old_desc)
        if rt.read(a_node, "right") != node:
            return _noted(ctx, "ret:sul", node, False)
        new_desc = mem.alloc_descriptor(a_node, node, c_node)
        if ctx.trace_ops:
            rt.note("desc", new_desc.name, None,
                    (a_node.name, node.name,
                     None if c_node is None else c_node.name), None)
        if mem.cas_field(a_node, "right_desc", old_desc, new_desc):
            _help(ctx, new_desc)
            mem.release_ref(new_desc)
            return _noted(ctx, "ret:sul", node, True)
        mem.release_ref(new_desc)
        return _noted(ctx, "ret:sul", node, False)
    finally:
        mem.release_ref(old_desc)


def _splice_unmarked_right(ctx, a_node, node, c_node) -> bool:
    """Mirror image of the left variant, with the extended neighbour test
    because splices update the left link before the right one."""
    rt = ctx.rt
    mem = ctx.mem
    if ctx.trace_ops:
        rt.note("call:sur", node.name, None,
                None if a_node is None else a_node.name, c_node.name)
    old_desc = mem.acquire_field(c_node, "left_desc")
    try:
        if rt.read(c_node, "status") != UNMARKED:
            return _noted(ctx, "ret:sur", node, False)
        _help(ctx, old_desc)
        if rt.read(c_node, "left") != node or (
                a_node is not None and rt.read(a_node, "right") != node):
            return _noted(ctx, "ret:sur", node, False)
        new_desc = mem.alloc_descriptor(a_node, node, c_node)
        if ctx.trace_ops:
            rt.note("desc", new_desc.name, None,
                    (None if a_node is None else a_node.name, node.name,
                     c_node.name), None)
        if mem.cas_field(c_node, "left_desc", old_desc, new_desc):
            _help(ctx, new_desc)
            mem.release_ref(new_desc)
            return _noted(ctx, "ret:sur", node, True)
        mem.release_ref(new_desc)
        return _noted(ctx, "ret:sur", node, False)
    finally:
        mem.release_ref(old_desc)


def _noted(ctx, kind, node, result):
    if ctx.trace_ops:
        ctx.rt.note(kind, node, None, None, result)
    return result


def lr_reachable_count(lists) -> int:
    """Number of distinct nodes reachable from the given lists' heads by
    any mix of left/right links.  Quiescent use only."""
    seen = set()
    stack = []
    for lst in lists:
        head = lst.head
        if head is not None and id(head) not in seen:
            seen.add(id(head))
            stack.append(head)
    while stack:
        node = stack.pop()
        for link in (node.left, node.right):
            if link is None or link is TOP:
                continue
            if id(link) not in seen:
                seen.add(id(link))
                stack.append(link)
    return len(seen)
