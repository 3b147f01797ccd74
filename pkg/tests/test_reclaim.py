"""Reference-counting layer: handle semantics, count algebra, canaries."""

import pytest

from mvgc import (ContractViolation, ListContext, ThreadedRuntime,
                  VersionList, acquire)
from mvgc import vlist as V


def make_ctx():
    return ListContext(ThreadedRuntime(), reclaiming=True, debug=True)


def one_node_list(ctx):
    lst = VersionList(ctx, "L1")
    node = ctx.mem.alloc_node("a")
    node.ts = 1
    assert lst.try_append(None, node)
    ctx.mem.release_ref(node)
    return lst, node


def test_handle_keeps_node_alive_across_removal():
    ctx = make_ctx()
    lst, a = one_node_list(ctx)
    b = ctx.mem.alloc_node("b")
    b.ts = 2
    assert lst.try_append(a, b)
    ctx.mem.release_ref(b)
    c = ctx.mem.alloc_node("c")
    c.ts = 3
    assert lst.try_append(b, c)
    ctx.mem.release_ref(c)

    head_handle = acquire(ctx, lst, "head")
    assert head_handle.target is c
    with head_handle:
        pass  # context-manager form releases automatically

    pinned = acquire(ctx, a, "right")  # pins b (the middle node)
    assert pinned.target is b
    V.remove(ctx, b)  # direct splice: b is unlinked but we still hold it
    assert a.right is c and c.left is a
    assert b.canary
    assert b.value == "b"
    pinned.release()  # last reference: destroyed now, exactly once
    assert not b.canary
    assert ctx.ledger.live_vnodes() == 2


def test_release_twice_is_contract_violation():
    ctx = make_ctx()
    lst, node = one_node_list(ctx)
    handle = acquire(ctx, lst, "head")
    handle.release()
    with pytest.raises(ContractViolation):
        handle.release()


def test_refcount_at_least_number_of_handles():
    ctx = make_ctx()
    lst, node = one_node_list(ctx)
    handles = [acquire(ctx, lst, "head") for _ in range(5)]
    assert node.refcount >= 5
    assert ctx.ledger.live_handles.value() == 5
    for handle in handles:
        handle.release()
    assert ctx.ledger.live_handles.value() == 0


def test_counted_cas_success_moves_counts():
    ctx = make_ctx()
    mem = ctx.mem
    x = mem.alloc_node("x")
    y = mem.alloc_node("y")
    holder = mem.alloc_node("holder")
    mem.init_link(holder, "left", x)
    rx, ry = x.refcount, y.refcount
    assert mem.cas_field(holder, "left", x, y)
    assert x.refcount == rx - 1
    assert y.refcount == ry + 1


def test_counted_cas_failure_restores_counts():
    ctx = make_ctx()
    mem = ctx.mem
    x = mem.alloc_node("x")
    y = mem.alloc_node("y")
    z = mem.alloc_node("z")
    holder = mem.alloc_node("holder")
    mem.init_link(holder, "left", x)
    ry = y.refcount
    assert not mem.cas_field(holder, "left", z, y)
    assert holder.left is x
    assert y.refcount == ry


def test_destruction_happens_exactly_once_at_zero():
    ctx = make_ctx()
    mem = ctx.mem
    node = mem.alloc_node("n")  # one pin from allocation
    assert node.canary
    mem.release_ref(node)
    assert not node.canary
    assert ctx.ledger.live_vnodes() == 0


def test_canary_trips_on_use_after_destroy():
    ctx = make_ctx()
    mem = ctx.mem
    node = mem.alloc_node("n")
    mem.release_ref(node)
    with pytest.raises(ContractViolation):
        mem.ref_inc(node)


def test_pool_recycles_destroyed_objects():
    ctx = make_ctx()
    mem = ctx.mem
    node = mem.alloc_node("n")
    mem.release_ref(node)
    again = mem.alloc_node("m")
    assert again is node  # same identity, fresh state
    assert again.canary
    assert again.value == "m"


def test_descriptor_counts_cascade():
    ctx = make_ctx()
    mem = ctx.mem
    a = mem.alloc_node("a")
    b = mem.alloc_node("b")
    c = mem.alloc_node("c")
    desc = mem.alloc_descriptor(a, b, c)
    base = b.refcount
    mem.release_ref(desc)  # descriptor dies, dropping its field pins
    assert not desc.canary
    assert b.refcount == base - 1
    assert ctx.ledger.live_descriptors() == 0


def test_ledger_snapshot_fields():
    ctx = make_ctx()
    mem = ctx.mem
    nodes = [mem.alloc_node(i) for i in range(3)]
    ctx.ledger.update_high_water()
    snap = ctx.ledger.snapshot()
    assert snap["live_vnodes"] == 3
    assert snap["vnodes_high_water"] == 3
    for node in nodes:
        mem.release_ref(node)
    assert ctx.ledger.snapshot()["live_vnodes"] == 0
