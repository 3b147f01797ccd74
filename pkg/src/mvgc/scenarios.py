"""Named concurrent scenarios for exploration and replay.

Each builder returns a fresh ScenarioInstance on every call: a simulation
runtime, per-process scripts, the matching sequential oracle, and the
operation kinds the linearizability check should look at.  Setup (building
chains, creating cells) runs on the driving thread before scheduling
starts, so scripts race only over the interesting part.

All list scenarios honor the usage contract: a node is removed only after
its successor is appended, no find seeks a removed node's interval, and
nothing touches a list after its final node's removal.
"""

from functools import partial

from . import vlist
from .harness import Scenario, ScenarioInstance
from .oracles import ChainOracle, SnapshotOracle, TrackerOracle
from .reclaim import ListContext
from .runtime import SharedInt, SimRuntime
from .store import VersionedStore
from .tracker import RangeTracker, TrackerConfig
from .vlist import VersionList


def _chain(ctx, lst, timestamps):
    """Append one node per timestamp (pre-stamped), oldest first."""
    nodes = []
    prev = None
    for i, ts in enumerate(timestamps):
        node = ctx.mem.alloc_node(f"v{i}")
        node.ts = ts
        if not lst.try_append(prev, node):
            raise AssertionError("setup append failed")
        ctx.mem.release_ref(node)
        nodes.append(node)
        prev = node
    return nodes


def _list_instance(mode, timestamps, make_scripts):
    rt = SimRuntime()
    ctx = ListContext(rt, reclaiming=(mode == "reclaiming"), debug=True,
                      check_find_distinct=(mode == "reclaiming"))
    lst = VersionList(ctx, "L1")
    nodes = _chain(ctx, lst, timestamps)
    ts_map = {n.name: n.ts for n in nodes}
    scripts, extra = make_scripts(ctx, lst, nodes, ts_map)
    ts_map.update(extra)
    oracle = ChainOracle([n.name for n in nodes], ts_map)
    return ScenarioInstance(rt, scripts, oracle,
                            op_kinds={"tryAppend", "remove", "find", "getHead"})


def build_list_adjacent(mode):
    """Two processes remove adjacent mid-list nodes."""

    def scripts(ctx, lst, nodes, ts_map):
        return [
            lambda: vlist.remove(ctx, nodes[2]),
            lambda: vlist.remove(ctx, nodes[3]),
        ], {}

    return _list_instance(mode, [10, 20, 30, 40, 50], scripts)


def build_list_remove_append(mode):
    """A mid-list removal races an append at the head."""

    def scripts(ctx, lst, nodes, ts_map):
        fresh = ctx.mem.alloc_node("v-new")
        fresh.ts = 40
        head = nodes[-1]

        def appender():
            if lst.try_append(head, fresh):
                vlist.remove(ctx, head)
            ctx.mem.release_ref(fresh)

        return [
            lambda: vlist.remove(ctx, nodes[1]),
            appender,
        ], {fresh.name: 40}

    return _list_instance(mode, [10, 20, 30], scripts)


def build_list_remove_find(mode):
    """A traversal passes through a node that is being spliced out."""

    def scripts(ctx, lst, nodes, ts_map):
        head = nodes[-1]

        def finder():
            found = lst.find(head, 15)  # legal: 15 is not in [20, 30)
            ctx.mem.release_ref(found)
            found = lst.find(head, 35)
            ctx.mem.release_ref(found)

        return [
            lambda: vlist.remove(ctx, nodes[1]),
            finder,
        ], {}

    return _list_instance(mode, [10, 20, 30], scripts)


def build_list_three(mode):
    """Two removals (one pair adjacent) race an append, three processes."""

    def scripts(ctx, lst, nodes, ts_map):
        fresh = ctx.mem.alloc_node("v-new")
        fresh.ts = 50
        head = nodes[-1]

        def appender():
            lst.try_append(head, fresh)
            ctx.mem.release_ref(fresh)

        return [
            lambda: vlist.remove(ctx, nodes[1]),
            lambda: vlist.remove(ctx, nodes[2]),
            appender,
        ], {fresh.name: 50}

    return _list_instance(mode, [10, 20, 30, 40], scripts)


def _store_instance(mode, ncells, nprocs, make_scripts):
    rt = SimRuntime()
    store = VersionedStore(nprocs, mode=mode, runtime=rt, debug=True,
                           batch_size=16)
    handles = [store.register_process() for _ in range(nprocs)]
    cells = [store.new_cell(100 * (i + 1)) for i in range(ncells)]
    scripts = make_scripts(rt, store, handles, cells)
    oracle = SnapshotOracle({c.name: 100 * (i + 1)
                             for i, c in enumerate(cells)})
    return ScenarioInstance(rt, scripts, oracle,
                            op_kinds={"vcas", "vread", "query"})


def _query_script(rt, store, handle, cells):
    def query():
        keys = tuple(c.name for c in cells)
        rt.note("call:query", None, None, keys, None)
        ts = store.take_snapshot(handle)
        values = tuple(c.read_version(ts) for c in cells)
        store.unreserve(handle)
        rt.note("ret:query", None, None, None, values)

    return query


def build_snapshot_query(mode):
    """One writer updates two cells in order; one snapshot query reads
    both.  The query must never see the second update without the first."""

    def scripts(rt, store, handles, cells):
        c1, c2 = cells

        def writer():
            c1.v_cas(handles[0], 100, 101)
            c2.v_cas(handles[0], 200, 201)

        return [writer, _query_script(rt, store, handles[1], cells)]

    return _store_instance(mode, 2, 2, scripts)


def build_snapshot_two_writers(mode):
    """Two conflicting writers on one cell, then a read."""

    def scripts(rt, store, handles, cells):
        (c1,) = cells

        def w0():
            c1.v_cas(handles[0], 100, 111)

        def w1():
            c1.v_cas(handles[1], 100, 122)
            c1.v_read()

        return [w0, w1]

    return _store_instance(mode, 1, 2, scripts)


def build_snapshot_three(mode):
    """Two writers on distinct cells race a snapshot query (3 processes)."""

    def scripts(rt, store, handles, cells):
        c1, c2 = cells

        def w0():
            c1.v_cas(handles[0], 100, 101)

        def w1():
            c2.v_cas(handles[1], 200, 202)

        return [w0, w1, _query_script(rt, store, handles[2], cells)]

    return _store_instance(mode, 2, 3, scripts)


def build_tracker_announce_race():
    """An announce races the timestamp source moving forward; the
    announced slot must end up holding exactly the returned value."""
    rt = SimRuntime()
    tracker = RangeTracker(rt, TrackerConfig(2, batch_size=4), debug=True)
    h0 = tracker.register()
    h1 = tracker.register()
    source = SharedInt(5, "src")

    def announcer():
        value = tracker.announce(h0, source)
        if h0.slot.value != value:
            raise AssertionError("slot does not match announce result")
        tracker.unannounce(h0)

    def mover():
        rt.note("call:setsrc", None, None, None, 6)
        rt.write(source, "value", 6)
        rt.note("ret:setsrc", None, None, None, 6)

    return ScenarioInstance(
        rt, [announcer, mover], TrackerOracle(5),
        op_kinds={"announce", "unannounce", "setsrc", "deprecate"})


def build_tracker_flush_race():
    """A pinned announcement (taken in setup) while two processes flood
    deprecations through flush phases; objects whose intervals cover the
    announcement must never be returned."""
    rt = SimRuntime()
    tracker = RangeTracker(rt, TrackerConfig(3, batch_size=3), debug=True)
    h0 = tracker.register()
    h1 = tracker.register()
    h2 = tracker.register()
    source = SharedInt(9, "src")
    pinned = tracker.announce(h0, source)  # setup: protects 9 throughout

    def dep_a():
        tracker.deprecate(h1, "a1", 1, 3)
        tracker.deprecate(h1, "a2", 8, 11)  # covers the pin: never returned
        tracker.deprecate(h1, "a3", 12, 14)  # fills the pool: flush

    def dep_b():
        tracker.deprecate(h2, "b1", 2, 3)
        tracker.deprecate(h2, "b2", 9, 10)  # covers the pin
        tracker.deprecate(h2, "b3", 13, 15)  # flush

    return ScenarioInstance(
        rt, [dep_a, dep_b], TrackerOracle(9, announced=[(0, pinned)]),
        op_kinds={"announce", "unannounce", "setsrc", "deprecate"})


def _registry() -> dict:
    reg = {}
    for mode in ("baseline", "reclaiming"):
        reg[f"list-adjacent@{mode}"] = partial(build_list_adjacent, mode)
        reg[f"list-remove-append@{mode}"] = partial(build_list_remove_append, mode)
        reg[f"list-remove-find@{mode}"] = partial(build_list_remove_find, mode)
        reg[f"list-three@{mode}"] = partial(build_list_three, mode)
        reg[f"snapshot-query@{mode}"] = partial(build_snapshot_query, mode)
        reg[f"snapshot-two-writers@{mode}"] = partial(
            build_snapshot_two_writers, mode)
        reg[f"snapshot-three@{mode}"] = partial(build_snapshot_three, mode)
    reg["tracker-announce-race"] = build_tracker_announce_race
    reg["tracker-flush-race"] = build_tracker_flush_race
    return reg


SCENARIOS = _registry()


def scenario(name: str) -> Scenario:
    try:
        return Scenario(name, SCENARIOS[name])
    except KeyError:
        raise KeyError(
            f"unknown scenario {name!r}; available: {', '.join(sorted(SCENARIOS))}"
        ) from None
