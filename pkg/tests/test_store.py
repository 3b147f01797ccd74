"""Snapshot store: camera, versioned cells, record lifecycle, map host."""

import pytest

from mvgc import (ABSENT, ContractViolation, DNodeRecord, UNSET,
                  VersionedMap, VersionedStore)


def make_store(p=2, mode="reclaiming"):
    store = VersionedStore(p, mode=mode)
    handles = [store.register_process() for _ in range(p)]
    return store, handles


# -- camera ----------------------------------------------------------------------


def test_fresh_camera_snapshot_is_zero_then_one():
    store, (h, _) = make_store()
    assert store.take_snapshot(h) == 0
    assert store.camera.timestamp == 1
    store.unreserve(h)


def test_snapshot_values_monotone():
    store, (h, _) = make_store()
    s1 = store.take_snapshot(h)
    store.unreserve(h)
    s2 = store.take_snapshot(h)
    store.unreserve(h)
    assert s2 >= s1


# -- v_read / v_cas ------------------------------------------------------------------


def test_v_read_initial_and_after_cas():
    store, (h, _) = make_store()
    cell = store.new_cell("v")
    assert cell.v_read() == "v"
    assert cell.v_cas(h, "v", "w")
    assert cell.v_read() == "w"


def test_v_cas_same_value_short_circuits():
    store, (h, _) = make_store()
    cell = store.new_cell(5)
    appended_before = store.ctx.appends.value()
    assert cell.v_cas(h, 5, 5)
    assert store.ctx.appends.value() == appended_before


def test_v_cas_stale_expected_fails():
    store, (h, _) = make_store()
    cell = store.new_cell(1)
    assert not cell.v_cas(h, 2, 3)
    assert cell.v_read() == 1


def test_sequential_casses_grow_history_with_nondecreasing_timestamps():
    store, (h, _) = make_store()
    cell = store.new_cell(0)
    for i in range(8):
        assert cell.v_cas(h, i, i + 1)
    node = cell.vlist.head
    seen = []
    while node is not None:
        seen.append(node.ts)
        node = node.left
    assert seen == sorted(seen, reverse=True)


# -- read_version ----------------------------------------------------------------------


def test_read_version_between_writes():
    store, (h, q) = make_store()
    cell = store.new_cell("v0")
    assert cell.v_cas(h, "v0", "v1")
    s = store.take_snapshot(q)
    assert cell.v_cas(h, "v1", "v2")
    assert cell.read_version(s) == "v1"
    store.unreserve(q)


def test_read_version_before_any_write_sees_initial():
    store, (h, q) = make_store()
    cell = store.new_cell("init")
    s = store.take_snapshot(q)
    assert cell.v_cas(h, "init", "next")
    assert cell.read_version(s) == "init"
    store.unreserve(q)


def test_read_version_matches_multiversion_map_oracle():
    store, (h, q) = make_store()
    cells = [store.new_cell(0) for _ in range(3)]
    shadow = {c.name: 0 for c in cells}  # sequential model of current state
    rng_values = iter(range(1, 200))
    for round_no in range(25):
        s = store.take_snapshot(q)
        at_snapshot = dict(shadow)
        # a burst of writes after the snapshot
        for k in range(3):
            cell = cells[(round_no + k) % 3]
            nxt = next(rng_values)
            assert cell.v_cas(h, shadow[cell.name], nxt)
            shadow[cell.name] = nxt
        # the held snapshot still reads the pre-burst state
        for cell in cells:
            assert cell.read_version(s) == at_snapshot[cell.name]
        store.unreserve(q)
    for cell in cells:
        assert cell.v_read() == shadow[cell.name]


def test_init_ts_idempotent():
    from mvgc import TBD
    store, (h, _) = make_store()
    cell = store.new_cell("a")
    node = store.ctx.mem.alloc_node("b")
    assert node.ts is TBD
    cell.init_ts(node)
    stamped = node.ts
    assert stamped is not TBD
    store.take_snapshot(h)  # bumps the camera
    cell.init_ts(node)
    assert node.ts == stamped
    store.unreserve(h)


# -- snapshot protection end to end ------------------------------------------------------


def test_held_snapshot_pins_exactly_its_version():
    store, (h, q) = make_store()
    cell = store.new_cell(0)
    assert cell.v_cas(h, 0, 1)
    s = store.take_snapshot(q)
    for i in range(1, 200):
        assert cell.v_cas(h, i, i + 1)
    # intermediate versions get reclaimed while the snapshot holds
    assert cell.read_version(s) == 1
    live = store.ctx.ledger.live_vnodes()
    assert live < 30, live
    store.unreserve(q)
    ledger = store.teardown([h, q])
    assert ledger["live_vnodes"] == 0
    assert ledger["live_descriptors"] == 0


# -- record (host object) lifecycle ---------------------------------------------------------


def test_record_lifecycle_free_without_snapshot():
    store, (h, _) = make_store()
    record = DNodeRecord(key="k")
    store.dnode_birth(record)
    store.take_snapshot(h)
    store.unreserve(h)  # bump the clock past birth
    store.dnode_retire(record)
    freed = store.dnode_free(record, h)
    drained = []
    for _ in range(4):
        drained += store.record_tracker.drain_flush(h.dh)
    assert record in freed or record in drained


def test_record_retained_while_snapshot_covers_interval():
    store, (h, q) = make_store()
    record = DNodeRecord(key="k")
    store.dnode_birth(record)
    s = store.take_snapshot(q)  # snapshot inside [birth, retire)
    store.take_snapshot(h)
    store.unreserve(h)
    store.dnode_retire(record)
    assert record.birth_ts <= s < record.retire_ts
    freed = store.dnode_free(record, h)
    for _ in range(4):
        freed += store.record_tracker.drain_flush(h.dh)
    assert record not in freed
    store.unreserve(q)
    for _ in range(4):
        freed += store.record_tracker.drain_flush(h.dh)
    assert record in freed


def test_free_before_retire_is_contract_violation():
    store, (h, _) = make_store()
    record = DNodeRecord(key="k")
    store.dnode_birth(record)
    assert record.retire_ts is UNSET
    with pytest.raises(ContractViolation):
        store.dnode_free(record, h)


# -- versioned map host ------------------------------------------------------------------


def test_map_put_get_delete_roundtrip():
    store, (h, _) = make_store()
    vmap = VersionedMap(store, ["a", "b"])
    assert vmap.get(h, "a") is None
    vmap.put(h, "a", 1)
    assert vmap.get(h, "a") == 1
    vmap.put(h, "a", 2)
    assert vmap.get(h, "a") == 2
    assert vmap.delete(h, "a")
    assert vmap.get(h, "a") is None
    assert not vmap.delete(h, "a")


def test_map_snapshot_sees_consistent_past():
    store, (h, q) = make_store()
    vmap = VersionedMap(store, ["x", "y"])
    vmap.put(h, "x", "x1")
    snap = vmap.snapshot(q)
    vmap.put(h, "x", "x2")
    vmap.put(h, "y", "y1")
    assert snap.read("x") == "x1"
    assert snap.read("y") is None
    # memoized: same answers on re-read
    assert snap.read("x") == "x1"
    snap.release()
    assert vmap.get(h, "x") == "x2"
    assert vmap.get(h, "y") == "y1"


def test_map_snapshot_survives_record_deletion():
    store, (h, q) = make_store()
    vmap = VersionedMap(store, ["k"])
    vmap.put(h, "k", 42)
    snap = vmap.snapshot(q)
    vmap.delete(h, "k")
    vmap.put(h, "k", 43)
    assert snap.read("k") == 42
    snap.release()
    assert vmap.get(h, "k") == 43


def test_deleted_records_eventually_reclaimed():
    store, (h, _) = make_store()
    vmap = VersionedMap(store, ["k"])
    for i in range(40):
        vmap.put(h, "k", i)
        vmap.delete(h, "k")
    store.drain([h])
    assert store.records_freed >= 39
