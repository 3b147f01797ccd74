"""Snapshot layer: a global timestamp, versioned CAS cells over version
lists, and the host-record lifecycle that routes a host structure's own
reclamation through range tracking.

A snapshot is taken by announcing the current timestamp (protecting every
version current at that instant) and then attempting one increment.  A
versioned CAS keeps all past values of a cell in a version list; every
successful ``v_cas`` deprecates the superseded head with the half-open
interval from its timestamp to its successor's, and immediately removes
whatever the tracker hands back.  Intermediate versions -- those between a
held old snapshot and the current head -- cover no announcement, so they
are returned, unlinked, and reclaimed while both endpoints stay live.

Host records (``DNodeRecord``) carry birth/retire timestamps and flow
through a second tracker instance that shares the announcement array, so a
single announcement protects versions and records alike while each
tracker's per-handle deprecation highs stay non-decreasing (version highs
are fresh camera reads; record highs are retire stamps released in retire
order).  Records additionally wait out a short grace period so frontier
operations still holding them never see a reclaimed record.
"""

import threading

from .errors import ContractViolation, InvariantViolation
from .reclaim import ListContext
from .runtime import Sentinel, TBD, UNSET, ThreadedRuntime
from .tracker import RangeTracker, TrackerConfig
from .vlist import VersionList, VNode, lr_reachable_count, remove


class Camera:
    """Monotone global timestamp plus the version range tracker."""

    __slots__ = ("timestamp", "tracker", "name")

    def __init__(self, tracker: RangeTracker, name: str = "camera"):
        self.timestamp = 0
        self.tracker = tracker
        self.name = name


class StoreHandle:
    """Per-process handle: one announcement slot, one local pool in each
    tracker, and the frontier-activity flag used for record grace periods."""

    __slots__ = ("store", "vh", "dh", "op_epoch")

    def __init__(self, store, vh, dh):
        self.store = store
        self.vh = vh  # version-tracker handle (owns the announcement slot)
        self.dh = dh  # record-tracker handle (same slot index)
        self.op_epoch = 0  # odd while a frontier op is running


class VersionedStore:
    """A camera with attached versioned CAS cells sharing one context.

    ``mode`` selects the list build: "reclaiming" (counted nodes, capped
    dead links) or "baseline" (nodes never freed; for differential
    testing).  Each thread registers once and performs everything through
    its own handle; a handle's snapshot lifecycle (take_snapshot ...
    read_version ... unreserve) is serial.
    """

    def __init__(self, processes: int, *, mode: str = "reclaiming",
                 runtime=None, debug: bool = True, batch_size: int = 0,
                 record_history: bool = False):
        if mode not in ("baseline", "reclaiming"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.rt = runtime if runtime is not None else ThreadedRuntime()
        self.ctx = ListContext(self.rt, reclaiming=(mode == "reclaiming"),
                               debug=debug)
        config = TrackerConfig(processes, batch_size)
        vtracker = RangeTracker(self.rt, config, debug=debug,
                                record_history=record_history, name="vrt")
        self.camera = Camera(vtracker)
        self.record_tracker = RangeTracker(
            self.rt, config, debug=debug, record_history=record_history,
            name="drt", slots=vtracker.slots,
        )
        self.debug = debug
        self._cells = []
        self._cells_lock = threading.Lock()
        self._handles = []
        self._limbo = []  # retired records awaiting a grace period
        self._limbo_lock = threading.Lock()
        self.records_freed = 0

    # -- processes -----------------------------------------------------------

    def register_process(self) -> StoreHandle:
        vh = self.camera.tracker.register()
        dh = self.record_tracker.register()
        handle = StoreHandle(self, vh, dh)
        with self._cells_lock:
            self._handles.append(handle)
        return handle

    # -- snapshots ------------------------------------------------------------

    def take_snapshot(self, handle: StoreHandle) -> int:
        """Announce the current timestamp, try to advance it, and return
        the announced value."""
        camera = self.camera
        ts = camera.tracker.announce(handle.vh, camera, "timestamp")
        self.rt.cas(camera, "timestamp", ts, ts + 1)
        return ts

    def unreserve(self, handle: StoreHandle):
        self.camera.tracker.unannounce(handle.vh)

    # -- cells ------------------------------------------------------------------

    def new_cell(self, initial) -> "VersionedCAS":
        cell = VersionedCAS(self, initial)
        with self._cells_lock:
            self._cells.append(cell)
        return cell

    # -- host-record lifecycle ----------------------------------------------------

    def dnode_birth(self, record: "DNodeRecord"):
        """Stamp the record before it is attached to the host structure."""
        record.birth_ts = self.rt.read(self.camera, "timestamp")

    def dnode_retire(self, record: "DNodeRecord"):
        """Stamp the record when the host unlinks it."""
        if self.debug and record.birth_ts is UNSET:
            raise ContractViolation("retire before birth")
        record.retire_ts = self.rt.read(self.camera, "timestamp")

    def dnode_free(self, record: "DNodeRecord", handle: StoreHandle) -> list:
        """Hand a retired record to the tracker; no frontier operation may
        still hold it (see ``retire_record`` for the guarded path).
        Returns the records reclaimed now."""
        if record.retire_ts is UNSET:
            raise ContractViolation("free before retire")
        returned = self.record_tracker.deprecate(
            handle.dh, record, record.birth_ts, record.retire_ts
        )
        return self._reclaim_records(returned)

    # Grace-period machinery: frontier operations bracket themselves with
    # frontier_enter/frontier_exit; a retired record is freed only after
    # every handle has been seen outside a frontier operation (or in a
    # later one) since the retire.

    def frontier_enter(self, handle: StoreHandle):
        handle.op_epoch += 1  # now odd

    def frontier_exit(self, handle: StoreHandle):
        handle.op_epoch += 1  # now even

    def retire_record(self, record: "DNodeRecord", handle: StoreHandle):
        """Retire an unlinked record and queue it for freeing once
        concurrent frontier operations have drained.

        Stamping happens under the limbo lock so the queue stays sorted by
        retire timestamp, which keeps every handle's deprecation highs
        non-decreasing when the queue is drained in order."""
        snap = [(h, h.op_epoch) for h in self._handles if h is not handle]
        with self._limbo_lock:
            self.dnode_retire(record)
            self._limbo.append((record, snap))

    def collect_records(self, handle: StoreHandle) -> list:
        """Free every limbo record whose grace period has passed; called
        opportunistically from host operations."""
        freed = []
        while True:
            with self._limbo_lock:
                if not self._limbo:
                    break
                record, snap = self._limbo[0]
                if any(epoch % 2 == 1 and h.op_epoch == epoch
                       for h, epoch in snap):
                    break  # oldest record still covered; keep FIFO order
                self._limbo.pop(0)
            freed.extend(self.dnode_free(record, handle))
        return freed

    # -- reclamation plumbing ---------------------------------------------------

    def _reclaim_versions(self, payloads: list):
        # Each returned node still carries the pin taken when it was
        # deprecated; remove it, then let that pin go.
        ctx = self.ctx
        for node in payloads:
            remove(ctx, node)
            ctx.mem.release_ref(node)

    def _reclaim_records(self, payloads: list) -> list:
        freed = []
        for record in payloads:
            for cell in record.cells:
                cell.vlist.dismantle()
            record.freed = True
            self.records_freed += 1
            freed.append(record)
        return freed

    # -- maintenance ----------------------------------------------------------------

    def outstanding(self) -> int:
        return self.camera.tracker.outstanding() + self.record_tracker.outstanding()

    def drain(self, handles, rounds: int = 3) -> int:
        """Run maintenance flush phases on every handle until nothing is
        outstanding or *rounds* passes complete.  Reaches zero only with
        no active announcements.  Returns the outstanding count."""
        for _ in range(rounds):
            for handle in handles:
                self.collect_records(handle)
                self._reclaim_versions(
                    self.camera.tracker.drain_flush(handle.vh))
                self._reclaim_records(
                    self.record_tracker.drain_flush(handle.dh))
            if self.outstanding() == 0:
                break
        return self.outstanding()

    def teardown(self, handles) -> dict:
        """Drain, dismantle every cell, and return the ledger snapshot.
        With no snapshots held, reclaiming mode ends with zero live
        objects."""
        self.drain(handles)
        for cell in self._cells:
            cell.vlist.dismantle()
        self.drain(handles)
        self.ctx.ledger.update_high_water()
        return self.ctx.ledger.snapshot()

    def lr_reachable(self) -> int:
        return lr_reachable_count([cell.vlist for cell in self._cells])


class VersionedCAS:
    """A CAS cell whose history is kept in a version list."""

    __slots__ = ("store", "vlist", "name")

    def __init__(self, store: VersionedStore, initial):
        self.store = store
        self.vlist = VersionList(store.ctx)
        self.name = f"cell.{self.vlist.name}"
        node = store.ctx.mem.alloc_node(initial)
        if not self.vlist.try_append(None, node):
            raise InvariantViolation("initial append cannot fail")
        self._init_ts(node)
        store.ctx.mem.release_ref(node)

    # -- timestamp fixing ----------------------------------------------------

    def _init_ts(self, node):
        """Fix the node's timestamp if still pending: read the camera once
        and publish with a CAS.  Idempotent; racing calls agree."""
        rt = self.store.rt
        if rt.read(node, "ts") is TBD:
            current = rt.read(self.store.camera, "timestamp")
            rt.cas(node, "ts", TBD, current)

    def init_ts(self, node):
        self._init_ts(node)

    # -- operations --------------------------------------------------------------

    def v_read(self):
        """Current value; linearizes with v_cas on the head pointer."""
        mem = self.store.ctx.mem
        rt = self.store.rt
        if self.store.ctx.trace_ops:
            rt.note("call:vread", self.name)
        head = self.vlist.get_head()
        self._init_ts(head)
        value = head.value
        mem.release_ref(head)
        if self.store.ctx.trace_ops:
            rt.note("ret:vread", self.name, None, None, value)
        return value

    def v_cas(self, handle: StoreHandle, old, new) -> bool:
        """Replace *old* by *new* if current; on success the superseded
        version is deprecated with its validity interval, and any versions
        the tracker returns are removed on the spot."""
        ctx = self.store.ctx
        rt = self.store.rt
        mem = ctx.mem
        if ctx.trace_ops:
            rt.note("call:vcas", self.name, None, old, new)
        head = self.vlist.get_head()
        self._init_ts(head)
        try:
            if head.value != old:
                return self._done(False)
            if new == old:
                return self._done(True)
            node = mem.alloc_node(new)
            if self.vlist.try_append(head, node):
                self._init_ts(node)
                # The tracker keeps only a raw identity, so pin the
                # superseded version for as long as it sits there: lists
                # can be dismantled before their pending versions come
                # back, and the chain alone would no longer keep them
                # alive.  The pin is dropped after the eventual remove.
                mem.ref_inc(head)
                returned = self.store.camera.tracker.deprecate(
                    handle.vh, head, rt.read(head, "ts"), rt.read(node, "ts")
                )
                mem.release_ref(node)
                if returned:
                    self.store._reclaim_versions(returned)
                return self._done(True)
            mem.release_ref(node)  # speculative node dies here
            fresh = self.vlist.get_head()
            self._init_ts(fresh)
            mem.release_ref(fresh)
            return self._done(False)
        finally:
            mem.release_ref(head)

    def _done(self, result: bool) -> bool:
        if self.store.ctx.trace_ops:
            self.store.rt.note("ret:vcas", self.name, None, None, result)
        return result

    def read_version(self, ts: int):
        """Value current at snapshot timestamp *ts*.

        The caller's announcement of *ts* must still be active: that is
        what keeps the version covering *ts* in the list.  A miss is a
        structural impossibility and raises."""
        ctx = self.store.ctx
        mem = ctx.mem
        if ctx.trace_ops:
            self.store.rt.note("call:readversion", self.name, None, None, ts)
        head = self.vlist.get_head()
        self._init_ts(head)
        node = self.vlist.find(head, ts)
        mem.release_ref(head)
        if node is None:
            raise InvariantViolation(
                f"no version at or before ts={ts} in {self.vlist.name}"
            )
        value = node.value
        mem.release_ref(node)
        if ctx.trace_ops:
            self.store.rt.note("ret:readversion", self.name, None, None, value)
        return value


class DNodeRecord:
    """Host-structure record with birth/retire stamps and owned cells."""

    __slots__ = ("key", "cells", "birth_ts", "retire_ts", "freed", "name")

    def __init__(self, key=None, name: str = "dnode"):
        self.key = key
        self.cells = []
        self.birth_ts = UNSET
        self.retire_ts = UNSET
        self.freed = False
        self.name = name


ABSENT = Sentinel("ABSENT")


class VersionedMap:
    """Reference host: a fixed set of keys, each bound through a versioned
    slot to the key's current record (or ABSENT).  Exercises the full
    record lifecycle: records are born before attach, retired when
    unlinked, and freed after a grace period, in retire order."""

    def __init__(self, store: VersionedStore, keys):
        self.store = store
        self.slots = {key: store.new_cell(ABSENT) for key in keys}
        self._dnode_seq = 0
        self._seq_lock = threading.Lock()

    def _new_record(self, key, value) -> DNodeRecord:
        with self._seq_lock:
            self._dnode_seq += 1
            name = f"dn{self._dnode_seq}"
        record = DNodeRecord(key, name)
        record.cells.append(self.store.new_cell(value))
        return record

    def put(self, handle: StoreHandle, key, value):
        """Bind *key* to *value*, updating the current record in place or
        attaching a fresh one."""
        store = self.store
        slot = self.slots[key]
        store.frontier_enter(handle)
        try:
            while True:
                current = slot.v_read()
                if current is not ABSENT:
                    cell = current.cells[0]
                    if cell.v_cas(handle, cell.v_read(), value):
                        return
                    continue
                record = self._new_record(key, value)
                store.dnode_birth(record)
                if slot.v_cas(handle, ABSENT, record):
                    return
                # Lost the race; the record was never attached, but it
                # still flows through the ordered retire queue so this
                # handle's later deprecations keep non-decreasing highs.
                store.retire_record(record, handle)
        finally:
            store.frontier_exit(handle)
            store.collect_records(handle)

    def delete(self, handle: StoreHandle, key) -> bool:
        store = self.store
        slot = self.slots[key]
        store.frontier_enter(handle)
        try:
            while True:
                current = slot.v_read()
                if current is ABSENT:
                    return False
                if slot.v_cas(handle, current, ABSENT):
                    store.retire_record(current, handle)
                    return True
        finally:
            store.frontier_exit(handle)
            store.collect_records(handle)

    def get(self, handle: StoreHandle, key):
        store = self.store
        store.frontier_enter(handle)
        try:
            current = self.slots[key].v_read()
            if current is ABSENT:
                return None
            return current.cells[0].v_read()
        finally:
            store.frontier_exit(handle)

    def snapshot(self, handle: StoreHandle) -> "MapSnapshot":
        return MapSnapshot(self, handle)


class MapSnapshot:
    """A held snapshot of a VersionedMap; per-key reads are memoized so a
    query touches each object at most once."""

    def __init__(self, vmap: VersionedMap, handle: StoreHandle):
        self.vmap = vmap
        self.handle = handle
        self.ts = vmap.store.take_snapshot(handle)
        self._cache = {}
        self._released = False

    def read(self, key):
        if key in self._cache:
            return self._cache[key]
        if self._released:
            raise ContractViolation("read on a released snapshot")
        record = self.vmap.slots[key].read_version(self.ts)
        if record is ABSENT:
            value = None
        else:
            value = record.cells[0].read_version(self.ts)
        self._cache[key] = value
        return value

    def release(self):
        if self._released:
            raise ContractViolation("snapshot released twice")
        self._released = True
        self.vmap.store.unreserve(self.handle)
