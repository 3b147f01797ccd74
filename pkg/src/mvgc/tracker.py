"""Linearizable range tracking.

A range tracker holds *deprecated* objects, each with a half-open timestamp
interval [low, high), and a multiset of *active announcements* (at most one
per process).  ``deprecate`` hands an object in and returns previously
deprecated objects whose intervals no longer contain any announcement and
are therefore safe to reclaim; each object is returned exactly once.

Deprecated objects are batched in pools sorted by ``high``.  Each process
accumulates a local pool; when it reaches the batch size B the process runs
a *flush phase*: dequeue two pools from a shared lock-free queue, merge
them, partition against a sorted copy of the announcements, re-enqueue the
still-needed ranges (split or merged so queued pools stay between B and
2B), enqueue the local pool, and return the redundant objects.  The flush
costs O(B) and runs once every B calls, so deprecate is amortized O(1).
"""

import itertools
import math
import threading
from dataclasses import dataclass

from .errors import CapacityError, ContractViolation
from .lockfree_queue import PoolQueue
from .runtime import EMPTY, ShardedCounter


class Range:
    """A deprecated object plus its half-open interval [low, high)."""

    __slots__ = ("payload", "low", "high")

    def __init__(self, payload, low: int, high: int):
        self.payload = payload
        self.low = low
        self.high = high

    def __repr__(self):
        return f"Range({self.payload!r}, [{self.low}, {self.high}))"


class AnnouncementSlot:
    """Single-writer cell holding one announced timestamp or EMPTY."""

    __slots__ = ("value", "name")

    def __init__(self, name: str):
        self.value = EMPTY
        self.name = name


def default_batch_size(num_processes: int) -> int:
    """B = max(2, P * ceil(log2 P)); the floor keeps the flush phase
    exercised even at P = 1 or 2."""
    p = num_processes
    if p <= 1:
        return 2
    return max(2, p * math.ceil(math.log2(p)))


@dataclass(frozen=True)
class TrackerConfig:
    num_processes: int
    batch_size: int = 0  # 0 means "use the default for P"

    def resolved_batch_size(self) -> int:
        if self.batch_size > 0:
            return self.batch_size
        return default_batch_size(self.num_processes)


def merge_pools(a: list, b: list) -> list:
    """Sorted (by high) union of two pools sorted by high."""
    if not a:
        return list(b)
    if not b:
        return list(a)
    # Timsort recognizes the two pre-sorted runs, so this is a linear merge.
    return sorted(a + b, key=_high)


def _high(r: Range) -> int:
    return r.high


def split_pool(pool: list) -> tuple[list, list]:
    """Two sorted halves whose sizes differ by at most one."""
    mid = (len(pool) + 1) // 2
    return pool[:mid], pool[mid:]


def intersect(pool: list, announcements: list) -> tuple[list, list]:
    """Partition *pool* (sorted by high) against sorted *announcements*.

    Returns (redundant payloads, needed ranges): a range is needed exactly
    when some announcement a satisfies low <= a < high, which -- because
    both inputs are sorted -- reduces to comparing low against the largest
    announcement below high.  Relative order is preserved on both sides.
    """
    redundant = []
    needed = []
    i = 0
    n = len(announcements)
    for r in pool:
        high = r.high
        while i < n and announcements[i] < high:
            i += 1
        if i == 0 or announcements[i - 1] < r.low:
            redundant.append(r.payload)
        else:
            needed.append(r)
    return redundant, needed


class TrackerHandle:
    """Per-process state: announcement slot ownership and the local pool.

    A handle may move between threads but must be used by one thread at a
    time; all fields except the slot itself are accessed only by the owner.
    """

    __slots__ = (
        "tracker", "slot_index", "slot", "ldpool", "last_high", "announced",
        "n_deprecated", "n_returned", "n_flushes", "steps", "events",
    )

    def __init__(self, tracker, slot_index: int, slot: AnnouncementSlot):
        self.tracker = tracker
        self.slot_index = slot_index
        self.slot = slot
        self.ldpool = []
        self.last_high = None
        self.announced = False
        self.n_deprecated = 0
        self.n_returned = 0
        self.n_flushes = 0
        self.steps = 0
        self.events = []  # (seq, kind, ...) when history recording is on


class RangeTracker:
    """See module docstring.  Construction fixes P and B.

    ``debug=True`` enables precondition checks (mis-sequenced announce and
    unannounce, decreasing highs, low > high); violations raise
    ContractViolation.  ``record_history=True`` appends per-handle
    (sequence, kind, ...) events used by the verification suite to check
    the return discipline offline.
    """

    def __init__(self, rt, config: TrackerConfig, *, debug: bool = True,
                 record_history: bool = False, name: str = "rt",
                 slots: list | None = None):
        self.config = config
        self.rt = rt
        self.debug = debug
        self.record_history = record_history
        self.name = name
        self.batch = config.resolved_batch_size()
        if slots is None:
            slots = [
                AnnouncementSlot(f"{name}.ann{i}")
                for i in range(config.num_processes)
            ]
        elif len(slots) != config.num_processes:
            raise ValueError("shared announcement array has the wrong size")
        self.slots = slots
        self.queue = PoolQueue(rt, name=f"{name}.Q")
        self.handles: list[TrackerHandle] = []
        self._reg_lock = threading.Lock()
        self.seq = itertools.count(1)
        self.returned_total = ShardedCounter()
        self.deprecated_total = ShardedCounter()
        self.trace_ops = bool(getattr(rt, "is_sim", False))

    # -- registration -------------------------------------------------------

    def register(self) -> TrackerHandle:
        with self._reg_lock:
            idx = len(self.handles)
            if idx >= self.config.num_processes:
                raise CapacityError(
                    f"all {self.config.num_processes} process slots are taken"
                )
            handle = TrackerHandle(self, idx, self.slots[idx])
            self.handles.append(handle)
            return handle

    # -- announcements ------------------------------------------------------

    def announce(self, handle: TrackerHandle, source, field: str = "value") -> int:
        """Copy the current value of ``source.field`` into the handle's slot
        and return it.

        The copy is a read/publish/re-read loop: publish a value read from
        the source, and retry if the source moved meanwhile.  Because the
        source is monotone and bounded below by every deprecated high, the
        published value protects exactly what the returned value promises.
        Lock-free: retries only while the source keeps changing.
        """
        rt = self.rt
        if self.debug and handle.announced:
            raise ContractViolation("announce while an announcement is active")
        if self.trace_ops:
            rt.note("call:announce", handle.slot_index)
        start_seq = next(self.seq) if self.record_history else 0
        while True:
            value = rt.read(source, field)
            rt.write(handle.slot, "value", value)
            if rt.read(source, field) == value:
                break
        handle.announced = True
        if self.record_history:
            handle.events.append((start_seq, "ann", handle.slot_index, value))
        if self.trace_ops:
            rt.note("ret:announce", handle.slot_index, None, None, value)
        return value

    def unannounce(self, handle: TrackerHandle):
        if self.debug and not handle.announced:
            raise ContractViolation("unannounce without an active announcement")
        if self.trace_ops:
            self.rt.note("call:unannounce", handle.slot_index)
        self.rt.write(handle.slot, "value", EMPTY)
        handle.announced = False
        if self.record_history:
            handle.events.append((next(self.seq), "unann", handle.slot_index))
        if self.trace_ops:
            self.rt.note("ret:unannounce", handle.slot_index)

    def sort_announcements(self) -> list[int]:
        """One read per slot; non-EMPTY values, sorted ascending."""
        rt = self.rt
        out = []
        for slot in self.slots:
            value = rt.read(slot, "value")
            if value is not EMPTY:
                out.append(value)
        out.sort()
        return out

    # -- deprecation ----------------------------------------------------------

    def deprecate(self, handle: TrackerHandle, payload, low: int, high: int) -> list:
        """Add (payload, [low, high)) and return objects now safe to reclaim.

        Returns [] until the local pool reaches B entries, then runs the
        flush phase.  Never blocks.  Per-handle highs must be
        non-decreasing and payloads distinct across all calls.
        """
        if self.debug:
            if low > high:
                raise ContractViolation(f"low {low} > high {high}")
            if handle.last_high is not None and high < handle.last_high:
                raise ContractViolation(
                    f"high {high} decreased below {handle.last_high}"
                )
        if self.trace_ops:
            self.rt.note("call:deprecate", payload, None, (low, high))
        handle.last_high = high
        handle.ldpool.append(Range(payload, low, high))
        handle.n_deprecated += 1
        handle.steps += 1
        self.deprecated_total.add()
        if len(handle.ldpool) == self.batch:
            redundant = self._flush(handle)
        else:
            redundant = []
        if redundant:
            self._note_returns(handle, redundant)
        if self.trace_ops:
            self.rt.note("ret:deprecate", payload, None, None, tuple(redundant))
        return redundant

    def _flush(self, handle: TrackerHandle) -> list:
        queue = self.queue
        p1 = queue.dequeue() or []
        p2 = queue.dequeue() or []
        merged = merge_pools(p1, p2)
        announced = self.sort_announcements()
        redundant, needed = intersect(merged, announced)
        b = self.batch
        if len(needed) > 2 * b:
            n1, n2 = split_pool(needed)
            queue.enqueue(n1)
            queue.enqueue(n2)
        elif len(needed) > b:
            queue.enqueue(needed)
        else:
            handle.ldpool = merge_pools(handle.ldpool, needed)
        queue.enqueue(handle.ldpool)
        handle.ldpool = []
        handle.n_flushes += 1
        handle.steps += len(merged) + len(announced) + 2 * b
        return redundant

    def drain_flush(self, handle: TrackerHandle) -> list:
        """Maintenance flush phase that runs regardless of pool fill.

        Folds the handle's partial local pool into the merged batch so a
        quiescent system can be drained completely; pools re-enqueued here
        may be smaller than B (the B..2B bound applies to pools enqueued by
        regular deprecate flushes).
        """
        queue = self.queue
        merged = merge_pools(merge_pools(queue.dequeue() or [], queue.dequeue() or []),
                             handle.ldpool)
        handle.ldpool = []
        announced = self.sort_announcements()
        redundant, needed = intersect(merged, announced)
        if needed:
            if len(needed) > 2 * self.batch:
                n1, n2 = split_pool(needed)
                queue.enqueue(n1)
                queue.enqueue(n2)
            else:
                queue.enqueue(needed)
        handle.n_flushes += 1
        handle.steps += len(merged) + len(announced)
        if redundant:
            self._note_returns(handle, redundant)
        return redundant

    def _note_returns(self, handle: TrackerHandle, redundant: list):
        handle.n_returned += len(redundant)
        self.returned_total.add(len(redundant))
        if self.record_history:
            handle.events.append((next(self.seq), "ret", tuple(redundant)))

    # -- accounting (quiescent points only) -----------------------------------

    def outstanding(self) -> int:
        """Deprecated-but-not-returned count; exact only at quiescence."""
        queued = sum(len(pool) for pool in self.queue.snapshot())
        local = sum(len(h.ldpool) for h in self.handles)
        return queued + local

    def merged_history(self) -> list:
        """All recorded events across handles, in sequence order."""
        events = []
        for handle in self.handles:
            events.extend(handle.events)
        events.sort(key=lambda e: e[0])
        return events
