"""Shared-memory access layer.

Every algorithm in this package touches shared mutable state only through a
runtime object.  Two runtimes implement the same duck-typed interface:

* ``ThreadedRuntime`` -- for real threads.  Single reads and writes rely on
  the interpreter's atomicity for attribute access; compare-and-swap takes a
  striped lock so the read-compare-write is indivisible.

* ``SimRuntime`` -- for the deterministic verification harness.  Virtual
  processes run on parked worker threads, exactly one of which is runnable
  at any moment.  Each shared read, write, or compare-and-swap is one
  scheduling step: the worker blocks at a gate until the coordinator grants
  it the step, performs the access while everything else is parked, and
  runs local code until the next gate.  Every access (and every failed
  compare-and-swap) is appended to an event trace.

The interface is intentionally tiny: ``read``, ``write``, ``cas``,
``ref_adjust`` (for the reclamation layer's reference counts),
``field_lock``/``count_lock`` (no-ops under simulation), and ``note`` for
operation-level trace events.
"""

import itertools
import threading

from .errors import SchedulingError


class Sentinel:
    """Unique named constant, compared by identity."""

    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __repr__(self):
        return self.name


#: Link value replacing a spliced-out node's pointer to a descendant.
TOP = Sentinel("TOP")
#: Timestamp value of a node whose timestamp has not been fixed yet.
TBD = Sentinel("TBD")
#: Announcement-slot value meaning "no active announcement".
EMPTY = Sentinel("EMPTY")
#: Retire timestamp of a record that has not been retired.
UNSET = Sentinel("UNSET")

# Node status values.
UNMARKED, MARKED, FINALIZED = 0, 1, 2

_STATUS_NAMES = {UNMARKED: "unmarked", MARKED: "marked", FINALIZED: "finalized"}


class SharedInt:
    """A single shared integer cell (used as a timestamp source in tests)."""

    __slots__ = ("value", "name")

    def __init__(self, value: int = 0, name: str = "shared"):
        self.value = value
        self.name = name


class ShardedCounter:
    """Per-thread counter shards; ``value()`` sums them.

    ``add`` is cheap and race-free because each thread owns its shard;
    ``value`` is only exact at quiescent points, which is where it is used.
    """

    __slots__ = ("_local", "_boxes", "_lock")

    def __init__(self):
        self._local = threading.local()
        self._boxes = []
        self._lock = threading.Lock()

    def add(self, n: int = 1):
        try:
            box = self._local.box
        except AttributeError:
            box = [0]
            with self._lock:
                self._boxes.append(box)
            self._local.box = box
        box[0] += n

    def value(self) -> int:
        with self._lock:
            return sum(box[0] for box in self._boxes)


class _NullLock:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


_NULL_LOCK = _NullLock()


class _StepCell(threading.local):
    def __init__(self):
        self.n = 0


def name_of(value):
    """Stable printable identity for trace events."""
    if value is None:
        return None
    if isinstance(value, (int, str)):
        return value
    if isinstance(value, Sentinel):
        return value.name
    if isinstance(value, tuple):
        return tuple(name_of(v) for v in value)
    name = getattr(value, "name", None)
    if name is not None:
        return name
    return f"{type(value).__name__}@?"


class ThreadedRuntime:
    """Shared-memory primitives for real threads."""

    is_sim = False

    # Object ids are alignment-multiples, so the low bits are shifted away
    # before striping or distinct objects pile onto a handful of locks.
    _N_FIELD_LOCKS = 512
    _N_COUNT_LOCKS = 512

    def __init__(self, count_steps: bool = False, sink=None):
        self._flocks = [threading.Lock() for _ in range(self._N_FIELD_LOCKS)]
        self._clocks = [threading.Lock() for _ in range(self._N_COUNT_LOCKS)]
        self.count_steps = count_steps
        self._steps = _StepCell()
        self.sink = sink  # callable(event tuple) for the debug event stream

    # -- step accounting -------------------------------------------------

    def local_steps(self) -> int:
        """Shared-access count of the calling thread."""
        return self._steps.n

    # -- primitive accesses ----------------------------------------------

    def read(self, obj, field):
        if self.count_steps:
            self._steps.n += 1
        return getattr(obj, field)

    def write(self, obj, field, value):
        if self.count_steps:
            self._steps.n += 1
        setattr(obj, field, value)
        if self.sink is not None:
            self.sink(("write", name_of(obj), field, name_of(value)))

    def cas(self, obj, field, expected, new) -> bool:
        if self.count_steps:
            self._steps.n += 1
        with self._flocks[((id(obj) >> 6) ^ hash(field)) % self._N_FIELD_LOCKS]:
            current = getattr(obj, field)
            ok = current == expected
            if ok:
                setattr(obj, field, new)
        if self.sink is not None:
            self.sink(("cas", name_of(obj), field, name_of(new), ok))
        return ok

    # -- locks for composed atomic sections --------------------------------

    def field_lock(self, obj, field):
        return self._flocks[((id(obj) >> 6) ^ hash(field)) % self._N_FIELD_LOCKS]

    def count_lock(self, obj):
        return self._clocks[(id(obj) >> 6) % self._N_COUNT_LOCKS]

    def ref_adjust(self, obj, delta: int) -> int:
        with self._clocks[(id(obj) >> 6) % self._N_COUNT_LOCKS]:
            obj.refcount += delta
            return obj.refcount

    # -- operation-level events --------------------------------------------

    def note(self, kind, obj=None, field=None, old=None, new=None):
        if self.sink is not None:
            self.sink((kind, name_of(obj), field, name_of(old), name_of(new)))


class _Aborted(Exception):
    """Raised inside a virtual process to unwind it when a run is cut short."""


class _VProc:
    """Virtual process bookkeeping.  Control passes between the coordinator
    and the process by baton locks: the process parks on ``go`` and hands
    the baton back by releasing ``ack``."""

    __slots__ = ("pid", "go", "ack", "finished", "abort", "free_run", "error")

    def __init__(self, pid):
        self.pid = pid
        self.go = threading.Lock()
        self.go.acquire()
        self.ack = threading.Lock()
        self.ack.acquire()
        self.finished = False
        self.abort = False
        self.free_run = False
        self.error = None


class WorkerPool:
    """Reusable threads for simulation runs.

    Creating operating-system threads per explored schedule dominates the
    cost of exhaustive exploration; a pool amortizes it across the many
    thousands of runs one exploration performs.
    """

    def __init__(self, size: int):
        self._tasks = []
        self._threads = []
        self.size = size
        for _ in range(size):
            ready = threading.Lock()
            ready.acquire()
            slot = {"fn": None, "ready": ready, "stop": False}
            thread = threading.Thread(target=self._loop, args=(slot,),
                                      daemon=True)
            thread.start()
            self._tasks.append(slot)
            self._threads.append(thread)

    @staticmethod
    def _loop(slot):
        while True:
            slot["ready"].acquire()
            if slot["stop"]:
                return
            fn = slot["fn"]
            slot["fn"] = None
            fn()

    def submit(self, fns):
        if len(fns) > self.size:
            raise ValueError("pool too small for this scenario")
        for slot, fn in zip(self._tasks, fns):
            slot["fn"] = fn
            slot["ready"].release()

    def shutdown(self):
        for slot in self._tasks:
            slot["stop"] = True
            slot["ready"].release()
        for thread in self._threads:
            thread.join()


class SimRuntime:
    """Deterministic stepper: one virtual process runs at a time.

    Gates fire only on threads registered as virtual processes; accesses
    from the driving thread (scenario setup, post-run inspection) execute
    immediately and are traced with pid ``"main"``.
    """

    is_sim = True

    def __init__(self):
        self.trace = []
        self._tl = threading.local()
        self._procs = []
        self._granted = None  # proc currently allowed to take one step

    # -- primitive accesses (each is one scheduling step) -----------------

    def _pid(self):
        return getattr(self._tl, "pid", "main")

    def _gate(self):
        proc = getattr(self._tl, "proc", None)
        if proc is None or proc.free_run:
            return
        proc.ack.release()
        proc.go.acquire()
        if proc.abort:
            raise _Aborted()

    def _record(self, kind, obj, field, old, new, ok=True):
        self.trace.append(
            (len(self.trace), self._pid(), kind, name_of(obj), field,
             name_of(old), name_of(new), ok)
        )

    def read(self, obj, field):
        self._gate()
        value = getattr(obj, field)
        self._record("read", obj, field, value, value)
        return value

    def write(self, obj, field, value):
        self._gate()
        old = getattr(obj, field)
        setattr(obj, field, value)
        self._record("write", obj, field, old, value)

    def cas(self, obj, field, expected, new) -> bool:
        self._gate()
        current = getattr(obj, field)
        ok = current == expected
        if ok:
            setattr(obj, field, new)
        self._record("cas", obj, field, current, new, ok)
        return ok

    # -- composition helpers (no locking needed: execution is serial) ------

    def local_steps(self) -> int:
        return 0

    def field_lock(self, obj, field):
        return _NULL_LOCK

    def count_lock(self, obj):
        return _NULL_LOCK

    def ref_adjust(self, obj, delta: int) -> int:
        # Reference-count maintenance is deliberately not a scheduling step:
        # the counts are bookkeeping layered on the algorithm, and gating
        # them would blow up the exhaustive-exploration state space.
        obj.refcount += delta
        return obj.refcount

    def note(self, kind, obj=None, field=None, old=None, new=None):
        self._record(kind, obj, field, old, new)

    # -- virtual process control -------------------------------------------

    def run(self, scripts, pick, completion: str = "abort",
            pool: "WorkerPool | None" = None):
        """Drive *scripts* (one per virtual process) under a schedule.

        ``pick(step_index, runnable)`` returns the pid to grant the next
        step, or ``None`` to stop scheduling.  The *runnable* argument is
        the sorted list of processes currently parked at a gate.  After
        ``pick`` stops (or every process finishes), *completion* says what
        happens to unfinished processes: ``"abort"`` unwinds them,
        ``"roundrobin"`` finishes them one at a time in pid order.

        Exactly one virtual process executes at any moment, so runs are
        deterministic.  Passing a ``WorkerPool`` reuses its threads.

        Returns the number of scheduled steps granted (completion steps
        excluded).
        """
        procs = [_VProc(pid) for pid in range(len(scripts))]
        self._procs = procs
        own_pool = pool is None
        if own_pool:
            pool = WorkerPool(len(scripts))

        def _wrap(proc, script):
            def task():
                self._tl.pid = proc.pid
                self._tl.proc = proc
                try:
                    # Park before running any code: even the run-up to the
                    # first shared access happens only under a grant, so
                    # nothing races outside the scheduler's control.
                    proc.ack.release()
                    proc.go.acquire()
                    if proc.abort:
                        raise _Aborted()
                    script()
                except _Aborted:
                    pass
                except BaseException as exc:  # surfaced to the driver
                    proc.error = exc
                finally:
                    proc.finished = True
                    self._tl.pid = None
                    self._tl.proc = None
                    proc.ack.release()

            return task

        steps = 0
        try:
            pool.submit([_wrap(proc, script)
                         for proc, script in zip(procs, scripts)])
            # Wait for every process to park at its entry gate.
            for proc in procs:
                proc.ack.acquire()

            while True:
                runnable = [p.pid for p in procs if not p.finished]
                if not runnable:
                    break
                pid = pick(steps, runnable)
                if pid is None:
                    break
                if not isinstance(pid, int) or pid < 0 or pid >= len(procs):
                    raise SchedulingError(
                        f"schedule references process {pid!r}")
                if procs[pid].finished:
                    steps += 1  # granting a finished process is a no-op step
                    continue
                self._grant(procs[pid])
                steps += 1
            if completion == "roundrobin":
                for proc in procs:
                    if not proc.finished:
                        # Let the process run to completion in one grant.
                        proc.free_run = True
                        self._grant(proc)
        finally:
            for proc in procs:
                if not proc.finished:
                    proc.abort = True
                    proc.go.release()
                    proc.ack.acquire()
            if own_pool:
                pool.shutdown()
        for proc in procs:
            if proc.error is not None:
                raise proc.error
        return steps

    def _grant(self, proc):
        proc.go.release()
        proc.ack.acquire()


_uid = itertools.count(1)


def fresh_name(prefix: str) -> str:
    """Process-wide unique name; deterministic only within one allocator."""
    return f"{prefix}{next(_uid)}"
