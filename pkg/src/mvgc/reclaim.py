"""Reference-counted lifetime management for version-list nodes and splice
descriptors.

A target's reference count equals the number of counted fields referencing
it (node links, descriptor fields, list heads) plus live local pins.
Counts are adjusted eagerly and atomically: a counted CAS increments the
new value before publication and decrements the displaced value after
success.  When a count reaches zero the target is destroyed exactly once:
its counted fields are cleared (cascading), its canary is poisoned so any
later touch is detectable, and the object returns to a fixed-size pool.

Spliced-out nodes form no reference cycles -- their surviving links point
only at nodes spliced later or still in the list, and every spliced node's
descriptor fields are frozen -- so eager counting reclaims everything once
the structure lets go.

The baseline (non-reclaiming) build uses ``GcMemory``: same interface, no
counting, nodes live forever.  Both managers record an allocation ledger.
"""

import threading

from .errors import ContractViolation
from .runtime import TBD, ShardedCounter
from .vlist import FROZEN, Descriptor, VNode


def _countable(value) -> bool:
    return isinstance(value, (VNode, Descriptor)) and value is not FROZEN


class AllocationLedger:
    """Quiescent-exact allocation accounting per object type."""

    def __init__(self):
        self.vnodes_allocated = ShardedCounter()
        self.vnodes_destroyed = ShardedCounter()
        self.descriptors_allocated = ShardedCounter()
        self.descriptors_destroyed = ShardedCounter()
        self.live_handles = ShardedCounter()
        self._hw_lock = threading.Lock()
        self.vnodes_high_water = 0
        self.descriptors_high_water = 0

    def live_vnodes(self) -> int:
        return self.vnodes_allocated.value() - self.vnodes_destroyed.value()

    def live_descriptors(self) -> int:
        return (self.descriptors_allocated.value()
                - self.descriptors_destroyed.value())

    def update_high_water(self):
        with self._hw_lock:
            self.vnodes_high_water = max(self.vnodes_high_water,
                                         self.live_vnodes())
            self.descriptors_high_water = max(self.descriptors_high_water,
                                              self.live_descriptors())

    def snapshot(self) -> dict:
        """JSON-serializable metrics record."""
        return {
            "live_vnodes": self.live_vnodes(),
            "live_descriptors": self.live_descriptors(),
            "vnodes_allocated": self.vnodes_allocated.value(),
            "vnodes_destroyed": self.vnodes_destroyed.value(),
            "descriptors_allocated": self.descriptors_allocated.value(),
            "descriptors_destroyed": self.descriptors_destroyed.value(),
            "vnodes_high_water": self.vnodes_high_water,
            "descriptors_high_water": self.descriptors_high_water,
            "live_handles": self.live_handles.value(),
        }


class _FreeLists(threading.local):
    def __init__(self):
        self.nodes = []
        self.descriptors = []


class ObjectPool:
    """Constant-time fixed-size allocator: recycled objects are reused from
    per-thread free lists, so a destroyed object's identity really does get
    handed out again -- which is exactly what the canary checks need."""

    def __init__(self, ledger: AllocationLedger, name_prefix: str = ""):
        self.ledger = ledger
        self._free = _FreeLists()
        self._prefix = name_prefix
        self._name_lock = threading.Lock()
        self._node_seq = 0
        self._desc_seq = 0

    def _node_name(self) -> str:
        with self._name_lock:
            self._node_seq += 1
            return f"{self._prefix}V{self._node_seq}"

    def _desc_name(self) -> str:
        with self._name_lock:
            self._desc_seq += 1
            return f"{self._prefix}D{self._desc_seq}"

    def alloc_node(self, value) -> VNode:
        free = self._free.nodes
        node = free.pop() if free else VNode()
        node.value = value
        node.ts = TBD
        node.left = None
        node.right = None
        node.status = 0
        node.counter = 0
        node.priority = 0
        node.left_desc = None
        node.right_desc = None
        node.refcount = 0
        node.canary = True
        node.name = self._node_name()
        self.ledger.vnodes_allocated.add()
        return node

    def alloc_descriptor(self, a, b, c) -> Descriptor:
        free = self._free.descriptors
        desc = free.pop() if free else Descriptor()
        desc.A = a
        desc.B = b
        desc.C = c
        desc.refcount = 0
        desc.canary = True
        desc.name = self._desc_name()
        self.ledger.descriptors_allocated.add()
        return desc

    def recycle(self, obj):
        if isinstance(obj, VNode):
            self.ledger.vnodes_destroyed.add()
            self._free.nodes.append(obj)
        else:
            self.ledger.descriptors_destroyed.add()
            self._free.descriptors.append(obj)


class GcMemory:
    """Baseline manager: raw accesses, no counting, nothing is destroyed."""

    counting = False

    def __init__(self, rt, pool: ObjectPool):
        self.rt = rt
        self.pool = pool

    def alloc_node(self, value) -> VNode:
        return self.pool.alloc_node(value)

    def alloc_descriptor(self, a, b, c) -> Descriptor:
        return self.pool.alloc_descriptor(a, b, c)

    def acquire_field(self, obj, fieldname):
        return self.rt.read(obj, fieldname)

    def cas_field(self, obj, fieldname, expected, new) -> bool:
        return self.rt.cas(obj, fieldname, expected, new)

    def init_link(self, obj, fieldname, value):
        setattr(obj, fieldname, value)  # object not yet published

    def write_known(self, obj, fieldname, old, new):
        self.rt.write(obj, fieldname, new)

    def ref_inc(self, obj):
        pass

    def release_ref(self, obj):
        pass


class RcMemory:
    """Counted manager; see the module docstring for the rules."""

    counting = True

    def __init__(self, rt, pool: ObjectPool, debug: bool = True):
        self.rt = rt
        self.pool = pool
        self.debug = debug

    # -- allocation (fresh objects start with one local pin) ---------------

    def alloc_node(self, value) -> VNode:
        node = self.pool.alloc_node(value)
        node.refcount = 1
        return node

    def alloc_descriptor(self, a, b, c) -> Descriptor:
        desc = self.pool.alloc_descriptor(a, b, c)
        desc.refcount = 1
        for target in (a, b, c):
            if _countable(target):
                self.rt.ref_adjust(target, 1)
        return desc

    # -- counted field operations ------------------------------------------

    def acquire_field(self, obj, fieldname):
        """Read a counted field and pin its target.

        The caller must itself hold the field's owner; the field's own
        reference keeps the target alive across the read+increment, which
        runs under the field lock so no CAS can displace it in between.
        """
        rt = self.rt
        with rt.field_lock(obj, fieldname):
            value = rt.read(obj, fieldname)
            if _countable(value):
                if self.debug and not value.canary:
                    raise ContractViolation(
                        f"acquired destroyed object {value.name}")
                rt.ref_adjust(value, 1)
        return value

    def cas_field(self, obj, fieldname, expected, new) -> bool:
        rt = self.rt
        if _countable(new):
            rt.ref_adjust(new, 1)
        ok = rt.cas(obj, fieldname, expected, new)
        if ok:
            if _countable(expected):
                self._dec(expected)
        elif _countable(new):
            self._dec(new)
        return ok

    def init_link(self, obj, fieldname, value):
        # Pre-publication initialization: counted, but no old value exists.
        if _countable(value):
            self.rt.ref_adjust(value, 1)
        setattr(obj, fieldname, value)

    def write_known(self, obj, fieldname, old, new):
        """Counted plain write for fields that provably cannot be CASed
        concurrently (a spliced-out node's own links)."""
        if _countable(new):
            self.rt.ref_adjust(new, 1)
        self.rt.write(obj, fieldname, new)
        if _countable(old):
            self._dec(old)

    # -- pins ----------------------------------------------------------------

    def ref_inc(self, obj):
        if _countable(obj):
            if self.debug and not obj.canary:
                raise ContractViolation(f"pinned destroyed object {obj.name}")
            self.rt.ref_adjust(obj, 1)

    def release_ref(self, obj):
        if _countable(obj):
            self._dec(obj)

    # -- destruction ------------------------------------------------------------

    def _dec(self, obj):
        count = self.rt.ref_adjust(obj, -1)
        if self.debug and count < 0:
            raise ContractViolation(f"refcount of {obj.name} went negative")
        if count == 0:
            self._destroy(obj)

    def _destroy(self, first):
        """Zero-count teardown; iterative so long dead chains cannot blow
        the Python stack.  Each cleared field charges at most one decrement
        to the write that installed it."""
        work = [first]
        while work:
            obj = work.pop()
            if self.debug and not obj.canary:
                raise ContractViolation(f"double destroy of {obj.name}")
            obj.canary = False
            for fieldname in obj._counted_fields_:
                target = getattr(obj, fieldname)
                setattr(obj, fieldname, None)
                if _countable(target):
                    count = self.rt.ref_adjust(target, -1)
                    if count == 0:
                        work.append(target)
            self.pool.recycle(obj)


class CountedHandle:
    """Application-facing pin on a node or descriptor.

    Holding a live handle defers the target's destruction.  Release exactly
    once; double release raises.  Usable as a context manager.
    """

    __slots__ = ("target", "_mem", "_ledger", "_released")

    def __init__(self, mem, ledger: AllocationLedger, target):
        self.target = target
        self._mem = mem
        self._ledger = ledger
        self._released = False
        mem.ref_inc(target)
        ledger.live_handles.add()

    def release(self):
        if self._released:
            raise ContractViolation("handle released twice")
        self._released = True
        self._ledger.live_handles.add(-1)
        self._mem.release_ref(self.target)

    def __enter__(self):
        return self.target

    def __exit__(self, *exc):
        if not self._released:
            self.release()
        return False


def acquire(ctx, obj, fieldname) -> CountedHandle:
    """Pin the current target of a counted field and hand back a handle."""
    target = ctx.mem.acquire_field(obj, fieldname)
    handle = CountedHandle(ctx.mem, ctx.ledger, target)
    # acquire_field already pinned once; fold that pin into the handle.
    ctx.mem.release_ref(target)
    return handle


class ListContext:
    """Everything a version list needs: runtime, memory manager, mode
    flags, debug switches, and operation counters."""

    def __init__(self, rt, *, reclaiming: bool = True, debug: bool = True,
                 trace_ops: bool | None = None, check_depth: bool = False,
                 check_find_distinct: bool = False, name_prefix: str = ""):
        self.rt = rt
        self.reclaiming = reclaiming
        self.debug = debug
        # Under simulation we always want the op-level trace.
        self.trace_ops = bool(getattr(rt, "is_sim", False)) if trace_ops is None \
            else trace_ops
        self.check_depth = check_depth
        self.check_find_distinct = check_find_distinct
        self.ledger = AllocationLedger()
        self.pool = ObjectPool(self.ledger, name_prefix)
        if reclaiming:
            self.mem = RcMemory(rt, self.pool, debug=debug)
        else:
            self.mem = GcMemory(rt, self.pool)
        self.appends = ShardedCounter()
        self.removes = ShardedCounter()
        self.remove_rec_calls = ShardedCounter()
        self._list_seq = 0
        self._list_lock = threading.Lock()

    def next_list_name(self) -> str:
        with self._list_lock:
            self._list_seq += 1
            return f"L{self._list_seq}"
