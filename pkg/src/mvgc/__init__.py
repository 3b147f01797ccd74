"""Concurrent multiversion garbage collection toolkit.

Three composable layers plus verification tooling:

* range tracking (``tracker``): batched identification of deprecated
  objects whose timestamp intervals no longer cover any announcement;
* version lists (``vlist``): restricted lock-free doubly-linked lists
  with wait-free removal from anywhere;
* reclamation (``reclaim``): eager reference counting over nodes and
  splice descriptors, with a poisoning pool allocator and ledger;
* the snapshot store (``store``): a global timestamp, versioned CAS
  cells, and host-record lifecycle routing;
* a deterministic verification harness (``harness``, ``invariants``,
  ``oracles``, ``scenarios``) and a benchmark CLI (``bench``, ``cli``).
"""

from .errors import (CapacityError, ContractViolation, InvariantViolation,
                     MvgcError, SchedulingError)
from .reclaim import (AllocationLedger, CountedHandle, GcMemory, ListContext,
                      ObjectPool, RcMemory, acquire)
from .runtime import (EMPTY, FINALIZED, MARKED, TBD, TOP, UNMARKED, UNSET,
                      SharedInt, ShardedCounter, SimRuntime, ThreadedRuntime)
from .store import (ABSENT, Camera, DNodeRecord, MapSnapshot, StoreHandle,
                    VersionedCAS, VersionedMap, VersionedStore)
from .tracker import (AnnouncementSlot, Range, RangeTracker, TrackerConfig,
                      TrackerHandle, default_batch_size, intersect,
                      merge_pools, split_pool)
from .vlist import (FROZEN, Descriptor, VersionList, VNode,
                    lr_reachable_count, priority_of, remove)

__all__ = [
    "ABSENT", "AllocationLedger", "AnnouncementSlot", "Camera",
    "CapacityError", "ContractViolation", "CountedHandle", "Descriptor",
    "DNodeRecord", "EMPTY", "FINALIZED", "FROZEN", "GcMemory",
    "InvariantViolation", "ListContext", "MapSnapshot", "MARKED",
    "MvgcError", "ObjectPool", "Range", "RangeTracker", "RcMemory",
    "SchedulingError", "SharedInt", "ShardedCounter", "SimRuntime",
    "StoreHandle", "TBD", "ThreadedRuntime", "TOP", "TrackerConfig",
    "TrackerHandle", "UNMARKED", "UNSET", "VersionList", "VersionedCAS",
    "VersionedMap", "VersionedStore", "VNode", "acquire",
    "default_batch_size", "intersect", "lr_reachable_count", "merge_pools",
    "priority_of", "remove", "split_pool",
]

__version__ = "0.1.0"
