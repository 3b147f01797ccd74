"""Acceptance suite: one test per criterion, at full stated sizes.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
pass lines.  The whole module takes several minutes; every bound and
tolerance is pinned in the assertions below.
"""

import bisect
import math
import random
import threading
import time

import numpy as np
import pytest

from helpers import interval_covers, tree_depths
from mvgc import (ListContext, RangeTracker, SharedInt, ThreadedRuntime,
                  TrackerConfig, VersionList, VersionedStore, intersect,
                  lr_reachable_count, priority_of)
from mvgc import vlist as V
from mvgc.bench import _Quiesce
from mvgc.harness import explore
from mvgc.scenarios import SCENARIOS
from mvgc.tracker import Range


def report(n, text):
    print(f"\n[criterion {n:2d}] PASS: {text}")


# -----------------------------------------------------------------------------


def test_c01_intersect_oracle_equivalence():
    """10^5 random instances against a vectorized per-element check."""
    rng = np.random.default_rng(20231115)
    instances = 100_000
    started = time.perf_counter()
    checked = 0
    for _ in range(instances):
        npool = int(rng.integers(0, 65))
        nann = int(rng.integers(0, 17))
        lows = rng.integers(0, 120, npool)
        widths = rng.integers(0, 40, npool)
        highs = lows + widths
        order = np.argsort(highs, kind="stable")
        lows, highs = lows[order], highs[order]
        announced = np.sort(rng.integers(0, 150, nann))
        pool = [Range(i, int(lows[i]), int(highs[i])) for i in range(npool)]
        redundant, needed = intersect(pool, [int(a) for a in announced])
        if npool:
            hit = ((lows[:, None] <= announced[None, :])
                   & (announced[None, :] < highs[:, None])).any(axis=1) \
                if nann else np.zeros(npool, dtype=bool)
            expected_needed = set(np.flatnonzero(hit).tolist())
        else:
            expected_needed = set()
        assert set(redundant) == set(range(npool)) - expected_needed
        assert {r.payload for r in needed} == expected_needed
        checked += npool
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0, f"took {elapsed:.1f}s"
    report(1, f"{instances} instances ({checked} ranges) matched the "
              f"brute-force partition in {elapsed:.1f}s")


# -----------------------------------------------------------------------------


def test_c02_tracker_return_discipline():
    """P=8 threads, 10^6 deprecates: once-only returns, announcement
    exclusion at and after each return, and per-call return cap 4B."""
    P = 8
    per_thread = 125_000
    rt = ThreadedRuntime()
    tracker = RangeTracker(rt, TrackerConfig(P), debug=False,
                           record_history=True)
    handles = [tracker.register() for _ in range(P)]
    clock = SharedInt(1, "clock")
    b = tracker.batch
    lows = [np.zeros(per_thread, dtype=np.int64) for _ in range(P)]
    highs = [np.zeros(per_thread, dtype=np.int64) for _ in range(P)]
    max_batch = [0] * P

    errors = []

    def worker(pid):
        try:
            handle = handles[pid]
            rng = random.Random(pid * 7919)
            my_lows, my_highs = lows[pid], highs[pid]
            announced = False
            for i in range(per_thread):
                now = rt.read(clock, "value")
                high = now
                low = max(0, high - rng.randrange(0, 4))
                my_lows[i] = low
                my_highs[i] = high
                got = tracker.deprecate(handle, (pid << 40) | i, low, high)
                if got:
                    max_batch[pid] = max(max_batch[pid], len(got))
                if rng.random() < 0.02:
                    rt.cas(clock, "value", now, now + 1)
                if pid < 2 and i % 500 == 250:
                    if announced:
                        tracker.unannounce(handle)
                        announced = False
                    else:
                        tracker.announce(handle, clock)
                        announced = True
            if announced:
                tracker.unannounce(handle)
        except Exception as exc:
            errors.append(repr(exc))

    threads = [threading.Thread(target=worker, args=(pid,))
               for pid in range(P)]
    started = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors, errors
    drain_mark = next(tracker.seq)
    for _ in range(6):
        for handle in handles:
            tracker.drain_flush(handle)
        if tracker.outstanding() == 0:
            break
    assert tracker.outstanding() == 0

    # -- offline checks over the event history ---------------------------
    events = tracker.merged_history()
    total = P * per_thread

    def payload_interval(payload):
        pid, i = payload >> 40, payload & ((1 << 40) - 1)
        return int(lows[pid][i]), int(highs[pid][i])

    returned = set()
    active = {}
    for ev in events:
        if ev[1] == "ann":
            active[ev[2]] = ev[3]
        elif ev[1] == "unann":
            active.pop(ev[2], None)
        elif ev[1] == "ret":
            if ev[0] < drain_mark:
                assert len(ev[2]) <= 4 * b, f"batch of {len(ev[2])} > 4B"
            for payload in ev[2]:
                assert payload not in returned, f"{payload} returned twice"
                returned.add(payload)
                low, high = payload_interval(payload)
                for value in active.values():
                    assert not interval_covers(low, high, value), (
                        f"returned {payload} while {value} announced")
    assert len(returned) == total, (len(returned), total)

    # announcements that began after a return must also miss its interval
    future_values = []
    for ev in reversed(events):
        if ev[1] == "ann":
            bisect.insort(future_values, ev[3])
        elif ev[1] == "ret":
            for payload in ev[2]:
                low, high = payload_interval(payload)
                idx = bisect.bisect_left(future_values, low)
                assert not (idx < len(future_values)
                            and future_values[idx] < high), (
                    f"later announcement inside [{low},{high})")
    elapsed = time.perf_counter() - started
    report(2, f"{total} deprecates across {P} threads: every payload "
              f"returned exactly once, no announcement intersections, "
              f"max batch {max(max_batch)} <= {4*b} ({elapsed:.0f}s)")


# -----------------------------------------------------------------------------


def test_c03_tracker_drain_liveness_and_plateau():
    P = 8
    # (i) with no announcements, three maintenance flushes per process
    # empty the tracker completely
    rt = ThreadedRuntime()
    tracker = RangeTracker(rt, TrackerConfig(P), debug=False)
    handles = [tracker.register() for _ in range(P)]
    n = 200_000
    for i in range(n):
        tracker.deprecate(handles[i % P], i, i, i + 1)
    for _ in range(3):
        for handle in handles:
            tracker.drain_flush(handle)
    assert tracker.outstanding() == 0

    # (ii) one pinned announcement covering H intervals: outstanding
    # plateaus under 2H + 25 P^2 ceil(log2 P)
    rt = ThreadedRuntime()
    tracker = RangeTracker(rt, TrackerConfig(P), debug=False)
    handles = [tracker.register() for _ in range(P)]
    pin_value = 1000
    tracker.announce(handles[0], SharedInt(pin_value))
    H = 300
    for k in range(H):
        tracker.deprecate(handles[1 + k % (P - 1)], ("pin", k),
                          pin_value - 1, pin_value + 1)
    bound = 2 * H + 25 * P * P * math.ceil(math.log2(P))
    extra = 400_000
    worst = 0
    for i in range(extra):
        ts = pin_value + 2 + i
        tracker.deprecate(handles[1 + i % (P - 1)], i, ts, ts + 1)
        if i % 20_000 == 19_999:
            outstanding = tracker.outstanding()
            worst = max(worst, outstanding)
            assert outstanding <= bound, (outstanding, bound)
    report(3, f"drained to zero after 3 flush phases; with H={H} pinned, "
              f"outstanding peaked at {worst} <= {bound} over {extra} "
              f"further deprecates")


# -----------------------------------------------------------------------------


def test_c04_priority_function_properties():
    limit = 1 << 16
    depths = tree_depths(limit)
    counters = np.arange(2, limit + 1)
    bound = 2 * np.floor(np.log2(counters)).astype(np.int64) + 1
    assert (depths[2:] <= bound).all()

    prio = np.array([priority_of(c) for c in range(2, limit + 1)],
                    dtype=np.int64)
    by_priority = {}
    for c, p in zip(range(2, limit + 1), prio):
        by_priority.setdefault(int(p), []).append(c)
    pairs = 0
    for p, cs in by_priority.items():
        for a, b in zip(cs, cs[1:]):
            assert b - a >= 2, (a, b, p)
            assert prio[a + 1 - 2:b - 2].min() < p, (a, b, p)
            pairs += 1
    report(4, f"counters 2..2^16: depth bound 2*floor(log2 c)+1 holds; "
              f"{pairs} equal-priority neighbour pairs all separated")


# -----------------------------------------------------------------------------


def test_c05_list_exhaustive_linearizability():
    started = time.perf_counter()
    plan = [
        ("list-adjacent@baseline", 14),
        ("list-adjacent@reclaiming", 14),
        ("list-remove-append@reclaiming", 14),
        ("list-remove-find@reclaiming", 14),
        ("list-three@reclaiming", 10),
    ]
    total_runs = 0
    for name, depth in plan:
        result = explore(SCENARIOS[name], max_steps=depth)
        assert result.ok, f"{name}: {result.failure}"
        total_runs += result.runs
    elapsed = time.perf_counter() - started
    assert elapsed < 600, f"took {elapsed:.0f}s"
    report(5, f"{total_runs} interleavings across {len(plan)} append/remove/"
              f"find mixes, all linearizable and invariant-clean "
              f"({elapsed:.0f}s < 10min)")


# -----------------------------------------------------------------------------


def test_c06_remove_wait_freedom_and_amortization():
    R = 1_000_000
    ctx = ListContext(ThreadedRuntime(), reclaiming=False, debug=False,
                      check_depth=True)
    lst = VersionList(ctx)
    nodes = []
    prev = None
    for i in range(R + 1):
        node = ctx.mem.alloc_node(i)
        node.ts = i
        assert lst.try_append(prev, node)
        nodes.append(node)
        prev = node
    victims = nodes[:-1]
    random.Random(123).shuffle(victims)
    started = time.perf_counter()
    for node in victims:
        V.remove(ctx, node)  # check_depth asserts depth <= priority inline
    elapsed = time.perf_counter() - started
    calls = ctx.remove_rec_calls.value()
    assert calls <= 4 * R, (calls, R)
    assert lr_reachable_count([lst]) == 1
    report(6, f"R={R} removes: every chain within its node's priority, "
              f"{calls} total splice-loop iterations = {calls/R:.2f}R <= 4R "
              f"({elapsed:.0f}s)")


# -----------------------------------------------------------------------------


def test_c07_sequential_exactness_and_zero_leaks():
    L = 100_000
    ctx = ListContext(ThreadedRuntime(), reclaiming=True, debug=False)
    lst = VersionList(ctx)
    nodes = []
    prev = None
    for i in range(L):
        node = ctx.mem.alloc_node(i)
        node.ts = i
        assert lst.try_append(prev, node)
        ctx.mem.release_ref(node)
        nodes.append(node)
        prev = node
    victims = nodes[:-1]
    random.Random(7).shuffle(victims)
    for node in victims:
        V.remove(ctx, node)
    assert ctx.appends.value() == L
    assert ctx.removes.value() == L - 1
    reachable = lr_reachable_count([lst])
    assert reachable == L - (L - 1) == 1
    lst.dismantle()
    snap = ctx.ledger.snapshot()
    assert snap["live_vnodes"] == 0, snap
    assert snap["live_descriptors"] == 0, snap
    report(7, f"L={L}, R={L-1}: lr-reachable hit L-R exactly; ledger "
              f"returned to zero at teardown")


# -----------------------------------------------------------------------------


def test_c08_concurrent_space_bound():
    P = 8
    NLISTS = 64
    target_appends = 1_000_000
    per_thread = target_appends // (P - 1)
    ctx = ListContext(ThreadedRuntime(), reclaiming=False, debug=False)
    lists = [VersionList(ctx) for _ in range(NLISTS)]
    floors = []
    for lst in lists:
        node = ctx.mem.alloc_node("floor")
        node.ts = 0
        lst.try_append(None, node)
        floors.append(node)

    quiesce = _Quiesce(P)
    per_list_appends = [[0] * NLISTS for _ in range(P)]
    parked_ready = threading.Event()
    finish_parked = threading.Event()
    samples = []
    errors = []

    def worker(pid):
        try:
            rng = random.Random(pid * 31 + 5)
            counts = per_list_appends[pid]
            candidates = []
            for i in range(per_thread):
                idx = rng.randrange(NLISTS)
                lst = lists[idx]
                head = lst.get_head()
                node = ctx.mem.alloc_node(i)
                node.ts = head.counter
                if lst.try_append(head, node):
                    counts[idx] += 1
                    candidates.append(head)
                    if len(candidates) > 4 and rng.random() < 0.85:
                        V.remove(ctx, candidates.pop(
                            rng.randrange(len(candidates))))
                quiesce.checkpoint()
            for node in candidates:
                V.remove(ctx, node)
                quiesce.checkpoint()
        except Exception as exc:  # surfaced after join
            errors.append(repr(exc))
        finally:
            quiesce.done()

    def parked(pid):
        # Take one removal through mark+freeze, then stall mid-remove
        # until the main workload finishes.  Leaves the workload's
        # quiescence protocol immediately so sampling never waits on it.
        try:
            lst = lists[0]
            while True:
                head = lst.get_head()
                node = ctx.mem.alloc_node("parked")
                node.ts = head.counter
                if lst.try_append(head, node):
                    ctx.mem.release_ref(node)
                    break
                ctx.mem.release_ref(node)
                ctx.mem.release_ref(head)
            per_list_appends[pid][0] += 1
            V.mark_and_freeze(ctx, head)
        except Exception as exc:
            errors.append(repr(exc))
            head = None
        finally:
            quiesce.done()
            parked_ready.set()
        finish_parked.wait()
        if head is not None:
            V.finish_remove(ctx, head)
            ctx.mem.release_ref(head)

    def bound_of(L, R, l_max):
        return 2 * max(L - R, 0) + 30 * P * math.ceil(
            math.log2(max(l_max, 2)))

    threads = [threading.Thread(target=worker, args=(pid,))
               for pid in range(P - 1)]
    threads.append(threading.Thread(target=parked, args=(P - 1,)))
    started = time.perf_counter()
    for t in threads:
        t.start()
    parked_ready.wait()
    while any(t.is_alive() for t in threads[:-1]):
        time.sleep(0.7)
        quiesce.quiesce()
        L = ctx.appends.value()
        R = ctx.removes.value()
        l_max = max(sum(col) for col in zip(*per_list_appends)) + 1
        reachable = lr_reachable_count(lists)
        samples.append((reachable, L, R, bound_of(L, R, l_max)))
        quiesce.resume()
    finish_parked.set()
    for t in threads:
        t.join()
    assert not errors, errors
    L = ctx.appends.value()
    R = ctx.removes.value()
    l_max = max(sum(col) for col in zip(*per_list_appends)) + 1
    samples.append((lr_reachable_count(lists), L, R, bound_of(L, R, l_max)))
    for reachable, sl, sr, limit in samples:
        assert reachable <= limit, (reachable, sl, sr, limit)
    elapsed = time.perf_counter() - started
    assert L >= target_appends
    report(8, f"P={P}, L={L}, R={R}, one thread parked mid-remove: "
              f"{len(samples)} samples all within 2(L-R)+30*P*log2(Lmax) "
              f"({elapsed:.0f}s)")


# -----------------------------------------------------------------------------


def test_c09_snapshot_correctness():
    started = time.perf_counter()
    plan = [
        ("snapshot-query@reclaiming", 14),
        ("snapshot-two-writers@reclaiming", 14),
        ("snapshot-three@reclaiming", 10),
    ]
    total_runs = 0
    for name, depth in plan:
        result = explore(SCENARIOS[name], max_steps=depth)
        assert result.ok, f"{name}: {result.failure}"
        total_runs += result.runs

    # randomized stress with quiescent cross-checks
    P = 8
    store = VersionedStore(P, mode="reclaiming", debug=False)
    cells = [store.new_cell(0) for _ in range(12)]
    handles = [store.register_process() for _ in range(P)]
    quiesce = _Quiesce(P - 2)
    held = []  # (handle, ts, expected tuple) for long-lived snapshots
    for pid in (P - 2, P - 1):
        handle = handles[pid]
        ts = store.take_snapshot(handle)
        held.append((handle, ts, tuple(c.read_version(ts) for c in cells)))

    per_thread = 12_000
    errors = []
    mismatches = []

    def worker(pid):
        try:
            handle = handles[pid]
            rng = random.Random(pid * 17)
            for i in range(per_thread):
                r = rng.random()
                if r < 0.6:
                    cell = cells[rng.randrange(len(cells))]
                    cell.v_cas(handle, cell.v_read(), rng.randrange(1 << 20))
                else:
                    ts = store.take_snapshot(handle)
                    for k in range(4):
                        cells[(i + k) % len(cells)].read_version(ts)
                    store.unreserve(handle)
                quiesce.checkpoint()
        except Exception as exc:
            errors.append(repr(exc))
        finally:
            quiesce.done()

    threads = [threading.Thread(target=worker, args=(pid,))
               for pid in range(P - 2)]
    for t in threads:
        t.start()
    checks = 0
    while any(t.is_alive() for t in threads):
        time.sleep(0.4)
        quiesce.quiesce()
        # held snapshots still read their original tuples
        for handle, ts, expected in held:
            got = tuple(c.read_version(ts) for c in cells)
            if got != expected:
                mismatches.append((ts, got, expected))
        checks += 1
        quiesce.resume()
    for t in threads:
        t.join()
    assert not errors, errors
    assert not mismatches, mismatches
    for handle, ts, expected in held:
        assert tuple(c.read_version(ts) for c in cells) == expected
        store.unreserve(handle)
    elapsed = time.perf_counter() - started
    report(9, f"{total_runs} exhaustive snapshot interleavings linearizable; "
              f"held snapshots stable across {checks} quiescent cross-checks "
              f"under {per_thread*(P-2)} concurrent ops ({elapsed:.0f}s)")


# -----------------------------------------------------------------------------


def test_c10_intermediate_version_reclamation():
    updates = 100_000
    store = VersionedStore(2, mode="reclaiming", debug=False)
    updater = store.register_process()
    holder = store.register_process()
    cell = store.new_cell(0)
    assert cell.v_cas(updater, 0, 1)
    snapshot_ts = store.take_snapshot(holder)
    pinned_value = cell.read_version(snapshot_ts)
    # Everything between the pinned version and the running head should be
    # reclaimed on the fly.  The allowance covers the current and pinned
    # versions plus what the batching pipeline is allowed to hold
    # (tracker pools of size B..2B plus splice leftovers).
    allowance = 2 + 30
    worst = 0
    value = 1
    for i in range(updates):
        assert cell.v_cas(updater, value, value + 1)
        value += 1
        if i % 5_000 == 4_999:
            live = store.ctx.ledger.live_vnodes()
            worst = max(worst, live)
            assert live <= allowance, (live, allowance)
    assert cell.read_version(snapshot_ts) == pinned_value
    assert cell.v_read() == value
    epoch_model_retention = updates  # oldest-active-snapshot retention
    assert worst * 100 < epoch_model_retention
    store.unreserve(holder)
    ledger = store.teardown([updater, holder])
    assert ledger["live_vnodes"] == 0
    report(10, f"{updates} updates under a held snapshot: live versions "
               f"peaked at {worst} <= {allowance} (epoch-style retention "
               f"would hold {epoch_model_retention})")


# -----------------------------------------------------------------------------


def test_c11_traversal_distinctness():
    # explored schedules: the reclaiming find scenario re-checked with the
    # trace invariant (find-distinct) plus the in-find assertion armed
    result = explore(SCENARIOS["list-remove-find@reclaiming"], max_steps=12)
    assert result.ok, result.failure

    # stress: long traversals across freshly spliced-out regions, with the
    # per-find distinctness sets armed in the implementation
    P = 6
    NLISTS = 16
    ctx = ListContext(ThreadedRuntime(), reclaiming=True, debug=False,
                      check_find_distinct=True)
    lists = []
    for _ in range(NLISTS):
        lst = VersionList(ctx)
        floor = ctx.mem.alloc_node("floor")
        floor.ts = 0
        lst.try_append(None, floor)
        ctx.mem.release_ref(floor)
        lists.append(lst)

    finds = [0] * P
    errors = []

    def worker(pid):
        try:
            rng = random.Random(pid * 97)
            candidates = []
            for i in range(25_000):
                lst = lists[rng.randrange(NLISTS)]
                head = lst.get_head()
                if rng.random() < 0.3:
                    # full-chain traversal: target 0 sits at the floor
                    # node, whose interval no removal ever touches
                    found = lst.find(head, 0)
                    assert found is not None and found.value == "floor"
                    ctx.mem.release_ref(found)
                    finds[pid] += 1
                else:
                    node = ctx.mem.alloc_node(i)
                    node.ts = head.counter
                    if lst.try_append(head, node):
                        candidates.append(head)
                        if len(candidates) > 3:
                            victim = candidates.pop(
                                rng.randrange(len(candidates)))
                            if victim.value != "floor":
                                V.remove(ctx, victim)
                    ctx.mem.release_ref(node)
                ctx.mem.release_ref(head)
        except Exception as exc:
            errors.append(repr(exc))

    threads = [threading.Thread(target=worker, args=(pid,))
               for pid in range(P)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors, errors
    report(11, f"every find's upward sources and forward destinations "
               f"distinct across {result.runs} explored schedules and "
               f"{sum(finds)} stressed traversals")
