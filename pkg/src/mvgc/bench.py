"""Workload driver: times update/read/snapshot mixes against a versioned
store and samples space metrics at quiescent points.

The report separates deterministic content (operation counts and results,
per-operation step histograms, the space-metrics time series, all keyed by
operation counts rather than wall time) from timing.  At one thread with a
fixed seed the deterministic content is bit-stable across runs, which
``deterministic_digest`` certifies; wall-clock throughput is reported but
excluded from that guarantee.
"""

import hashlib
import json
import random
import threading
import time
from dataclasses import dataclass, field

from .harness import measure_space
from .runtime import ThreadedRuntime
from .store import VersionedStore

SCHEMA_VERSION = "mvgc-bench-1"

_OP_CLASSES = ("update", "read", "snapshot")
_HIST_CAP = 256  # step-histogram bucket ceiling; larger counts land here


@dataclass
class WorkloadSpec:
    threads: int = 1
    ops: int = 10000
    update_ratio: float = 0.5
    snapshot_ratio: float = 0.1
    query_length: int = 8
    seed: int = 0
    mode: str = "reclaiming"
    cells: int = 64

    def validate(self):
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.ops < 0:
            raise ValueError("ops must be >= 0")
        for name in ("update_ratio", "snapshot_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.update_ratio + self.snapshot_ratio > 1.0:
            raise ValueError("update_ratio + snapshot_ratio must be <= 1")
        if not 1 <= self.query_length <= self.cells:
            raise ValueError("query_length must be in [1, cells]")
        if self.mode not in ("baseline", "reclaiming"):
            raise ValueError("mode must be baseline or reclaiming")


@dataclass
class MetricsReport:
    spec: dict
    op_counts: dict
    steps_hist: dict
    samples: list
    violations: list
    elapsed_s: float
    throughput: dict
    schema: str = SCHEMA_VERSION

    def deterministic_payload(self) -> dict:
        return {
            "schema": self.schema,
            "spec": self.spec,
            "op_counts": self.op_counts,
            "steps_hist": self.steps_hist,
            "samples": self.samples,
            "violations": self.violations,
        }

    def deterministic_digest(self) -> str:
        payload = json.dumps(self.deterministic_payload(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()

    def as_dict(self) -> dict:
        out = self.deterministic_payload()
        out["digest"] = self.deterministic_digest()
        out["timing"] = {
            "elapsed_s": self.elapsed_s,
            "throughput_ops_per_s": self.throughput,
        }
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        lines = [f"# schema={self.schema}"]
        for cls in _OP_CLASSES:
            lines.append(
                f"# {cls}_attempted={self.op_counts[cls]['attempted']}"
                f" {cls}_succeeded={self.op_counts[cls]['succeeded']}")
        lines.append(f"# digest={self.deterministic_digest()}")
        lines.append(f"# elapsed_s={self.elapsed_s:.6f}")
        if self.samples:
            cols = ["sample", "ops_done"] + sorted(
                k for k in self.samples[0] if k not in ("sample", "ops_done"))
            lines.append(",".join(cols))
            for row in self.samples:
                lines.append(",".join(str(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


class _Quiesce:
    """Cooperative stop-the-workers barrier for space sampling."""

    def __init__(self, workers: int):
        self._cv = threading.Condition()
        self._active = workers
        self._parked = 0
        self.pause = False

    def checkpoint(self):
        if not self.pause:
            return
        with self._cv:
            self._parked += 1
            self._cv.notify_all()
            while self.pause:
                self._cv.wait()
            self._parked -= 1
            self._cv.notify_all()

    def done(self):
        with self._cv:
            self._active -= 1
            self._cv.notify_all()

    def quiesce(self):
        with self._cv:
            self.pause = True
            while self._parked < self._active:
                self._cv.wait()

    def resume(self):
        with self._cv:
            self.pause = False
            self._cv.notify_all()
            # Wait out the wakeups so a prompt next quiesce cannot mistake
            # still-parked workers for a fresh quiescent state.
            while self._parked > 0:
                self._cv.wait()


class _WorkerState:
    __slots__ = ("rng", "hist", "counts", "appends_per_cell", "ops_done")

    def __init__(self, spec: WorkloadSpec, pid: int):
        self.rng = random.Random(spec.seed * 1000003 + pid)
        self.hist = {cls: [0] * (_HIST_CAP + 1) for cls in _OP_CLASSES}
        self.counts = {cls: [0, 0] for cls in _OP_CLASSES}  # attempted, ok
        self.appends_per_cell = None
        self.ops_done = 0


def _worker_op(state: _WorkerState, store, handle, cells, spec, rt):
    rng = state.rng
    r = rng.random()
    before = rt.local_steps()
    if r < spec.update_ratio:
        cls = "update"
        idx = rng.randrange(len(cells))
        cell = cells[idx]
        current = cell.v_read()
        ok = cell.v_cas(handle, current, rng.randrange(1 << 30))
        if ok:
            state.appends_per_cell[idx] += 1
    elif r < spec.update_ratio + spec.snapshot_ratio:
        cls = "snapshot"
        ts = store.take_snapshot(handle)
        base = rng.randrange(len(cells))
        for k in range(spec.query_length):
            cells[(base + k) % len(cells)].read_version(ts)
        store.unreserve(handle)
        ok = True
    else:
        cls = "read"
        cells[rng.randrange(len(cells))].v_read()
        ok = True
    steps = rt.local_steps() - before
    state.hist[cls][min(steps, _HIST_CAP)] += 1
    counts = state.counts[cls]
    counts[0] += 1
    counts[1] += ok
    state.ops_done += 1


def _sample(store, cells, states, sample_idx: int, total_ops: int) -> dict:
    per_cell = [0] * len(cells)
    for state in states:
        for i, n in enumerate(state.appends_per_cell):
            per_cell[i] += n
    metrics = measure_space(
        store.ctx, [c.vlist for c in cells],
        trackers=[store.camera.tracker, store.record_tracker],
        l_max=(max(per_cell) + 1) if per_cell else 0,
    )
    store.ctx.ledger.update_high_water()
    row = {"sample": sample_idx, "ops_done": total_ops}
    row.update(metrics.as_dict())
    return row


def _sanity(row: dict, mode: str) -> list:
    problems = []
    if mode == "reclaiming" and row["lr_reachable"] > row["V"]:
        problems.append(
            f"sample {row['sample']}: lr_reachable {row['lr_reachable']} "
            f"exceeds live nodes {row['V']}")
    if row["outstanding_deprecated"] < 0:
        problems.append(f"sample {row['sample']}: negative outstanding")
    return problems


def run_bench(spec: WorkloadSpec, sample_every: int = 0,
              runtime=None) -> MetricsReport:
    """Execute the workload and collect the report.

    ``sample_every`` > 0 takes a space sample each time that many
    operations complete (a brief global pause; a measurement artifact,
    documented as such).  0 samples only at start and end.
    """
    spec.validate()
    rt = runtime if runtime is not None else ThreadedRuntime()
    rt.count_steps = True
    store = VersionedStore(spec.threads, mode=spec.mode, runtime=rt,
                           debug=False)
    cells = [store.new_cell(0) for _ in range(spec.cells)]
    handles = [store.register_process() for _ in range(spec.threads)]
    states = [_WorkerState(spec, pid) for pid in range(spec.threads)]
    for state in states:
        state.appends_per_cell = [0] * spec.cells
    samples = []
    violations = []

    per_worker = spec.ops // spec.threads
    extra = spec.ops % spec.threads
    quotas = [per_worker + (1 if pid < extra else 0)
              for pid in range(spec.threads)]

    started = time.perf_counter()
    samples.append(_sample(store, cells, states, 0, 0))

    if spec.threads == 1:
        state, handle = states[0], handles[0]
        next_sample = sample_every if sample_every else 0
        for i in range(quotas[0]):
            _worker_op(state, store, handle, cells, spec, rt)
            if sample_every and state.ops_done >= next_sample:
                row = _sample(store, cells, states, len(samples),
                              state.ops_done)
                violations.extend(_sanity(row, spec.mode))
                samples.append(row)
                next_sample += sample_every
    else:
        quiesce = _Quiesce(spec.threads)
        total = [0] * spec.threads

        def work(pid):
            state, handle = states[pid], handles[pid]
            for _ in range(quotas[pid]):
                _worker_op(state, store, handle, cells, spec, rt)
                total[pid] = state.ops_done
                quiesce.checkpoint()
            quiesce.done()

        threads = [threading.Thread(target=work, args=(pid,))
                   for pid in range(spec.threads)]
        for t in threads:
            t.start()
        if sample_every:
            next_sample = sample_every
            while any(t.is_alive() for t in threads):
                time.sleep(0.005)
                if sum(total) >= next_sample:
                    quiesce.quiesce()
                    done = sum(s.ops_done for s in states)
                    row = _sample(store, cells, states, len(samples), done)
                    violations.extend(_sanity(row, spec.mode))
                    samples.append(row)
                    quiesce.resume()
                    next_sample = max(next_sample + sample_every, done)
        for t in threads:
            t.join()

    done = sum(s.ops_done for s in states)
    row = _sample(store, cells, states, len(samples), done)
    violations.extend(_sanity(row, spec.mode))
    samples.append(row)
    elapsed = time.perf_counter() - started

    op_counts = {}
    steps_hist = {}
    throughput = {}
    for cls in _OP_CLASSES:
        attempted = sum(s.counts[cls][0] for s in states)
        succeeded = sum(s.counts[cls][1] for s in states)
        op_counts[cls] = {"attempted": attempted, "succeeded": succeeded}
        merged = [0] * (_HIST_CAP + 1)
        for s in states:
            for i, n in enumerate(s.hist[cls]):
                merged[i] += n
        # store sparsely: {steps: count}
        steps_hist[cls] = {str(i): n for i, n in enumerate(merged) if n}
        throughput[cls] = round(attempted / elapsed, 2) if elapsed > 0 else 0.0

    return MetricsReport(
        spec={
            "threads": spec.threads, "ops": spec.ops,
            "update_ratio": spec.update_ratio,
            "snapshot_ratio": spec.snapshot_ratio,
            "query_length": spec.query_length, "seed": spec.seed,
            "mode": spec.mode, "cells": spec.cells,
        },
        op_counts=op_counts,
        steps_hist=steps_hist,
        samples=samples,
        violations=violations,
        elapsed_s=round(elapsed, 6),
        throughput=throughput,
    )
