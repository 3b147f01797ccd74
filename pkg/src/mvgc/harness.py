"""Deterministic schedule execution, exhaustive exploration, and space
accounting.

A *scenario* bundles a factory that builds a fresh system on a simulation
runtime plus the per-process scripts to run against it and the sequential
oracle their operations are checked against.  A *schedule* fixes the
interleaving: either an explicit list of process indices (one per step;
each step lets that process perform exactly one shared access) or a
seeded random policy.  Replaying a schedule yields a bit-identical trace.

Exploration walks the tree of scheduler choices depth-first up to a step
bound, deterministically completes each run (round-robin) past the bound
so histories close, and checks every produced trace against the
structural invariants and the scenario's oracle.  The first failure is
minimized by greedy step deletion and reported with the violated
invariant.

Schedule file format: first line ``seed <int>``, then one process index
per line.  Report format: JSON with pass/fail, the violated invariant id,
and the (minimized) schedule.
"""

import json
import random
from dataclasses import dataclass, field

from .errors import SchedulingError
from .invariants import check_invariants
from .oracles import check_linearizable, extract_ops
from .runtime import SimRuntime


@dataclass
class Schedule:
    seed: int = 0
    steps: list = field(default_factory=list)
    policy: str = "explicit"  # "explicit" | "random"
    length: int = 0           # only for the random policy

    def to_text(self) -> str:
        lines = [f"seed {self.seed}"]
        lines.extend(str(pid) for pid in self.steps)
        return "\n".join(lines) + "\n"


def parse_schedule(text: str) -> Schedule:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("seed "):
        raise SchedulingError("schedule file must start with 'seed <int>'")
    seed = int(lines[0].split()[1])
    steps = [int(ln) for ln in lines[1:]]
    return Schedule(seed=seed, steps=steps)


@dataclass
class Scenario:
    """A named, reproducible concurrent situation."""

    name: str
    build: callable  # () -> ScenarioInstance


class ScenarioInstance:
    """One fresh system under a fresh simulation runtime."""

    def __init__(self, runtime: SimRuntime, scripts, oracle=None,
                 op_kinds=None, post_check=None):
        self.runtime = runtime
        self.scripts = scripts
        self.oracle = oracle
        self.op_kinds = op_kinds
        self.post_check = post_check  # callable(instance) after completion


def run_schedule(factory, schedule: Schedule):
    """Execute exactly the given interleaving; returns the event trace.

    Explicit steps that name a finished process are consumed as no-ops.
    Processes still unfinished when the steps run out are unwound, so the
    trace covers precisely the scheduled prefix.
    """
    instance = factory()
    if schedule.policy == "random":
        rng = random.Random(schedule.seed)
        limit = schedule.length

        def pick(i, runnable):
            if i >= limit:
                return None
            return rng.choice(runnable)
    else:
        steps = schedule.steps

        def pick(i, runnable):
            if i >= len(steps):
                return None
            return steps[i]

    instance.runtime.run(instance.scripts, pick, completion="abort")
    return instance.runtime.trace


@dataclass
class ExplorationResult:
    ok: bool
    runs: int
    failure: "FailureReport | None" = None

    def as_dict(self) -> dict:
        out = {"pass": self.ok, "runs": self.runs}
        if self.failure is not None:
            out.update(self.failure.as_dict())
        else:
            out["invariant"] = None
        return out


@dataclass
class FailureReport:
    invariant: str    # invariant id, "linearizability", or "exception"
    message: str
    schedule: Schedule
    seq: int | None = None

    def as_dict(self) -> dict:
        return {
            "invariant": self.invariant,
            "message": self.message,
            "seq": self.seq,
            "schedule": {"seed": self.schedule.seed,
                         "steps": list(self.schedule.steps)},
        }


def _execute(instance, pick, completion="roundrobin", pool=None) -> str | None:
    """Run the scenario; a raised exception (contract violation, canary
    trip) is itself a checkable failure, not a harness crash."""
    try:
        instance.runtime.run(instance.scripts, pick, completion=completion,
                             pool=pool)
        return None
    except Exception as exc:
        return f"{type(exc).__name__}: {exc}"


def _check_run(instance, trace, error=None) -> tuple[str, str, int | None] | None:
    if error is not None:
        return ("exception", error, None)
    report = check_invariants(trace, quiescent=True)
    if not report.ok:
        return (report.invariant, report.message, report.seq)
    if instance.oracle is not None:
        ops = [op for op in extract_ops(trace, kinds=instance.op_kinds)
               if isinstance(op.pid, int)]
        if not check_linearizable(ops, instance.oracle):
            return ("linearizability", "no legal linearization", None)
    if instance.post_check is not None:
        message = instance.post_check(instance)
        if message:
            return ("post-check", message, None)
    return None


def explore(factory, max_steps: int, on_progress=None) -> ExplorationResult:
    """Exhaustive depth-first exploration of scheduler decisions.

    Every distinct interleaving of the first *max_steps* shared accesses
    is executed (deterministically completed past the bound), and each
    run is checked.  Stops at the first failing run and minimizes its
    schedule.
    """
    from .runtime import WorkerPool

    runs = 0
    pending = [[]]
    pool = None
    try:
        while pending:
            decisions = pending.pop()
            runs += 1
            instance = factory()
            if pool is None:
                pool = WorkerPool(len(instance.scripts))
            trace, taken, error = _run_with_frontiers(
                instance, decisions, max_steps, pending, pool)
            failure = _check_run(instance, trace, error)
            if failure:
                invariant, message, seq = failure
                sched = minimize(factory, taken, pool)
                return ExplorationResult(False, runs, FailureReport(
                    invariant, message, sched, seq))
            if on_progress is not None:
                on_progress(runs)
    finally:
        if pool is not None:
            pool.shutdown()
    return ExplorationResult(True, runs)


def _run_with_frontiers(instance, decisions, max_steps, pending, pool):
    """Run following *decisions*, extending greedily (always the lowest
    runnable pid) up to *max_steps*; every untried alternative along the
    extension is pushed onto *pending*.  Returns the trace, the full
    decision list actually taken, and any execution error."""
    taken = list(decisions)

    def pick(i, runnable):
        if i < len(taken):
            pid = taken[i]
            return pid if pid in runnable else runnable[0]
        if i >= max_steps:
            return None
        choice = runnable[0]
        for alt in runnable[1:]:
            pending.append(taken[:i] + [alt])
        taken.append(choice)
        return choice

    error = _execute(instance, pick, pool=pool)
    return instance.runtime.trace, taken, error


def _fails(factory, decisions, pool=None) -> bool:
    instance = factory()

    def pick(i, runnable):
        if i < len(decisions):
            pid = decisions[i]
            return pid if pid in runnable else runnable[0]
        return None

    error = _execute(instance, pick, pool=pool)
    return _check_run(instance, instance.runtime.trace, error) is not None


def minimize(factory, decisions, pool=None) -> Schedule:
    """Greedy one-step deletion: drop any decision whose removal keeps the
    run failing.  Deterministic, so the result reproduces the failure."""
    best = list(decisions)
    changed = True
    while changed:
        changed = False
        i = 0
        while i < len(best):
            candidate = best[:i] + best[i + 1:]
            if _fails(factory, candidate, pool):
                best = candidate
                changed = True
            else:
                i += 1
    return Schedule(seed=0, steps=best)


def replay_report(factory, schedule: Schedule) -> dict:
    """Run one schedule to completion and report pass/fail as JSON-ready
    data (the verify CLI's core)."""
    instance = factory()

    def pick(i, runnable):
        if i < len(schedule.steps):
            pid = schedule.steps[i]
            return pid if pid in runnable else runnable[0]
        return None

    error = _execute(instance, pick)
    failure = _check_run(instance, instance.runtime.trace, error)
    if failure:
        invariant, message, seq = failure
        return FailureReport(invariant, message, schedule, seq).as_dict() | {
            "pass": False}
    return {"pass": True, "invariant": None,
            "schedule": {"seed": schedule.seed,
                         "steps": list(schedule.steps)}}


# -- space accounting ------------------------------------------------------------


@dataclass
class SpaceMetrics:
    L: int = 0                      # successful appends
    R: int = 0                      # removes invoked
    L_max: int = 0                  # max appends on a single list
    lr_reachable: int = 0
    outstanding_deprecated: int = 0
    H: int = 0                      # currently needed deprecated objects
    K: int = 0                      # live application handles
    D: int = 0                      # live host records
    V: int = 0                      # live version nodes (ledger)
    live_descriptors: int = 0

    def as_dict(self) -> dict:
        return {
            "L": self.L, "R": self.R, "L_max": self.L_max,
            "lr_reachable": self.lr_reachable,
            "outstanding_deprecated": self.outstanding_deprecated,
            "H": self.H, "K": self.K, "D": self.D, "V": self.V,
            "live_descriptors": self.live_descriptors,
        }


def needed_count(tracker) -> int:
    """Deprecated objects whose interval currently covers an announcement.
    Quiescent use only."""
    announced = tracker.sort_announcements()
    if not announced:
        return 0
    pools = list(tracker.queue.snapshot())
    pools.extend(h.ldpool for h in tracker.handles)
    needed = 0
    for pool in pools:
        for r in pool:
            if any(r.low <= a < r.high for a in announced):
                needed += 1
    return needed


def measure_space(ctx, lists, trackers=(), l_max: int = 0,
                  records_live: int = 0) -> SpaceMetrics:
    """Walk live structure at a quiescent point and fill in the metrics.

    ``lists`` are the version lists to walk; ``trackers`` contribute
    outstanding/needed counts; ``l_max`` is the caller-tracked per-list
    append maximum."""
    from .vlist import lr_reachable_count

    ledger = ctx.ledger
    outstanding = sum(t.outstanding() for t in trackers)
    needed = sum(needed_count(t) for t in trackers)
    return SpaceMetrics(
        L=ctx.appends.value(),
        R=ctx.removes.value(),
        L_max=l_max,
        lr_reachable=lr_reachable_count(lists),
        outstanding_deprecated=outstanding,
        H=needed,
        K=ledger.live_handles.value(),
        D=records_live,
        V=ledger.live_vnodes(),
        live_descriptors=ledger.live_descriptors(),
    )


def dump_report(data: dict) -> str:
    return json.dumps(data, indent=2, sort_keys=True)
