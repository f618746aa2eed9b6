"""Safety monitors and a bounded exhaustive explorer.

Monitored properties:

* E1 -- agreement: no instance is committed with different dependency sets at
  different replicas.
* E2 -- ordering: two committed conflicting commands depend on each other in
  at least one direction.
* A1 -- a replica's joined ballot never decreases.
* A2 -- a new vote is cast at the ballot the replica currently has joined
  (observable through the vote ballot in FIXED mode).
* A3 -- a vote is irrevocable: the vote ballot never decreases, and at one
  vote ballot a vote is neither rewritten with other deps nor downgraded.

The explorer enumerates enabled actions depth first up to a total depth bound
(scripted prefix included). A plain visited set would be unsound under a
depth bound, because the first visit may happen deep in the tree with little
budget left; instead the visited map remembers the shallowest depth at which
each state was seen and a state is re-expanded whenever it reappears
shallower. Every state is therefore eventually expanded at its minimal depth,
so all runs within the bound are covered. Transition monitors (A1-A3) run on
every generated transition before deduplication; state monitors (E1/E2) run
once per distinct state. Every reported violation is re-verified by replaying
its witness schedule from the initial world before it is returned.
"""

from __future__ import annotations

import pickle
from collections.abc import Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from hashlib import blake2b

from .config import SystemConfig
from .protocol import Deps, InstanceId, Mode, RecordView, Status
from .schedule import Schedule, ScheduleEntry
from .simulator import (
    Blocked,
    Trace,
    WorldState,
    apply,
    apply_traced,
    enabled_actions,
    initial_world,
    run,
    world_key,
)

Snapshots = dict[str, dict[InstanceId, RecordView]]

KINDS = ("E1", "E2", "A1", "A2", "A3")

_STATUS_RANK = {Status.NONE: 0, Status.PRE_ACCEPTED: 1,
                Status.ACCEPTED: 2, Status.COMMITTED: 3}
_VOTE_STATUSES = (Status.PRE_ACCEPTED, Status.ACCEPTED)


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str
    instance: InstanceId | None = None
    replicas: tuple[str, ...] = ()
    witness: Schedule | None = None

    def describe(self) -> str:
        return f"{self.kind}: {self.detail}"


def check_E1(world: WorldState) -> list[Violation]:
    """Committed dependency sets must agree across replicas, per instance."""
    committed: dict[InstanceId, dict[str, Deps]] = {}
    for rid, state in sorted(world.replicas.items()):
        for inst, rec in state.records.items():
            if rec.status is Status.COMMITTED:
                committed.setdefault(inst, {})[rid] = rec.deps
    violations = []
    for inst, views in sorted(committed.items()):
        if len(set(views.values())) > 1:
            detail = "; ".join(
                f"{rid} committed deps {{{', '.join(sorted(d.label() for d in deps))}}}"
                for rid, deps in sorted(views.items()))
            violations.append(Violation("E1", f"{inst.label()}: {detail}",
                                        instance=inst, replicas=tuple(sorted(views))))
    return violations


def check_E2(world: WorldState) -> list[Violation]:
    """Conflicting committed commands must be ordered in at least one direction."""
    relation = world.config.relation
    violations = []
    for rid, state in sorted(world.replicas.items()):
        committed = sorted(
            (inst, rec) for inst, rec in state.records.items()
            if rec.status is Status.COMMITTED and rec.command is not None)
        for i, (inst_a, rec_a) in enumerate(committed):
            for inst_b, rec_b in committed[i + 1:]:
                if rec_a.command == rec_b.command:
                    continue
                if not relation.conflicts(rec_a.command, rec_b.command):
                    continue
                if inst_b not in rec_a.deps and inst_a not in rec_b.deps:
                    violations.append(Violation(
                        "E2",
                        f"at {rid}: {inst_a.label()} ({rec_a.command}) and "
                        f"{inst_b.label()} ({rec_b.command}) conflict but neither "
                        "depends on the other",
                        instance=inst_a, replicas=(rid,)))
    return violations


def _record_violations(rid: str, inst: InstanceId, was, now, out: list[Violation]) -> None:
    """A1-A3 over one record's before/after pair.

    `was` and `now` only need status/bal/vbal/deps attributes, so this works
    on live records and on trace snapshots alike; `was` may be None.
    """
    if was is not None and now.bal < was.bal:
        out.append(Violation(
            "A1", f"{rid} joined ballot went backwards for {inst.label()}: "
                  f"{was.bal} -> {now.bal}",
            instance=inst, replicas=(rid,)))
    is_vote = (now.status in _VOTE_STATUSES
               and (was is None or was.status != now.status or was.deps != now.deps))
    if is_vote and now.vbal is not None and now.vbal != now.bal:
        out.append(Violation(
            "A2", f"{rid} voted for {inst.label()} at ballot {now.vbal} "
                  f"while joined at {now.bal}",
            instance=inst, replicas=(rid,)))
    if was is not None and was.vbal is not None and now.vbal is not None \
            and now.status in _VOTE_STATUSES:
        if now.vbal < was.vbal:
            out.append(Violation(
                "A3", f"{rid} vote ballot went backwards for {inst.label()}: "
                      f"{was.vbal} -> {now.vbal}",
                instance=inst, replicas=(rid,)))
        elif now.vbal == was.vbal:
            # Upgrading pre-accepted to accepted at one ballot is the normal
            # slow path; rewriting or downgrading a vote at the same vote
            # ballot is not.
            if now.status == was.status and now.deps != was.deps:
                out.append(Violation(
                    "A3", f"{rid} revoted {inst.label()} at ballot {now.vbal} "
                          "with different deps",
                    instance=inst, replicas=(rid,)))
            elif _STATUS_RANK[now.status] < _STATUS_RANK[was.status]:
                out.append(Violation(
                    "A3", f"{rid} vote for {inst.label()} regressed from "
                          f"{was.status.value} to {now.status.value} "
                          f"at ballot {now.vbal}",
                    instance=inst, replicas=(rid,)))


def transition_violations(before: Snapshots, after: Snapshots) -> list[Violation]:
    """Ballot-discipline checks (A1-A3) over one snapshotted transition."""
    violations: list[Violation] = []
    for rid in sorted(after):
        prev_records = before.get(rid, {})
        for inst in sorted(after[rid]):
            _record_violations(rid, inst, prev_records.get(inst), after[rid][inst],
                               violations)
    return violations


def world_transition_violations(before: WorldState, after: WorldState) -> list[Violation]:
    """A1-A3 straight off two worlds; `before` must be the direct predecessor."""
    violations: list[Violation] = []
    for rid, state in after.replicas.items():
        prev_records = before.replicas[rid].records
        for inst, rec in state.records.items():
            _record_violations(rid, inst, prev_records.get(inst), rec, violations)
    return violations


def check_ballot_invariants(trace: Trace) -> list[Violation]:
    """Run the A1-A3 monitors over every transition of a trace."""
    violations = []
    before = trace.initial_snapshots
    for step in trace.steps:
        violations.extend(transition_violations(before, step.snapshots))
        before = step.snapshots
    return violations


def check_world(world: WorldState) -> list[Violation]:
    return check_E1(world) + check_E2(world)


def check_trace(trace: Trace) -> list[Violation]:
    """All monitors over a finished run: transitions plus the final world."""
    return check_ballot_invariants(trace) + check_world(trace.final_world)


# ---- Bounded exploration ----------------------------------------------------------

@dataclass(frozen=True)
class ExploreConfig:
    system: SystemConfig
    mode: Mode
    depth: int
    prefix: tuple[ScheduleEntry, ...] = ()
    max_states: int | None = None
    workers: int = 1

    def validate(self) -> None:
        if self.depth < 0:
            raise ValueError("depth bound must be >= 0")
        if self.depth < len(self.prefix):
            raise ValueError(
                f"depth bound {self.depth} is below the prefix length {len(self.prefix)}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.max_states is not None and self.max_states < 1:
            raise ValueError("state budget must be >= 1")
        self.system.validate()


@dataclass
class ExploreStats:
    states: int = 0
    transitions: int = 0
    depth_reached: int = 0

    def merge(self, other: ExploreStats) -> None:
        self.states += other.states
        self.transitions += other.transitions
        self.depth_reached = max(self.depth_reached, other.depth_reached)


@dataclass
class ExploreResult:
    outcome: str  # "ok" | "violation" | "budget-exceeded"
    stats: ExploreStats
    violation: Violation | None = None


def _prefix_world(config: ExploreConfig) -> tuple[WorldState, Violation | None]:
    """Replay the scripted prefix, monitoring it like any explored path."""
    world = initial_world(config.system, config.mode)
    for i, entry in enumerate(config.prefix, start=1):
        result = apply_traced(world, entry)
        if isinstance(result, Blocked):
            raise ValueError(f"scripted prefix blocks at entry {i} "
                             f"({entry.describe()}): {result.reason}")
        after, _ = result
        found = world_transition_violations(world, after) + check_world(after)
        world = after
        if found:
            witness = Schedule(config.prefix[:i], name="prefix")
            return world, _confirmed(config, witness, found[0])
    return world, None


def _confirmed(config: ExploreConfig, witness: Schedule, violation: Violation) -> Violation:
    """Replay a witness from scratch and make sure it shows the same violation.

    Guards the explorer against ever reporting a state it cannot reproduce;
    a failure here is a checker bug, not a protocol result.
    """
    trace = run(initial_world(config.system, config.mode), witness)
    if not trace.completed:
        raise RuntimeError(f"witness replay blocked: {trace.blocked}")
    replayed = check_trace(trace)
    if not any(v.kind == violation.kind for v in replayed):
        raise RuntimeError(
            f"witness replay did not reproduce {violation.kind}: {violation.detail}")
    return Violation(violation.kind, violation.detail, violation.instance,
                     violation.replicas, witness)


def _state_key(world: WorldState) -> bytes:
    """16-byte digest of the canonical encoding.

    Collisions would silently merge two states; at 128 bits the chance over
    even 10^9 states is about 10^-21, far below any other failure mode, and
    storing digests instead of full encodings keeps the visited map an order
    of magnitude smaller.
    """
    return blake2b(pickle.dumps(world_key(world)), digest_size=16).digest()


def _explore_from(config: ExploreConfig, root: WorldState) -> ExploreResult:
    """Depth-first search from `root`, which sits at depth len(prefix)."""
    base_depth = len(config.prefix)
    stats = ExploreStats(states=1, depth_reached=base_depth)
    visited: dict[bytes, int] = {_state_key(root): base_depth}
    # One frame per world on the current path; path holds the entries taken,
    # so a violation's witness is just prefix + path + the offending entry.
    stack: list[tuple[WorldState, int, Iterator[ScheduleEntry]]] = []
    path: list[ScheduleEntry] = []
    if base_depth < config.depth:
        stack.append((root, base_depth, iter(enabled_actions(root))))

    def witness(entry: ScheduleEntry) -> Schedule:
        return Schedule(config.prefix + tuple(path) + (entry,), name="witness")

    while stack:
        world, depth, pending = stack[-1]
        entry = next(pending, None)
        if entry is None:
            stack.pop()
            if path:
                path.pop()
            continue
        child = apply(world, entry)
        if isinstance(child, Blocked):  # pragma: no cover - enabled implies appliable
            continue
        stats.transitions += 1
        found = world_transition_violations(world, child)
        if found:
            return ExploreResult("violation", stats,
                                 _confirmed(config, witness(entry), found[0]))
        child_depth = depth + 1
        key = _state_key(child)
        seen_depth = visited.get(key)
        if seen_depth is not None and seen_depth <= child_depth:
            continue
        visited[key] = child_depth
        if seen_depth is None:
            stats.states += 1
            if child_depth > stats.depth_reached:
                stats.depth_reached = child_depth
            found = check_world(child)
            if found:
                return ExploreResult("violation", stats,
                                     _confirmed(config, witness(entry), found[0]))
            if config.max_states is not None and stats.states > config.max_states:
                return ExploreResult("budget-exceeded", stats)
        if child_depth < config.depth:
            stack.append((child, child_depth, iter(enabled_actions(child))))
            path.append(entry)
    return ExploreResult("ok", stats)


def _explore_branch(args: tuple[ExploreConfig, ScheduleEntry]) -> ExploreResult:
    config, entry = args
    branch = ExploreConfig(
        system=config.system, mode=config.mode, depth=config.depth,
        prefix=config.prefix + (entry,), max_states=config.max_states, workers=1)
    root, violation = _prefix_world(branch)
    if violation is not None:
        return ExploreResult("violation", ExploreStats(states=1), violation)
    return _explore_from(branch, root)


def explore(config: ExploreConfig) -> ExploreResult:
    """Exhaustively check every schedule up to the depth bound.

    With workers > 1, the branches under the first unscripted step are
    partitioned across processes; each worker deduplicates states only within
    its own subtree, so summed state counts overlap across workers. The first
    violation in branch order wins, keeping the result independent of worker
    timing.
    """
    config.validate()
    root, violation = _prefix_world(config)
    if violation is not None:
        return ExploreResult("violation",
                             ExploreStats(states=1, depth_reached=len(config.prefix)),
                             violation)
    if config.workers == 1 or config.depth <= len(config.prefix):
        return _explore_from(config, root)

    branches = enabled_actions(root)
    stats = ExploreStats(states=1, depth_reached=len(config.prefix))
    budget_exceeded = False
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        for result in pool.map(_explore_branch, [(config, entry) for entry in branches]):
            stats.merge(result.stats)
            if result.outcome == "violation":
                return ExploreResult("violation", stats, result.violation)
            if result.outcome == "budget-exceeded":
                budget_exceeded = True
    return ExploreResult("budget-exceeded" if budget_exceeded else "ok", stats)
