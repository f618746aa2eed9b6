"""The built-in 24-step schedule that drives two replicas to disagree.

Three replicas, two conflicting commands. p3 proposes c1, p1 proposes c2, and
three successive recoveries of c2's instance interleave so that in BUGGY mode
p2 commits dep(c2) = {} at ballot 2 while p1 commits dep(c2) = {c1} at
ballot 4. The deciding moment is the last recovery: p1 (which voted for {} at
ballot 2 but then joined ballots 3 and 4) reports a stale vote ballot, p3
(which voted for {c1} at ballot 1 and joined ballot 3) reports ballot 3, so
the recoverer trusts p3's older value. With the vote ballot tracked
separately (FIXED mode) the same schedule makes p1's vote win and both
replicas commit {}.

Steps 19 and 20 deliver p1's two self-addressed prepares, newest ballot
first; the ballot-3 prepare is stale by then and is dropped, which is a legal
delivery. This pins the run where the mode difference decides the outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

from .protocol import Deps, InstanceId, Status
from .schedule import MessageKey, Schedule, ScheduleEntry
from .simulator import Trace, WorldState

TARGET_INSTANCE = InstanceId("p1", 1)
_DEP_C1 = frozenset({InstanceId("p3", 1)})

_Q12 = frozenset({"p1", "p2"})
_Q13 = frozenset({"p1", "p3"})
_Q23 = frozenset({"p2", "p3"})


def counterexample_schedule() -> Schedule:
    e = ScheduleEntry
    entries = (
        e("Propose", "p3", command="c1"),                                    # 1
        e("Propose", "p1", command="c2"),                                    # 2
        e("Phase1Reply", "p3"),                                              # 3
        e("SendPrepare", "p3", instance=TARGET_INSTANCE, quorum=_Q23),       # 4
        e("ReplyPrepare", "p2"),                                             # 5
        e("ReplyPrepare", "p3"),                                             # 6
        e("PrepareFinalize", "p3", instance=TARGET_INSTANCE, quorum=_Q23),   # 7
        e("SendPrepare", "p2", instance=TARGET_INSTANCE, quorum=_Q12),       # 8
        e("ReplyPrepare", "p1"),                                             # 9
        e("ReplyPrepare", "p2"),                                             # 10
        e("PrepareFinalize", "p2", instance=TARGET_INSTANCE, quorum=_Q12),   # 11
        e("Phase1Reply", "p1"),                                              # 12
        e("Phase1Slow", "p2", instance=TARGET_INSTANCE, quorum=_Q12),        # 13
        e("Phase2Reply", "p1"),                                              # 14
        e("SendPrepare", "p1", instance=TARGET_INSTANCE, quorum=_Q13),       # 15
        e("ReplyPrepare", "p3"),                                             # 16
        e("SendPrepare", "p1", instance=TARGET_INSTANCE, quorum=_Q13),       # 17
        e("ReplyPrepare", "p3"),                                             # 18
        e("ReplyPrepare", "p1", key=MessageKey("p1", 4)),                    # 19
        e("ReplyPrepare", "p1", key=MessageKey("p1", 3)),                    # 20, stale
        e("PrepareFinalize", "p1", instance=TARGET_INSTANCE, quorum=_Q13),   # 21
        e("Phase2Reply", "p3"),                                              # 22
        e("Phase2Finalize", "p2", instance=TARGET_INSTANCE, quorum=_Q12),    # 23
        e("Phase2Finalize", "p1", instance=TARGET_INSTANCE, quorum=_Q13),    # 24
    )
    return Schedule(
        entries,
        expect_divergence={"buggy": True, "fixed": False},
        name="builtin:counterexample",
    )


BUILTIN_SCHEDULES = {"counterexample": counterexample_schedule}


# ---- Key states ------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class KeyStateExpectation:
    """Expected view of the contested instance right after a given step."""

    step: int
    replica: str
    status: Status
    bal: int
    deps: Deps


def key_state_expectations() -> tuple[KeyStateExpectation, ...]:
    """The checkpoints the BUGGY run must hit exactly."""
    k = KeyStateExpectation
    empty: Deps = frozenset()
    return (
        k(7, "p3", Status.ACCEPTED, 1, _DEP_C1),
        k(15, "p3", Status.ACCEPTED, 1, _DEP_C1),
        k(15, "p2", Status.ACCEPTED, 2, empty),
        k(15, "p1", Status.ACCEPTED, 2, empty),
        k(17, "p3", Status.ACCEPTED, 3, _DEP_C1),
        k(17, "p2", Status.ACCEPTED, 2, empty),
        k(17, "p1", Status.ACCEPTED, 2, empty),
        k(24, "p3", Status.ACCEPTED, 4, _DEP_C1),
        k(24, "p2", Status.COMMITTED, 2, empty),
        k(24, "p1", Status.COMMITTED, 4, _DEP_C1),
    )


@dataclass(frozen=True)
class KeyStateReport:
    ok: bool
    failures: tuple[str, ...]


def assert_key_states(trace: Trace,
                      expectations: tuple[KeyStateExpectation, ...] | None = None
                      ) -> KeyStateReport:
    """Compare a trace against the checkpoint table, reporting every mismatch."""
    expectations = key_state_expectations() if expectations is None else expectations
    reached = max((s.index for s in trace.steps), default=0)
    failures: list[str] = []
    for exp in sorted(expectations, key=lambda x: (x.step, x.replica)):
        if exp.step > reached:
            failures.append(f"step {exp.step}: trace ended at step {reached} "
                            f"(blocked: {trace.blocked.reason if trace.blocked else 'no'})")
            continue
        view = trace.state_at(exp.step, exp.replica, TARGET_INSTANCE)
        if view is None:
            failures.append(f"step {exp.step}: {exp.replica} has no record for "
                            f"{TARGET_INSTANCE.label()}")
            continue
        got = (view.status, view.bal, view.deps)
        want = (exp.status, exp.bal, exp.deps)
        if got != want:
            failures.append(
                f"step {exp.step}: {exp.replica} holds "
                f"({view.status.value}, {view.bal}, {sorted(d.label() for d in view.deps)}), "
                f"expected ({exp.status.value}, {exp.bal}, {sorted(d.label() for d in exp.deps)})")
    return KeyStateReport(ok=not failures, failures=tuple(failures))


# ---- Divergence ------------------------------------------------------------------

@dataclass(frozen=True)
class Divergence:
    """One instance committed with different dependency sets at different replicas."""

    instance: InstanceId
    commits: dict[str, Deps]

    def describe(self) -> str:
        views = ", ".join(
            f"{rid} committed {{{', '.join(sorted(d.label() for d in deps)) or ''}}}"
            for rid, deps in sorted(self.commits.items()))
        return f"{self.instance.label()}: {views}"


def divergence_check(world: WorldState) -> list[Divergence]:
    """Find every instance whose committed dependency sets disagree across replicas."""
    committed: dict[InstanceId, dict[str, Deps]] = {}
    for rid, state in sorted(world.replicas.items()):
        for inst, rec in state.records.items():
            if rec.status is Status.COMMITTED:
                committed.setdefault(inst, {})[rid] = rec.deps
    return [
        Divergence(inst, views)
        for inst, views in sorted(committed.items())
        if len({deps for deps in views.values()}) > 1
    ]
