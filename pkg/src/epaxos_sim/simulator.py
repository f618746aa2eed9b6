"""Deterministic message-level simulator.

The world holds every replica's state plus a multiset of in-flight messages;
a schedule entry either performs a local protocol step or delivers exactly one
matching message. Applying an entry never mutates the input world, so replays
of the same (initial world, schedule, mode) triple are bit-for-bit identical.

Blocked is an outcome, not an error: an entry whose protocol precondition does
not hold halts the run and the trace records where. Malformed entries (unknown
actors, quorums that are not configured, missing fields) raise ValueError
instead, since they indicate a defective schedule rather than a legal
interleaving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from . import protocol
from .config import SystemConfig
from .protocol import (
    Accept,
    AcceptReply,
    BallotAllocator,
    BallotsExhausted,
    Commit,
    InstanceId,
    Message,
    Mode,
    PreAccept,
    PreAcceptReply,
    Prepare,
    PrepareReply,
    RecordView,
    ReplicaState,
    Status,
    message_sort_key,
    message_to_json,
)
from .schedule import DELIVERY_ACTIONS, MessageKey, Schedule, ScheduleEntry


class ScheduleAmbiguityError(ValueError):
    """A delivery entry matched more than one in-flight message."""

    def __init__(self, entry: ScheduleEntry, candidates: list[Message]) -> None:
        lines = "\n  ".join(str(message_to_json(m)) for m in candidates)
        super().__init__(
            f"{entry.describe()} matches {len(candidates)} in-flight messages; "
            f"add a key (sender, ballot) to pick one of:\n  {lines}")
        self.candidates = candidates


@dataclass(frozen=True, slots=True)
class Blocked:
    """Reached an entry whose precondition does not hold; the run halts here."""

    index: int
    entry: ScheduleEntry
    reason: str


@dataclass
class WorldState:
    config: SystemConfig
    mode: Mode
    replicas: dict[str, ReplicaState]
    in_flight: list[Message] = field(default_factory=list)
    allocator: BallotAllocator = field(default_factory=BallotAllocator)
    proposed: set[str] = field(default_factory=set)
    step_index: int = 1  # number of the next entry to apply

    def clone(self) -> WorldState:
        return WorldState(
            config=self.config,
            mode=self.mode,
            replicas={rid: st.clone() for rid, st in self.replicas.items()},
            in_flight=list(self.in_flight),
            allocator=self.allocator.clone(),
            proposed=set(self.proposed),
            step_index=self.step_index,
        )

    def snapshots(self) -> dict[str, dict[InstanceId, RecordView]]:
        return {rid: {inst: rec.view() for inst, rec in st.records.items()}
                for rid, st in sorted(self.replicas.items())}


def initial_world(config: SystemConfig, mode: Mode | str) -> WorldState:
    # Coerce here so handlers can rely on identity checks against Mode members.
    mode = Mode(mode)
    config.validate()
    return WorldState(
        config=config,
        mode=mode,
        replicas={rid: ReplicaState(rid=rid, mode=mode) for rid in config.replicas},
        allocator=BallotAllocator(next_value=1, max_ballot=config.max_ballot),
    )


def _message_live(world: WorldState, m: Message) -> bool:
    """False when no step, now or later, can ever consume `m`.

    Staleness is permanent here: joined ballots never decrease, committed
    records never change, a vote is never downgraded at the ballot it was
    cast at, an entry leaves `preparing` for good once its round is
    finalized, a replica starts driving a round only at a freshly allocated
    (hence strictly larger) ballot or at ballot 0 when it opens the instance,
    and the allocator never reissues a ballot. So a message whose delivery or
    collection window has closed today stays closed forever.
    """
    if isinstance(m, Commit):
        # Commits are applied by the committing replica itself; a broadcast
        # copy has no delivery action in the schedule vocabulary.
        return False
    state = world.replicas[m.dst]
    rec = state.records.get(m.instance)
    if rec is None:
        return True
    if isinstance(m, Prepare):
        return m.ballot > rec.bal
    if rec.status is Status.COMMITTED or m.ballot < rec.bal:
        return False
    if isinstance(m, PrepareReply):
        return m.ballot in state.preparing.get(m.instance, ())
    if isinstance(m, PreAcceptReply) and m.ballot == rec.bal:
        return rec.status is Status.PRE_ACCEPTED and m.instance in state.leading
    if isinstance(m, AcceptReply) and m.ballot == rec.bal:
        return rec.status is Status.ACCEPTED and m.instance in state.leading
    return True


def _live_prepare_ballots(st: ReplicaState, inst: InstanceId, ballots: set[int]) -> list[int]:
    """Prepare rounds of `st` for `inst` that can still reach their finalize.

    Finalizing requires the replica's own ballot to equal the prepared one,
    and the record must not be committed; both conditions, once false, stay
    false (ballots only grow, prepared ballots are never reissued).
    """
    rec = st.records.get(inst)
    if rec is None:
        return sorted(ballots)
    if rec.status is Status.COMMITTED:
        return []
    return sorted(b for b in ballots if b >= rec.bal)


def world_key(world: WorldState) -> tuple:
    """Canonical encoding of the protocol-relevant state.

    Sorts every map and multiset so that two worlds reached along different
    paths compare equal exactly when no protocol step can tell them apart.
    The step counter is bookkeeping, not protocol state, and is excluded, as
    are in-flight messages and open-prepare marks that nothing can ever
    consume again: neither affects which transitions are enabled nor what
    any of them produces.
    """
    replicas = tuple(
        (
            rid,
            st.next_slot,
            tuple(sorted(
                (inst, rec.command, rec.status.value, rec.bal, rec.vbal,
                 tuple(sorted(rec.deps)))
                for inst, rec in st.records.items())),
            tuple(sorted(st.leading)),
            tuple(sorted(
                (inst, live) for inst, bals in st.preparing.items()
                if bals and (live := tuple(_live_prepare_ballots(st, inst, bals))))),
        )
        for rid, st in sorted(world.replicas.items())
    )
    return (
        world.allocator.next_value,
        tuple(sorted(world.proposed)),
        replicas,
        tuple(sorted(message_sort_key(m) for m in world.in_flight
                     if _message_live(world, m))),
    )


# ---- Trace ---------------------------------------------------------------------

@dataclass(frozen=True)
class TraceStep:
    index: int
    entry: ScheduleEntry
    delivered: Message | None
    consumed: tuple[Message, ...]
    sent: tuple[Message, ...]
    events: tuple[str, ...]
    snapshots: dict[str, dict[InstanceId, RecordView]]

    def to_json(self) -> dict:
        record: dict = {"type": "step", "index": self.index}
        record.update(self.entry.to_json(self.index))
        record["delivered"] = message_to_json(self.delivered) if self.delivered else None
        record["consumed"] = [message_to_json(m) for m in self.consumed]
        record["sent"] = [message_to_json(m) for m in self.sent]
        record["events"] = list(self.events)
        record["snapshots"] = {
            rid: {
                inst.label(): {
                    "command": view.command,
                    "status": view.status.value,
                    "bal": view.bal,
                    "vbal": view.vbal,
                    "deps": sorted(d.label() for d in view.deps),
                }
                for inst, view in sorted(records.items())
            }
            for rid, records in self.snapshots.items()
        }
        return record


@dataclass
class Trace:
    mode: Mode
    steps: list[TraceStep]
    blocked: Blocked | None
    final_world: WorldState
    initial_snapshots: dict[str, dict[InstanceId, RecordView]] = field(default_factory=dict)

    @property
    def completed(self) -> bool:
        return self.blocked is None

    def state_at(self, index: int, rid: str, instance: InstanceId) -> RecordView | None:
        """View of `instance` at `rid` right after the step numbered `index`."""
        for step in reversed(self.steps):
            if step.index <= index:
                return step.snapshots.get(rid, {}).get(instance)
        return None


# ---- Message selection -----------------------------------------------------------

_DELIVERY_TYPES: dict[str, type] = {
    "Phase1Reply": PreAccept,
    "ReplyPrepare": Prepare,
    "Phase2Reply": Accept,
}


def _matching_messages(world: WorldState, entry: ScheduleEntry) -> list[Message]:
    msg_type = _DELIVERY_TYPES[entry.action]
    matches = [
        m for m in world.in_flight
        if isinstance(m, msg_type) and m.dst == entry.actor
        and (entry.instance is None or m.instance == entry.instance)
        and (entry.key is None or (m.src == entry.key.sender and m.ballot == entry.key.ballot))
    ]
    distinct = sorted(set(matches), key=message_sort_key)
    return distinct


def _take(world: WorldState, message: Message) -> None:
    world.in_flight.remove(message)


def _collect_replies(world: WorldState, reply_type: type, actor: str,
                     instance: InstanceId, ballot: int) -> list:
    seen: dict[str, Message] = {}
    for m in world.in_flight:
        if isinstance(m, reply_type) and m.dst == actor and m.instance == instance \
                and m.ballot == ballot and m.src not in seen:
            seen[m.src] = m
    return [seen[src] for src in sorted(seen)]


# ---- Apply ---------------------------------------------------------------------

def _validated_quorum(world: WorldState, entry: ScheduleEntry) -> frozenset[str]:
    if entry.quorum is None:
        raise ValueError(f"{entry.describe()} requires a quorum")
    table = world.config.quorums
    configured = set(table.fast.get(entry.actor, ())) | set(table.slow.get(entry.actor, ()))
    if entry.quorum not in configured:
        raise ValueError(f"{entry.describe()}: quorum is not configured for {entry.actor}")
    return entry.quorum


def _required_instance(entry: ScheduleEntry) -> InstanceId:
    if entry.instance is None:
        raise ValueError(f"{entry.describe()} requires an instance")
    return entry.instance


def apply(world: WorldState, entry: ScheduleEntry) -> WorldState | Blocked:
    """Apply one entry, returning the successor world or Blocked.

    The input world is never modified; on Blocked nothing happened at all.
    """
    result = _apply_core(world, entry)
    if isinstance(result, Blocked):
        return result
    return result[0]


def apply_traced(world: WorldState, entry: ScheduleEntry) -> tuple[WorldState, TraceStep] | Blocked:
    """Like apply, also returning the trace record describing what happened."""
    result = _apply_core(world, entry)
    if isinstance(result, Blocked):
        return result
    new, delivered, consumed, sent, events = result
    step = TraceStep(
        index=world.step_index,
        entry=entry,
        delivered=delivered,
        consumed=consumed,
        sent=sent,
        events=events,
        snapshots=new.snapshots(),
    )
    return new, step


def _apply_core(
    world: WorldState, entry: ScheduleEntry,
) -> tuple[WorldState, Message | None, tuple[Message, ...], tuple[Message, ...],
           tuple[str, ...]] | Blocked:
    if entry.actor not in world.replicas:
        raise ValueError(f"{entry.describe()}: unknown actor")
    index = world.step_index

    if entry.action in DELIVERY_ACTIONS:
        candidates = _matching_messages(world, entry)
        if not candidates:
            return Blocked(index, entry, "no matching in-flight message")
        if len(candidates) > 1:
            raise ScheduleAmbiguityError(entry, candidates)
    else:
        candidates = []

    new = world.clone()
    state = new.replicas[entry.actor]
    sent: list[Message] = []
    consumed: list[Message] = []
    events: list[str] = []
    delivered: Message | None = None

    if entry.action == "Propose":
        if entry.command is None:
            raise ValueError(f"{entry.describe()} requires a command")
        if entry.command not in new.config.commands:
            raise ValueError(f"{entry.describe()}: unknown command")
        if entry.command in new.proposed:
            raise ValueError(f"{entry.describe()}: {entry.command} was already proposed")
        new.proposed.add(entry.command)
        fast_quorum = new.config.quorums.fast_quorum(entry.actor)
        instance, msgs = protocol.propose(state, entry.command, new.config.relation, fast_quorum)
        sent.extend(msgs)
        events.append(f"opened {instance.label()} for {entry.command}")

    elif entry.action == "Phase1Reply":
        delivered = candidates[0]
        _take(new, delivered)
        msgs, note = protocol.handle_pre_accept(state, delivered, new.config.relation)
        sent.extend(msgs)
        if note:
            events.append(note)

    elif entry.action == "SendPrepare":
        instance = _required_instance(entry)
        quorum = _validated_quorum(world, entry)
        rec = state.records.get(instance)
        if rec is None:
            # Recovery is prompted by waiting on a known instance; a replica
            # that never heard of one has nothing to recover.
            return Blocked(index, entry, f"{entry.actor} holds no record of {instance.label()}")
        if rec.status is Status.COMMITTED:
            return Blocked(index, entry, f"{instance.label()} already committed at {entry.actor}")
        try:
            ballot, msgs = protocol.send_prepare(state, instance, quorum, new.allocator)
        except BallotsExhausted as exc:
            return Blocked(index, entry, str(exc))
        sent.extend(msgs)
        events.append(f"opened recovery ballot {ballot} for {instance.label()}")

    elif entry.action == "ReplyPrepare":
        delivered = candidates[0]
        _take(new, delivered)
        msgs, note = protocol.handle_prepare(state, delivered)
        sent.extend(msgs)
        if note:
            events.append(note)

    elif entry.action == "PrepareFinalize":
        instance = _required_instance(entry)
        quorum = _validated_quorum(world, entry)
        rec = state.records.get(instance)
        if rec is None:
            return Blocked(index, entry,
                           f"{entry.actor} has not joined its own prepare for {instance.label()}")
        if rec.status is Status.COMMITTED:
            return Blocked(index, entry, f"{instance.label()} already committed at {entry.actor}")
        if rec.bal not in state.preparing.get(instance, set()):
            return Blocked(index, entry,
                           f"{entry.actor} has no open prepare at its current ballot {rec.bal}")
        replies = _collect_replies(new, PrepareReply, entry.actor, instance, rec.bal)
        missing = quorum - {r.src for r in replies}
        if missing:
            return Blocked(index, entry,
                           f"missing prepare replies from {sorted(missing)} at ballot {rec.bal}")
        replies = [r for r in replies if r.src in quorum]
        for r in replies:
            _take(new, r)
        consumed.extend(replies)
        outcome, msgs = protocol.prepare_finalize(
            state, instance, quorum, replies, new.config.relation, new.config.replicas)
        sent.extend(msgs)
        events.append(f"recovery outcome: {_describe_outcome(outcome)}")

    elif entry.action == "Phase1Slow":
        instance = _required_instance(entry)
        quorum = _validated_quorum(world, entry)
        rec = state.records.get(instance)
        if rec is None or rec.status is not Status.PRE_ACCEPTED:
            return Blocked(index, entry,
                           f"{entry.actor} holds no pre-accepted record for {instance.label()}")
        if instance not in state.leading:
            return Blocked(index, entry, f"{entry.actor} is not driving {instance.label()}")
        replies = _collect_replies(new, PreAcceptReply, entry.actor, instance, rec.bal)
        replies = [r for r in replies if r.src in quorum]
        missing = (quorum - {state.rid}) - {r.src for r in replies}
        if missing:
            return Blocked(index, entry,
                           f"missing pre-accept replies from {sorted(missing)} at ballot {rec.bal}")
        for r in replies:
            _take(new, r)
        consumed.extend(replies)
        msgs = protocol.slow_resolve(state, instance, replies, quorum)
        sent.extend(msgs)
        events.append(f"accepted union deps at ballot {rec.bal}")

    elif entry.action == "Phase2Reply":
        delivered = candidates[0]
        _take(new, delivered)
        msgs, note = protocol.handle_accept(state, delivered)
        sent.extend(msgs)
        if note:
            events.append(note)

    elif entry.action == "Phase2Finalize":
        instance = _required_instance(entry)
        quorum = _validated_quorum(world, entry)
        rec = state.records.get(instance)
        if rec is None or rec.status is not Status.ACCEPTED:
            return Blocked(index, entry,
                           f"{entry.actor} holds no accepted record for {instance.label()}")
        if instance not in state.leading:
            return Blocked(index, entry, f"{entry.actor} is not driving {instance.label()}")
        replies = _collect_replies(new, AcceptReply, entry.actor, instance, rec.bal)
        replies = [r for r in replies if r.src in quorum]
        missing = (quorum - {state.rid}) - {r.src for r in replies}
        if missing:
            return Blocked(index, entry,
                           f"missing accept replies from {sorted(missing)} at ballot {rec.bal}")
        for r in replies:
            _take(new, r)
        consumed.extend(replies)
        msgs = protocol.phase2_finalize(state, instance, quorum, replies, new.config.replicas)
        sent.extend(msgs)
        events.append(f"committed {instance.label()} at ballot {rec.bal}")

    else:  # pragma: no cover - ScheduleEntry rejects unknown actions
        raise ValueError(f"unknown action {entry.action!r}")

    new.in_flight.extend(sent)
    new.step_index = index + 1
    return new, delivered, tuple(consumed), tuple(sent), tuple(events)


def _describe_outcome(outcome: protocol.PrepareOutcome) -> str:
    if isinstance(outcome, protocol.PrepareCommit):
        return f"adopt commit with deps {{{', '.join(sorted(i.label() for i in outcome.deps))}}}"
    if isinstance(outcome, protocol.PreparePhase2):
        return f"re-run accept round with deps {{{', '.join(sorted(i.label() for i in outcome.deps))}}}"
    if isinstance(outcome, protocol.PrepareRestart):
        return (f"restart phase one for {outcome.command} with deps "
                f"{{{', '.join(sorted(i.label() for i in outcome.deps))}}}")
    return "nothing to recover"


def run(world: WorldState, schedule: Schedule | Iterable[ScheduleEntry]) -> Trace:
    """Apply entries in order until the schedule ends or an entry blocks."""
    entries = schedule.entries if isinstance(schedule, Schedule) else tuple(schedule)
    steps: list[TraceStep] = []
    blocked: Blocked | None = None
    initial = world.snapshots()
    current = world
    for entry in entries:
        result = apply_traced(current, entry)
        if isinstance(result, Blocked):
            blocked = result
            break
        current, step = result
        steps.append(step)
    return Trace(mode=current.mode, steps=steps, blocked=blocked, final_world=current,
                 initial_snapshots=initial)


# ---- Enabled actions -------------------------------------------------------------

def _fresh_for(world: WorldState, msg: Message, rec_bal_cmp) -> bool:
    rec = world.replicas[msg.dst].records.get(msg.instance)
    if rec is None:
        return True
    if rec.status is Status.COMMITTED and not isinstance(msg, Prepare):
        return False
    return rec_bal_cmp(msg.ballot, rec.bal)


def enabled_actions(world: WorldState) -> list[ScheduleEntry]:
    """Every entry whose precondition holds, in a deterministic order.

    Deliveries that a handler would drop as stale are omitted: they consume a
    message without changing any record, so exploring them only multiplies
    paths without reaching new protocol states.
    """
    entries: list[ScheduleEntry] = []
    table = world.config.quorums

    for rid in world.config.replicas:
        for command in world.config.commands:
            if command not in world.proposed:
                entries.append(ScheduleEntry("Propose", rid, command=command))

    delivered: set[Message] = set()
    for m in world.in_flight:
        if m in delivered:
            continue
        delivered.add(m)
        if isinstance(m, PreAccept) and _fresh_for(world, m, lambda mb, rb: mb >= rb):
            entries.append(ScheduleEntry("Phase1Reply", m.dst, instance=m.instance,
                                         key=MessageKey(m.src, m.ballot)))
        elif isinstance(m, Prepare) and _fresh_for(world, m, lambda mb, rb: mb > rb):
            entries.append(ScheduleEntry("ReplyPrepare", m.dst, instance=m.instance,
                                         key=MessageKey(m.src, m.ballot)))
        elif isinstance(m, Accept) and _fresh_for(world, m, lambda mb, rb: mb >= rb):
            entries.append(ScheduleEntry("Phase2Reply", m.dst, instance=m.instance,
                                         key=MessageKey(m.src, m.ballot)))

    can_allocate = world.allocator.next_value <= world.allocator.max_ballot
    for rid in world.config.replicas:
        state = world.replicas[rid]
        quorums = sorted(set(table.fast.get(rid, ())) | set(table.slow.get(rid, ())), key=sorted)
        if can_allocate:
            for instance in sorted(state.records):
                if state.records[instance].status is Status.COMMITTED:
                    continue
                for quorum in table.slow.get(rid, ()):
                    entries.append(ScheduleEntry("SendPrepare", rid, instance=instance,
                                                 quorum=quorum))
        for instance, ballots in state.preparing.items():
            rec = state.records.get(instance)
            if rec is None or rec.status is Status.COMMITTED or rec.bal not in ballots:
                continue
            senders = {r.src for r in _collect_replies(world, PrepareReply, rid, instance, rec.bal)}
            for quorum in quorums:
                if quorum <= senders:
                    entries.append(ScheduleEntry("PrepareFinalize", rid, instance=instance,
                                                 quorum=quorum))
        for instance in state.leading:
            rec = state.records.get(instance)
            if rec is None:
                continue
            if rec.status is Status.PRE_ACCEPTED:
                senders = {r.src for r in
                           _collect_replies(world, PreAcceptReply, rid, instance, rec.bal)}
                action = "Phase1Slow"
            elif rec.status is Status.ACCEPTED:
                senders = {r.src for r in
                           _collect_replies(world, AcceptReply, rid, instance, rec.bal)}
                action = "Phase2Finalize"
            else:
                continue
            for quorum in quorums:
                if quorum - {rid} <= senders:
                    entries.append(ScheduleEntry(action, rid, instance=instance, quorum=quorum))

    entries.sort(key=ScheduleEntry.sort_key)
    return entries
