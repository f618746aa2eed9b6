"""Replica state machine for dependency agreement.

Each command is placed in an instance owned by its proposer. Replicas agree,
per instance, on the set of conflicting instances (the dependencies) through a
fast pre-accept round, a slow accept round, and an explicit-prepare recovery
path. Two modes differ only in how much ballot history a replica keeps:

* BUGGY: a single ballot variable serves both as "highest ballot joined" and
  "ballot of the last vote". After joining a higher ballot, a replica reports
  that ballot for a value it voted for earlier, so a recovering process can
  mistake an old vote for a newer one.
* FIXED: the ballot joined (`bal`) and the ballot of the last vote (`vbal`)
  are tracked separately, and prepare replies report `vbal`.

Handlers mutate the given ReplicaState in place and return the messages they
emit. The simulator owns all replica states, clones the world before every
step, and applies transitions one at a time, so the world-level step function
stays pure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Union

from .conflicts import ConflictRelation

FAST_ROUND = 0  # every instance starts at ballot 0; recovery ballots are >= 1


class InstanceId(NamedTuple):
    """Slot in the two-dimensional log: (owning replica, slot number)."""

    owner: str
    slot: int

    def label(self) -> str:
        return f"{self.owner}:{self.slot}"

    @classmethod
    def parse(cls, text: str) -> InstanceId:
        owner, _, slot = text.rpartition(":")
        if not owner or not slot.isdigit():
            raise ValueError(f"malformed instance id {text!r}, expected '<owner>:<slot>'")
        return cls(owner, int(slot))


Deps = frozenset  # frozenset[InstanceId]


class Status(str, enum.Enum):
    NONE = "none"
    PRE_ACCEPTED = "pre-accepted"
    ACCEPTED = "accepted"
    COMMITTED = "committed"


# Statuses that represent a vote for a concrete dependency set.
VOTED = (Status.PRE_ACCEPTED, Status.ACCEPTED, Status.COMMITTED)


class Mode(str, enum.Enum):
    BUGGY = "buggy"  # single ballot variable
    FIXED = "fixed"  # separate join ballot and vote ballot


@dataclass(slots=True)
class Record:
    """Per-instance state at one replica.

    `vbal` is only maintained in FIXED mode; in BUGGY mode it stays None and
    `bal` serves both roles. A record with status NONE holds no command: the
    replica merely joined a ballot for an instance it knows nothing about.
    """

    command: str | None = None
    status: Status = Status.NONE
    bal: int = FAST_ROUND
    vbal: int | None = None
    deps: Deps = frozenset()

    def view(self) -> RecordView:
        return RecordView(self.command, self.status, self.bal, self.vbal, self.deps)


class RecordView(NamedTuple):
    """Immutable snapshot of a Record, used in traces and assertions."""

    command: str | None
    status: Status
    bal: int
    vbal: int | None
    deps: Deps


# ---- Messages ----------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class PreAccept:
    src: str
    dst: str
    instance: InstanceId
    ballot: int
    command: str
    deps: Deps


@dataclass(frozen=True, slots=True)
class PreAcceptReply:
    src: str
    dst: str
    instance: InstanceId
    ballot: int  # echoes the pre-accept round it answers
    deps: Deps


@dataclass(frozen=True, slots=True)
class Prepare:
    src: str
    dst: str
    instance: InstanceId
    ballot: int


@dataclass(frozen=True, slots=True)
class PrepareReply:
    src: str
    dst: str
    instance: InstanceId
    ballot: int  # echoes the prepare round so the recoverer can match its own round
    reported_bal: int | None  # ballot the sender claims for its last vote; None = no vote
    status: Status
    command: str | None
    deps: Deps


@dataclass(frozen=True, slots=True)
class Accept:
    src: str
    dst: str
    instance: InstanceId
    ballot: int
    command: str
    deps: Deps


@dataclass(frozen=True, slots=True)
class AcceptReply:
    src: str
    dst: str
    instance: InstanceId
    ballot: int


@dataclass(frozen=True, slots=True)
class Commit:
    src: str
    dst: str
    instance: InstanceId
    command: str
    deps: Deps


Message = Union[PreAccept, PreAcceptReply, Prepare, PrepareReply, Accept, AcceptReply, Commit]

_MESSAGE_TYPES: dict[str, type] = {
    cls.__name__: cls
    for cls in (PreAccept, PreAcceptReply, Prepare, PrepareReply, Accept, AcceptReply, Commit)
}


def message_sort_key(msg: Message) -> tuple:
    """Stable, lossless total order over messages for canonical state encoding."""
    reported = getattr(msg, "reported_bal", -2)
    status = getattr(msg, "status", None)
    return (
        type(msg).__name__,
        msg.src,
        msg.dst,
        msg.instance,
        getattr(msg, "ballot", -1),
        -1 if reported is None else reported,
        status.value if status is not None else "",
        getattr(msg, "command", None) or "",
        tuple(sorted(getattr(msg, "deps", frozenset()))),
    )


def message_to_json(msg: Message) -> dict:
    out: dict = {"type": type(msg).__name__, "src": msg.src, "dst": msg.dst,
                 "instance": msg.instance.label()}
    for name in ("ballot", "reported_bal", "status", "command"):
        if hasattr(msg, name):
            value = getattr(msg, name)
            out[name] = value.value if isinstance(value, Status) else value
    if hasattr(msg, "deps"):
        out["deps"] = sorted(i.label() for i in msg.deps)
    return out


def message_from_json(data: dict) -> Message:
    cls = _MESSAGE_TYPES[data["type"]]
    kwargs: dict = {"src": data["src"], "dst": data["dst"],
                    "instance": InstanceId.parse(data["instance"])}
    for name in ("ballot", "reported_bal", "command"):
        if name in data:
            kwargs[name] = data[name]
    if "status" in data:
        kwargs["status"] = Status(data["status"])
    if "deps" in data:
        kwargs["deps"] = frozenset(InstanceId.parse(i) for i in data["deps"])
    return cls(**kwargs)


# ---- Quorums and ballots -------------------------------------------------------

@dataclass(frozen=True)
class QuorumConfig:
    """Per-replica fast and slow quorums.

    Both kinds must pairwise intersect; fast quorums must have at least
    f + floor((f+1)/2) members (counting the command leader) and slow quorums
    a majority, where f is the number of tolerated failures.
    """

    fast: dict[str, tuple[frozenset[str], ...]]
    slow: dict[str, tuple[frozenset[str], ...]]

    def validate(self, replicas: tuple[str, ...]) -> None:
        n = len(replicas)
        f = (n - 1) // 2
        fast_min = f + (f + 1) // 2
        slow_min = n // 2 + 1
        everyone = set(replicas)
        all_quorums: list[frozenset[str]] = []
        for kind, table, minimum in (("fast", self.fast, fast_min), ("slow", self.slow, slow_min)):
            if set(table) != everyone:
                raise ValueError(f"{kind} quorum table must cover exactly the replicas {sorted(everyone)}")
            for rid, quorums in table.items():
                if not quorums:
                    raise ValueError(f"replica {rid} has no {kind} quorum")
                for q in quorums:
                    if not q <= everyone:
                        raise ValueError(f"{kind} quorum {sorted(q)} of {rid} mentions unknown replicas")
                    if rid not in q:
                        raise ValueError(f"{kind} quorum {sorted(q)} of {rid} must contain {rid}")
                    if len(q) < minimum:
                        raise ValueError(
                            f"{kind} quorum {sorted(q)} of {rid} has {len(q)} members, needs >= {minimum}")
                    all_quorums.append(q)
        for i, a in enumerate(all_quorums):
            for b in all_quorums[i + 1:]:
                if not a & b:
                    raise ValueError(f"quorums {sorted(a)} and {sorted(b)} do not intersect")

    def fast_quorum(self, rid: str) -> frozenset[str]:
        return sorted(self.fast[rid], key=sorted)[0]

    def slow_quorums(self, rid: str) -> tuple[frozenset[str], ...]:
        return tuple(sorted(self.slow[rid], key=sorted))


class BallotsExhausted(Exception):
    """The run-wide recovery ballot allocator went past its bound."""


@dataclass(slots=True)
class BallotAllocator:
    """One monotone counter per run; every recovery round gets a fresh ballot."""

    next_value: int = 1
    max_ballot: int = 5

    def allocate(self) -> int:
        if self.next_value > self.max_ballot:
            raise BallotsExhausted(f"recovery ballots exhausted (max {self.max_ballot})")
        value = self.next_value
        self.next_value += 1
        return value

    def clone(self) -> BallotAllocator:
        return BallotAllocator(self.next_value, self.max_ballot)


# ---- Replica state -------------------------------------------------------------

@dataclass
class ReplicaState:
    rid: str
    mode: Mode
    records: dict[InstanceId, Record] = field(default_factory=dict)
    next_slot: int = 1
    # instances this replica is currently driving through an accept round
    leading: set[InstanceId] = field(default_factory=set)
    # outstanding prepare rounds: instance -> ballots sent and not yet finalized
    preparing: dict[InstanceId, set[int]] = field(default_factory=dict)

    def clone(self) -> ReplicaState:
        return ReplicaState(
            rid=self.rid,
            mode=self.mode,
            records={inst: replace(rec) for inst, rec in self.records.items()},
            next_slot=self.next_slot,
            leading=set(self.leading),
            preparing={inst: set(b) for inst, b in self.preparing.items()},
        )

    def record(self, instance: InstanceId) -> Record:
        rec = self.records.get(instance)
        if rec is None:
            rec = Record()
            self.records[instance] = rec
        return rec

    def local_conflicts(self, command: str, relation: ConflictRelation,
                        exclude: InstanceId) -> Deps:
        """Instances at this replica holding commands that conflict with `command`.

        The instance being processed is never its own dependency.
        """
        return frozenset(
            inst for inst, rec in self.records.items()
            if inst != exclude
            and rec.command is not None
            and rec.command != command
            and relation.conflicts(rec.command, command)
        )

    def _vote(self, rec: Record, status: Status, ballot: int, command: str | None,
              deps: Deps) -> None:
        rec.status = status
        rec.bal = ballot
        if command is not None:
            rec.command = command
        rec.deps = deps
        if self.mode is Mode.FIXED:
            rec.vbal = ballot


# ---- Proposal and phase one ----------------------------------------------------

def propose(state: ReplicaState, command: str, relation: ConflictRelation,
            fast_quorum: frozenset[str]) -> tuple[InstanceId, list[Message]]:
    """Open the proposer's next slot for `command` and start the fast round.

    The proposer pre-accepts locally with its known conflicts as dependencies
    and sends PreAccept to the rest of its fast quorum. Its own vote counts as
    the leader reply when the round is resolved.
    """
    instance = InstanceId(state.rid, state.next_slot)
    if instance in state.records:
        raise ValueError(f"slot {instance.label()} is already occupied")
    state.next_slot += 1
    deps = state.local_conflicts(command, relation, exclude=instance)
    rec = state.record(instance)
    state._vote(rec, Status.PRE_ACCEPTED, FAST_ROUND, command, deps)
    state.leading.add(instance)
    return instance, [
        PreAccept(src=state.rid, dst=peer, instance=instance, ballot=FAST_ROUND,
                  command=command, deps=deps)
        for peer in sorted(fast_quorum - {state.rid})
    ]


def handle_pre_accept(state: ReplicaState, msg: PreAccept,
                      relation: ConflictRelation) -> tuple[list[Message], str | None]:
    """Record the command and answer with the dependencies seen locally.

    A pre-accept at a ballot below the locally joined one is stale and is
    dropped (logged by the caller); committed records never regress, so they
    also ignore pre-accepts.
    """
    rec = state.records.get(msg.instance)
    if rec is not None:
        if rec.status is Status.COMMITTED:
            return [], f"stale PreAccept for committed {msg.instance.label()} dropped"
        if msg.ballot < rec.bal:
            return [], (f"stale PreAccept at ballot {msg.ballot} < joined {rec.bal} "
                        f"for {msg.instance.label()} dropped")
    deps = msg.deps | state.local_conflicts(msg.command, relation, exclude=msg.instance)
    rec = state.record(msg.instance)
    state._vote(rec, Status.PRE_ACCEPTED, msg.ballot, msg.command, deps)
    reply = PreAcceptReply(src=state.rid, dst=msg.src, instance=msg.instance,
                           ballot=msg.ballot, deps=deps)
    return [reply], None


@dataclass(frozen=True, slots=True)
class FastCommit:
    deps: Deps


@dataclass(frozen=True, slots=True)
class SlowAccept:
    deps: Deps


def phase1_resolve(state: ReplicaState, instance: InstanceId,
                   replies: list[PreAcceptReply], quorum: frozenset[str],
                   all_replicas: tuple[str, ...]) -> tuple[FastCommit | SlowAccept, list[Message]]:
    """Resolve the owner's fast round from a full set of quorum replies.

    Unanimous dependencies (the leader's own included) commit immediately;
    otherwise the union of all reported dependencies moves to an accept round
    at ballot 0.
    """
    rec = state.records.get(instance)
    if rec is None or rec.status is not Status.PRE_ACCEPTED or rec.bal != FAST_ROUND:
        raise ValueError(f"{state.rid} holds no pre-accepted fast-round record for {instance.label()}")
    if instance.owner != state.rid:
        raise ValueError(f"{state.rid} does not own {instance.label()}")
    expected = quorum - {state.rid}
    senders = {r.src for r in replies}
    if senders - quorum:
        raise ValueError(f"replies from outside the quorum: {sorted(senders - quorum)}")
    if expected - senders:
        raise ValueError(f"missing replies from {sorted(expected - senders)}")
    if all(r.deps == rec.deps for r in replies):
        deps = rec.deps
        rec.status = Status.COMMITTED
        state.leading.discard(instance)
        assert rec.command is not None
        commits = [Commit(src=state.rid, dst=peer, instance=instance,
                          command=rec.command, deps=deps)
                   for peer in all_replicas if peer != state.rid]
        return FastCommit(deps), commits
    union = rec.deps
    for r in replies:
        union |= r.deps
    state._vote(rec, Status.ACCEPTED, rec.bal, None, union)
    assert rec.command is not None
    accepts = [Accept(src=state.rid, dst=peer, instance=instance, ballot=rec.bal,
                      command=rec.command, deps=union)
               for peer in sorted(quorum - {state.rid})]
    return SlowAccept(union), accepts


def slow_resolve(state: ReplicaState, instance: InstanceId,
                 replies: list[PreAcceptReply], quorum: frozenset[str]) -> list[Message]:
    """Union the quorum's reported dependencies and start the accept round.

    Works at any ballot: ballot 0 for a slow fast-round resolution, higher
    ballots for a round restarted during recovery. No fast commit is possible
    above ballot 0, so the union is always accepted.
    """
    rec = state.records.get(instance)
    if rec is None or rec.status is not Status.PRE_ACCEPTED:
        raise ValueError(f"{state.rid} holds no pre-accepted record for {instance.label()}")
    expected = quorum - {state.rid}
    senders = {r.src for r in replies}
    if senders != expected or any(r.ballot != rec.bal for r in replies):
        raise ValueError(f"phase-one replies for {instance.label()} must cover "
                         f"{sorted(expected)} at ballot {rec.bal}")
    union = rec.deps
    for r in replies:
        union |= r.deps
    state._vote(rec, Status.ACCEPTED, rec.bal, None, union)
    assert rec.command is not None
    return [Accept(src=state.rid, dst=peer, instance=instance, ballot=rec.bal,
                   command=rec.command, deps=union)
            for peer in sorted(quorum - {state.rid})]


# ---- Recovery ------------------------------------------------------------------

def send_prepare(state: ReplicaState, instance: InstanceId, quorum: frozenset[str],
                 allocator: BallotAllocator) -> tuple[int, list[Message]]:
    """Open a recovery round at a fresh ballot.

    Prepares go to every quorum member including the recoverer itself, which
    answers through the normal delivery path like anyone else; raises
    BallotsExhausted once the allocator passes its bound.
    """
    ballot = allocator.allocate()
    state.preparing.setdefault(instance, set()).add(ballot)
    return ballot, [Prepare(src=state.rid, dst=peer, instance=instance, ballot=ballot)
                    for peer in sorted(quorum)]


def handle_prepare(state: ReplicaState, msg: Prepare) -> tuple[list[Message], str | None]:
    """Join a higher ballot and report the last vote for the instance.

    The two modes diverge exactly here. BUGGY reports the ballot the replica
    last *joined*, so after answering one prepare the next reply claims a vote
    at the joined ballot even though no new vote happened. FIXED reports the
    ballot of the last actual vote and leaves it untouched by the join.
    """
    rec = state.records.get(msg.instance)
    if rec is not None and msg.ballot <= rec.bal:
        return [], (f"stale Prepare at ballot {msg.ballot} <= joined {rec.bal} "
                    f"for {msg.instance.label()} dropped")
    if rec is None:
        rec = state.record(msg.instance)  # joins the ballot below, status stays NONE
    # The single-variable mode reports `bal` no matter whether the last state
    # change was a vote or a mere join; that conflation is the whole defect.
    reported = rec.bal if state.mode is Mode.BUGGY else rec.vbal
    reply = PrepareReply(src=state.rid, dst=msg.src, instance=msg.instance,
                         ballot=msg.ballot, reported_bal=reported,
                         status=rec.status, command=rec.command, deps=rec.deps)
    rec.bal = msg.ballot
    return [reply], None


@dataclass(frozen=True, slots=True)
class PrepareCommit:
    """A reply already knew the commit; the recoverer adopts and spreads it."""

    deps: Deps


@dataclass(frozen=True, slots=True)
class PreparePhase2:
    """Some vote must be preserved; the recoverer re-runs the accept round."""

    deps: Deps


@dataclass(frozen=True, slots=True)
class PrepareRestart:
    """Only tentative pre-accepts (or none binding) were found; phase one is
    restarted at the recovery ballot."""

    command: str
    deps: Deps


@dataclass(frozen=True, slots=True)
class PrepareNothing:
    """No quorum member has seen the instance; nothing to recover."""


PrepareOutcome = Union[PrepareCommit, PreparePhase2, PrepareRestart, PrepareNothing]


def _reply_rank(reply: PrepareReply) -> tuple[int, str]:
    # A reply without a vote never wins selection; ties go to the higher sender id
    # (they are expected to agree when it matters).
    reported = reply.reported_bal if reply.reported_bal is not None else -1
    return (reported, reply.src)


def prepare_finalize(state: ReplicaState, instance: InstanceId, quorum: frozenset[str],
                     replies: list[PrepareReply], relation: ConflictRelation,
                     all_replicas: tuple[str, ...]) -> tuple[PrepareOutcome, list[Message]]:
    """Decide what the recovery round must preserve, given a full quorum of replies.

    The decision looks at the strongest vote reported: a commit is adopted
    as-is; an accepted vote at the highest reported ballot re-runs the accept
    round; pre-accepted votes re-run phase one -- unless enough of the quorum
    (everyone asked except the instance owner) pre-accepted the identical
    value, in which case that value may have been chosen on the fast path and
    goes straight to the accept round.
    """
    rec = state.records.get(instance)
    if rec is None:
        raise ValueError(f"{state.rid} has no record for {instance.label()}; "
                         "it must join its own prepare first")
    if rec.status is Status.COMMITTED:
        raise ValueError(f"{instance.label()} is already committed at {state.rid}")
    ballot = rec.bal
    if ballot not in state.preparing.get(instance, set()):
        raise ValueError(f"{state.rid} has no open prepare at ballot {ballot} "
                         f"for {instance.label()}")
    senders = {r.src for r in replies}
    if senders != quorum or len(replies) != len(quorum):
        raise ValueError(f"prepare replies must cover the quorum {sorted(quorum)} exactly")
    if any(r.ballot != ballot for r in replies):
        raise ValueError(f"prepare replies must all echo ballot {ballot}")

    state.preparing.pop(instance, None)

    committed = [r for r in replies if r.status is Status.COMMITTED]
    if committed:
        chosen = max(committed, key=_reply_rank)
        assert chosen.command is not None
        rec.command = chosen.command
        rec.status = Status.COMMITTED
        rec.deps = chosen.deps
        state.leading.discard(instance)
        commits = [Commit(src=state.rid, dst=peer, instance=instance,
                          command=chosen.command, deps=chosen.deps)
                   for peer in all_replicas if peer != state.rid]
        return PrepareCommit(chosen.deps), commits

    accepted = [r for r in replies if r.status is Status.ACCEPTED]
    if accepted:
        chosen = max(accepted, key=_reply_rank)
        assert chosen.command is not None
        state._vote(rec, Status.ACCEPTED, ballot, chosen.command, chosen.deps)
        state.leading.add(instance)
        accepts = [Accept(src=state.rid, dst=peer, instance=instance, ballot=ballot,
                          command=chosen.command, deps=chosen.deps)
                   for peer in sorted(quorum - {state.rid})]
        return PreparePhase2(chosen.deps), accepts

    pre_accepted = [r for r in replies if r.status is Status.PRE_ACCEPTED]
    if pre_accepted:
        values = {(r.command, r.deps) for r in pre_accepted}
        owner_voted = any(r.src == instance.owner for r in pre_accepted)
        if len(values) == 1 and not owner_voted and len(pre_accepted) >= len(quorum) - 1:
            # Possibly chosen on the fast path: every asked non-owner holds the
            # same pre-accept, so that value must be preserved as-is.
            chosen = max(pre_accepted, key=_reply_rank)
            assert chosen.command is not None
            state._vote(rec, Status.ACCEPTED, ballot, chosen.command, chosen.deps)
            state.leading.add(instance)
            accepts = [Accept(src=state.rid, dst=peer, instance=instance, ballot=ballot,
                              command=chosen.command, deps=chosen.deps)
                       for peer in sorted(quorum - {state.rid})]
            return PreparePhase2(chosen.deps), accepts
        chosen = max(pre_accepted, key=_reply_rank)
        assert chosen.command is not None
        deps = chosen.deps | state.local_conflicts(chosen.command, relation, exclude=instance)
        state._vote(rec, Status.PRE_ACCEPTED, ballot, chosen.command, deps)
        state.leading.add(instance)
        pre_accepts = [PreAccept(src=state.rid, dst=peer, instance=instance, ballot=ballot,
                                 command=chosen.command, deps=deps)
                       for peer in sorted(quorum - {state.rid})]
        return PrepareRestart(chosen.command, deps), pre_accepts

    return PrepareNothing(), []


# ---- Phase two and commit ------------------------------------------------------

def handle_accept(state: ReplicaState, msg: Accept) -> tuple[list[Message], str | None]:
    """Vote for the leader's dependency set at the message ballot."""
    rec = state.records.get(msg.instance)
    if rec is not None:
        if rec.status is Status.COMMITTED:
            return [], f"stale Accept for committed {msg.instance.label()} dropped"
        if msg.ballot < rec.bal:
            return [], (f"stale Accept at ballot {msg.ballot} < joined {rec.bal} "
                        f"for {msg.instance.label()} dropped")
    rec = state.record(msg.instance)
    state._vote(rec, Status.ACCEPTED, msg.ballot, msg.command, msg.deps)
    return [AcceptReply(src=state.rid, dst=msg.src, instance=msg.instance,
                        ballot=msg.ballot)], None


def phase2_finalize(state: ReplicaState, instance: InstanceId, quorum: frozenset[str],
                    replies: list[AcceptReply],
                    all_replicas: tuple[str, ...]) -> list[Message]:
    """Commit once the whole quorum voted at the leader's current ballot.

    The leader's own accepted record counts as its vote, so replies must come
    from exactly the other quorum members and must all carry the same ballot;
    a mixed-ballot set never witnesses a chosen value.
    """
    rec = state.records.get(instance)
    if rec is None or rec.status is not Status.ACCEPTED:
        raise ValueError(f"{state.rid} holds no accepted record for {instance.label()}")
    ballots = {r.ballot for r in replies}
    if len(ballots) > 1:
        raise ValueError(f"accept replies span ballots {sorted(ballots)}; "
                         "a quorum must vote at one ballot")
    if ballots and ballots != {rec.bal}:
        raise ValueError(f"accept replies are for ballot {ballots.pop()}, "
                         f"leader is at {rec.bal}")
    expected = quorum - {state.rid}
    senders = {r.src for r in replies}
    if senders != expected:
        raise ValueError(f"accept replies must cover {sorted(expected)} exactly")
    rec.status = Status.COMMITTED
    state.leading.discard(instance)
    assert rec.command is not None
    return [Commit(src=state.rid, dst=peer, instance=instance,
                   command=rec.command, deps=rec.deps)
            for peer in all_replicas if peer != state.rid]


def handle_commit(state: ReplicaState, msg: Commit) -> tuple[list[Message], str | None]:
    """Learn a commit. Re-deliveries are idempotent; a conflicting commit for
    the same instance is recorded as an agreement violation, never silently
    overwritten."""
    rec = state.records.get(msg.instance)
    if rec is not None and rec.status is Status.COMMITTED:
        if rec.deps != msg.deps:
            return [], (f"E1 violation: {msg.instance.label()} already committed at "
                        f"{state.rid} with deps {sorted(i.label() for i in rec.deps)}, "
                        f"second commit carries {sorted(i.label() for i in msg.deps)}")
        return [], None
    rec = state.record(msg.instance)
    rec.command = msg.command
    rec.status = Status.COMMITTED
    rec.deps = msg.deps
    if state.mode is Mode.FIXED and rec.vbal is None:
        rec.vbal = rec.bal
    return [], None
