"""Schedules: ordered action lists that drive the simulator deterministically.

A schedule file is JSON Lines. An optional leading meta record declares
per-mode expectations; every other line is one step::

    {"type": "meta", "expect_divergence": {"buggy": true, "fixed": false}}
    {"type": "step", "index": 1, "action": "Propose", "actor": "p3", "command": "c1"}
    {"type": "step", "index": 4, "action": "SendPrepare", "actor": "p3",
     "instance": "p1:1", "quorum": ["p2", "p3"]}
    {"type": "step", "index": 19, "action": "ReplyPrepare", "actor": "p1",
     "key": {"sender": "p1", "ballot": 4}}

Delivery actions (Phase1Reply, ReplyPrepare, Phase2Reply) may carry a `key`
naming the sender and ballot of the message to deliver; it is required
whenever more than one in-flight message matches the actor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .protocol import InstanceId

ACTIONS = (
    "Propose",
    "Phase1Reply",
    "SendPrepare",
    "ReplyPrepare",
    "PrepareFinalize",
    "Phase1Slow",
    "Phase2Reply",
    "Phase2Finalize",
)

DELIVERY_ACTIONS = ("Phase1Reply", "ReplyPrepare", "Phase2Reply")


@dataclass(frozen=True, slots=True)
class MessageKey:
    """Disambiguates one in-flight message: who sent it and at which ballot."""

    sender: str
    ballot: int


@dataclass(frozen=True, slots=True)
class ScheduleEntry:
    action: str
    actor: str
    instance: InstanceId | None = None
    quorum: frozenset[str] | None = None
    command: str | None = None
    key: MessageKey | None = None

    def __post_init__(self) -> None:
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}; expected one of {ACTIONS}")

    def sort_key(self) -> tuple:
        return (
            self.action,
            self.actor,
            self.instance if self.instance is not None else InstanceId("", 0),
            tuple(sorted(self.quorum)) if self.quorum else (),
            self.command or "",
            (self.key.sender, self.key.ballot) if self.key else ("", -1),
        )

    def describe(self) -> str:
        parts = [f"{self.action}({self.actor}"]
        if self.instance:
            parts.append(f", {self.instance.label()}")
        if self.quorum:
            parts.append(", {" + ",".join(sorted(self.quorum)) + "}")
        if self.command:
            parts.append(f", {self.command}")
        if self.key:
            parts.append(f", from={self.key.sender}@{self.key.ballot}")
        return "".join(parts) + ")"

    def to_json(self, index: int) -> dict:
        out: dict = {"type": "step", "index": index, "action": self.action, "actor": self.actor}
        if self.instance is not None:
            out["instance"] = self.instance.label()
        if self.quorum is not None:
            out["quorum"] = sorted(self.quorum)
        if self.command is not None:
            out["command"] = self.command
        if self.key is not None:
            out["key"] = {"sender": self.key.sender, "ballot": self.key.ballot}
        return out

    @classmethod
    def from_json(cls, data: dict) -> ScheduleEntry:
        key = data.get("key")
        return cls(
            action=data["action"],
            actor=data["actor"],
            instance=InstanceId.parse(data["instance"]) if "instance" in data else None,
            quorum=frozenset(data["quorum"]) if "quorum" in data else None,
            command=data.get("command"),
            key=MessageKey(key["sender"], key["ballot"]) if key else None,
        )


@dataclass(frozen=True)
class Schedule:
    """Entries plus optional per-mode divergence expectations."""

    entries: tuple[ScheduleEntry, ...]
    expect_divergence: dict[str, bool] = field(default_factory=dict)
    name: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def prefix(self, length: int) -> Schedule:
        if not 0 <= length <= len(self.entries):
            raise ValueError(f"prefix length {length} out of range for {len(self.entries)} entries")
        return Schedule(self.entries[:length], {}, name=f"{self.name}[:{length}]")

    def save(self, path: str | Path) -> None:
        lines = []
        if self.expect_divergence:
            lines.append(json.dumps({"type": "meta", "expect_divergence": self.expect_divergence}))
        lines.extend(json.dumps(entry.to_json(i)) for i, entry in enumerate(self.entries, start=1))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> Schedule:
        entries: list[ScheduleEntry] = []
        expect: dict[str, bool] = {}
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ValueError(f"cannot read schedule {path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
            kind = data.get("type", "step")
            if kind == "meta":
                expect = dict(data.get("expect_divergence", {}))
            elif kind == "step":
                try:
                    entries.append(ScheduleEntry.from_json(data))
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad step record: {exc}") from exc
            else:
                raise ValueError(f"{path}:{lineno}: unknown record type {kind!r}")
        return cls(tuple(entries), expect, name=str(path))
