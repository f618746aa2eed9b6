"""Run configuration: replica set, quorum tables, commands, conflicts.

A configuration can come from a JSON file or from the built-in three-replica
setup used by the canonical schedules: two conflicting commands and one
two-member quorum per replica, arranged so that every pair of quorums
intersects but no single replica sits in all of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .conflicts import ConflictRelation
from .protocol import QuorumConfig

DEFAULT_MAX_BALLOT = 5


@dataclass(frozen=True)
class SystemConfig:
    replicas: tuple[str, ...]
    commands: tuple[str, ...]
    relation: ConflictRelation
    quorums: QuorumConfig
    max_ballot: int = DEFAULT_MAX_BALLOT

    def validate(self) -> None:
        if len(set(self.replicas)) != len(self.replicas):
            raise ValueError("duplicate replica ids")
        if len(set(self.commands)) != len(self.commands):
            raise ValueError("duplicate command ids")
        for pair in self.relation.pairs:
            unknown = set(pair) - set(self.commands)
            if unknown:
                raise ValueError(f"conflict pair mentions unknown commands {sorted(unknown)}")
        if self.max_ballot < 1:
            raise ValueError("max ballot must be at least 1")
        self.quorums.validate(self.replicas)


def builtin_config(max_ballot: int = DEFAULT_MAX_BALLOT) -> SystemConfig:
    """Three replicas p1..p3, conflicting commands c1/c2, two-member quorums."""
    fast = {
        "p1": (frozenset({"p1", "p3"}),),
        "p2": (frozenset({"p1", "p2"}),),
        "p3": (frozenset({"p2", "p3"}),),
    }
    config = SystemConfig(
        replicas=("p1", "p2", "p3"),
        commands=("c1", "c2"),
        relation=ConflictRelation.of(("c1", "c2")),
        quorums=QuorumConfig(fast=dict(fast), slow=dict(fast)),
        max_ballot=max_ballot,
    )
    config.validate()
    return config


def load_config(path: str | Path, max_ballot: int = DEFAULT_MAX_BALLOT) -> SystemConfig:
    """Read a configuration file.

    Expected shape::

        {
          "replicas": ["p1", "p2", "p3"],
          "commands": ["c1", "c2"],
          "conflicts": [["c1", "c2"]],
          "quorums": {
            "fast": {"p1": [["p1", "p3"]], ...},
            "slow": {...}              // optional, defaults to "fast"
          }
        }
    """
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read configuration {path}: {exc}") from exc
    try:
        replicas = tuple(data["replicas"])
        commands = tuple(data["commands"])
        relation = ConflictRelation.of(*(tuple(pair) for pair in data.get("conflicts", [])))
        raw_quorums = data["quorums"]
        fast = {rid: tuple(frozenset(q) for q in quorums)
                for rid, quorums in raw_quorums["fast"].items()}
        slow_raw = raw_quorums.get("slow")
        slow = (fast if slow_raw is None else
                {rid: tuple(frozenset(q) for q in quorums) for rid, quorums in slow_raw.items()})
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed configuration {path}: missing or bad field {exc}") from exc
    config = SystemConfig(
        replicas=replicas,
        commands=commands,
        relation=relation,
        quorums=QuorumConfig(fast=fast, slow=slow),
        max_ballot=max_ballot,
    )
    config.validate()
    return config
