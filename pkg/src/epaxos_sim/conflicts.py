"""Commands and the symmetric conflict relation between them.

Two commands that conflict must be ordered relative to each other by the
dependency-agreement protocol; commuting commands may execute in any order.
The relation is declared up front (by id pairs) and never changes during a run.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True, slots=True)
class Command:
    """A client command, identified by an opaque id."""

    id: str


@dataclass(frozen=True)
class ConflictRelation:
    """Symmetric, irreflexive relation over command ids.

    Stored as a frozenset of unordered pairs so that declaring (c, d)
    automatically covers (d, c).
    """

    pairs: frozenset[frozenset[str]] = field(default_factory=frozenset)

    @classmethod
    def of(cls, *pairs: tuple[str, str]) -> ConflictRelation:
        for a, b in pairs:
            if a == b:
                raise ValueError(f"conflict pair ({a!r}, {b!r}) relates a command to itself")
        return cls(frozenset(frozenset(p) for p in pairs))

    def conflicts(self, c: str, d: str) -> bool:
        """True iff commands c and d do not commute.

        Reflexive queries are rejected: a command is never ordered against
        itself, so asking is almost certainly a caller bug.
        """
        if c == d:
            raise ValueError(f"conflict query for identical command ids ({c!r})")
        return frozenset((c, d)) in self.pairs


def conflicts(relation: ConflictRelation, c: Command | str, d: Command | str) -> bool:
    """Module-level convenience wrapper around ConflictRelation.conflicts."""
    cid = c.id if isinstance(c, Command) else c
    did = d.id if isinstance(d, Command) else d
    return relation.conflicts(cid, did)
