"""Execution ordering over committed instances.

Committed dependency sets form a directed graph that may contain cycles
(conflicting commands can legitimately pick up each other as dependencies).
Execution collapses strongly connected components and runs them dependency
first; inside a component the tie is broken by (owner id, slot), so every
replica with the same committed graph executes commands in the same order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .protocol import InstanceId, ReplicaState, Status


@dataclass(frozen=True)
class CommitGraph:
    """Immutable committed-dependency graph: instance -> its dependency set."""

    nodes: dict[InstanceId, frozenset[InstanceId]] = field(default_factory=dict)

    @classmethod
    def from_replica(cls, state: ReplicaState) -> CommitGraph:
        return cls({inst: rec.deps for inst, rec in state.records.items()
                    if rec.status is Status.COMMITTED})

    def __contains__(self, instance: InstanceId) -> bool:
        return instance in self.nodes

    def deps(self, instance: InstanceId) -> frozenset[InstanceId]:
        return self.nodes[instance]


def executable(graph: CommitGraph, instance: InstanceId) -> bool:
    """True iff every instance reachable through dependencies is committed.

    Only committed instances may be queried; execution never considers a slot
    before its own commit arrives.
    """
    if instance not in graph:
        raise ValueError(f"{instance.label()} is not committed; cannot ask for executability")
    seen = {instance}
    stack = [instance]
    while stack:
        for dep in graph.deps(stack.pop()):
            if dep not in graph:
                return False
            if dep not in seen:
                seen.add(dep)
                stack.append(dep)
    return True


def _strongly_connected_components(graph: CommitGraph) -> list[list[InstanceId]]:
    """Tarjan's algorithm, iterative so deep graphs cannot overflow the stack."""
    index: dict[InstanceId, int] = {}
    lowlink: dict[InstanceId, int] = {}
    on_stack: set[InstanceId] = set()
    stack: list[InstanceId] = []
    components: list[list[InstanceId]] = []
    counter = 0

    for root in sorted(graph.nodes):
        if root in index:
            continue
        work: list[tuple[InstanceId, list[InstanceId], int]] = [
            (root, sorted(graph.deps(root)), 0)]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, succs, i = work.pop()
            advanced = False
            while i < len(succs):
                succ = succs[i]
                i += 1
                if succ not in index:
                    work.append((node, succs, i))
                    index[succ] = lowlink[succ] = counter
                    counter += 1
                    stack.append(succ)
                    on_stack.add(succ)
                    work.append((succ, sorted(graph.deps(succ)), 0))
                    advanced = True
                    break
                if succ in on_stack:
                    lowlink[node] = min(lowlink[node], index[succ])
            if advanced:
                continue
            if lowlink[node] == index[node]:
                component = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                components.append(component)
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
    return components


def linearize(graph: CommitGraph) -> list[InstanceId]:
    """Deterministic execution order for a fully executable commit graph.

    Dependencies execute before their dependents across components; members of
    one component are ordered by (owner id, slot). Among components that are
    mutually unordered, the one holding the smallest instance id goes first,
    which pins a single total order for any given graph.
    """
    for inst, deps in graph.nodes.items():
        missing = [d for d in deps if d not in graph]
        if missing:
            raise ValueError(
                f"{inst.label()} depends on uncommitted {sorted(m.label() for m in missing)}; "
                "linearize requires every instance to be executable")

    components = _strongly_connected_components(graph)
    comp_of: dict[InstanceId, int] = {}
    for idx, members in enumerate(components):
        for member in members:
            comp_of[member] = idx

    preceded_by: dict[int, set[int]] = {i: set() for i in range(len(components))}
    dependents: dict[int, set[int]] = {i: set() for i in range(len(components))}
    for inst, deps in graph.nodes.items():
        for dep in deps:
            a, b = comp_of[dep], comp_of[inst]
            if a != b:
                preceded_by[b].add(a)
                dependents[a].add(b)

    ready = [(min(components[i]), i) for i in range(len(components)) if not preceded_by[i]]
    heapq.heapify(ready)
    order: list[InstanceId] = []
    while ready:
        _, comp = heapq.heappop(ready)
        order.extend(sorted(components[comp]))
        for dependent in dependents[comp]:
            preceded_by[dependent].discard(comp)
            if not preceded_by[dependent]:
                heapq.heappush(ready, (min(components[dependent]), dependent))
    return order
