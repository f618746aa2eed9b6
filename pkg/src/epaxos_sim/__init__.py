"""Deterministic simulator and bounded checker for Egalitarian Paxos
dependency agreement, with single- and dual-ballot recovery modes."""

from .conflicts import Command, ConflictRelation, conflicts
from .config import SystemConfig, builtin_config, load_config
from .counterexample import (
    Divergence,
    KeyStateExpectation,
    KeyStateReport,
    assert_key_states,
    counterexample_schedule,
    divergence_check,
    key_state_expectations,
)
from .execgraph import CommitGraph, executable, linearize
from .protocol import (
    BallotAllocator,
    BallotsExhausted,
    InstanceId,
    Mode,
    QuorumConfig,
    Record,
    RecordView,
    ReplicaState,
    Status,
)
from .schedule import MessageKey, Schedule, ScheduleEntry
from .simulator import (
    Blocked,
    ScheduleAmbiguityError,
    Trace,
    TraceStep,
    WorldState,
    apply,
    enabled_actions,
    initial_world,
    run,
    world_key,
)

__version__ = "0.1.0"

__all__ = [
    "BallotAllocator",
    "BallotsExhausted",
    "Blocked",
    "Command",
    "CommitGraph",
    "ConflictRelation",
    "Divergence",
    "InstanceId",
    "KeyStateExpectation",
    "KeyStateReport",
    "MessageKey",
    "Mode",
    "QuorumConfig",
    "Record",
    "RecordView",
    "ReplicaState",
    "Schedule",
    "ScheduleAmbiguityError",
    "ScheduleEntry",
    "Status",
    "SystemConfig",
    "Trace",
    "TraceStep",
    "WorldState",
    "apply",
    "assert_key_states",
    "builtin_config",
    "conflicts",
    "counterexample_schedule",
    "divergence_check",
    "enabled_actions",
    "executable",
    "initial_world",
    "key_state_expectations",
    "linearize",
    "load_config",
    "run",
    "world_key",
]
