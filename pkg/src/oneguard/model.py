"""Shared domain vocabulary for the supervisory control chain.

Plain immutable values passed between the event monitor, the supervisor,
the actuator manager and the controllers. Everything here is safe to copy
across execution contexts; nothing mutates after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Mapping, Optional


class DangerLevel(IntEnum):
    """Per-event severity classification, ordered from harmless to worst."""

    NO = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3
    VERY_HIGH = 4

    @classmethod
    def from_name(cls, name: str) -> "DangerLevel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown danger level {name!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


#: Required-response classification attached to each off-normal event.
#: Plain integers 0..4; by default 3 and 4 are treated as irreversible.
REACTION_MIN = 0
REACTION_MAX = 4
DEFAULT_IRREVERSIBLE = frozenset({3, 4})


class ScenarioType(Enum):
    """The five kinds of control scenario a supervisor can select."""

    NORMAL = "normal"
    RECOVERY = "recovery"
    BACKUP = "backup"
    SOFT_SHUTDOWN = "soft_shutdown"
    DISRUPTION_MITIGATION = "disruption_mitigation"

    @classmethod
    def from_name(cls, name: str) -> "ScenarioType":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown scenario type {name!r}") from None


#: Reaction level k escalates to a scenario of this type when the
#: scenario mapping has no explicit row for the observed combination.
SCENARIO_TYPE_FOR_REACTION = {
    0: ScenarioType.NORMAL,
    1: ScenarioType.RECOVERY,
    2: ScenarioType.BACKUP,
    3: ScenarioType.SOFT_SHUTDOWN,
    4: ScenarioType.DISRUPTION_MITIGATION,
}


@dataclass(frozen=True)
class ContinuousSignal:
    """One sample of a continuous plasma/actuator quantity.

    ``value`` must be finite; non-finite samples are rejected here so the
    rest of the chain never sees NaN/Inf through this type. Units are
    config metadata and not carried on the sample.
    """

    name: str
    value: float
    time: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"signal {self.name!r} has non-finite value {self.value!r}")
        if self.time < 0.0:
            raise ValueError(f"signal {self.name!r} has negative time {self.time!r}")


@dataclass(frozen=True)
class EventState:
    """Discrete level of one off-normal event at one instant."""

    one_id: str
    level: int
    time: float

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError(f"event {self.one_id!r} has negative level {self.level}")


@dataclass(frozen=True)
class EventTrigger:
    """Event condition gating a task: level of ``one_id`` within bounds."""

    one_id: str
    min_level: int = 0
    max_level: Optional[int] = None

    def holds(self, level: int) -> bool:
        if level < self.min_level:
            return False
        return self.max_level is None or level <= self.max_level


@dataclass(frozen=True)
class Activation:
    """When a control task is live: a time window and/or an event trigger.

    Bounds default to the whole run; ``t_end`` is exclusive so adjacent
    windows do not overlap.
    """

    t_start: float = 0.0
    t_end: Optional[float] = None
    trigger: Optional[EventTrigger] = None

    def holds(self, time: float, events: Mapping[str, int]) -> bool:
        if time < self.t_start:
            return False
        if self.t_end is not None and time >= self.t_end:
            return False
        if self.trigger is not None:
            return self.trigger.holds(events.get(self.trigger.one_id, 0))
        return True


@dataclass(frozen=True)
class ControlTask:
    """One control objective inside a scenario's prioritized task list.

    ``priority`` 1 is the most important; priorities are unique within a
    scenario. ``reference`` is the scenario-specific setpoint (a scalar or
    a waveform object) handed to the bound controller.
    """

    id: str
    priority: int
    controller: str
    group: str
    reference: Any = None
    activation: Activation = field(default_factory=Activation)

    def __post_init__(self) -> None:
        if self.priority < 1:
            raise ValueError(f"task {self.id!r}: priority must be >= 1")


@dataclass(frozen=True)
class ResourceRequest:
    """A task asking one actuator group for an amount of resource.

    ``min_acceptable`` is the smallest grant worth having; anything less
    and the task prefers to be starved outright.
    """

    task_id: str
    group_id: str
    amount: float
    min_acceptable: float = 0.0

    def __post_init__(self) -> None:
        if self.amount < 0.0 or self.min_acceptable < 0.0:
            raise ValueError(f"request {self.task_id}/{self.group_id}: amounts must be >= 0")
        if self.min_acceptable > self.amount:
            raise ValueError(
                f"request {self.task_id}/{self.group_id}: "
                f"min_acceptable {self.min_acceptable} exceeds amount {self.amount}"
            )


@dataclass(frozen=True)
class Allocation:
    """Result of one allocation round.

    ``grants`` maps task id -> group id -> granted amount. A task may hold
    grants on several groups (one per group). ``starved`` lists the
    (task, group) requests that received nothing.
    """

    grants: Mapping[str, Mapping[str, float]]
    starved: tuple = ()

    def grant(self, task_id: str, group_id: str) -> float:
        return self.grants.get(task_id, {}).get(group_id, 0.0)

    def group_total(self, group_id: str) -> float:
        return sum(g.get(group_id, 0.0) for g in self.grants.values())


# ---------------------------------------------------------------------------
# Serialization helpers. Traces and tooling exchange these values as plain
# dicts; round-tripping through to_dict/from_dict must be the identity.
# ---------------------------------------------------------------------------

def signal_to_dict(s: ContinuousSignal) -> dict:
    return {"name": s.name, "value": s.value, "time": s.time}


def signal_from_dict(d: Mapping[str, Any]) -> ContinuousSignal:
    return ContinuousSignal(name=d["name"], value=float(d["value"]), time=float(d["time"]))


def event_to_dict(e: EventState) -> dict:
    return {"one_id": e.one_id, "level": e.level, "time": e.time}


def event_from_dict(d: Mapping[str, Any]) -> EventState:
    return EventState(one_id=d["one_id"], level=int(d["level"]), time=float(d["time"]))


def task_to_dict(t: ControlTask) -> dict:
    act: dict[str, Any] = {"t_start": t.activation.t_start, "t_end": t.activation.t_end}
    if t.activation.trigger is not None:
        act["trigger"] = {
            "one_id": t.activation.trigger.one_id,
            "min_level": t.activation.trigger.min_level,
            "max_level": t.activation.trigger.max_level,
        }
    return {
        "id": t.id,
        "priority": t.priority,
        "controller": t.controller,
        "group": t.group,
        "reference": t.reference,
        "activation": act,
    }


def task_from_dict(d: Mapping[str, Any]) -> ControlTask:
    act = d.get("activation", {})
    trigger = None
    if act.get("trigger") is not None:
        tr = act["trigger"]
        trigger = EventTrigger(
            one_id=tr["one_id"],
            min_level=int(tr.get("min_level", 0)),
            max_level=tr.get("max_level"),
        )
    return ControlTask(
        id=d["id"],
        priority=int(d["priority"]),
        controller=d["controller"],
        group=d["group"],
        reference=d.get("reference"),
        activation=Activation(
            t_start=float(act.get("t_start", 0.0)),
            t_end=act.get("t_end"),
            trigger=trigger,
        ),
    )
