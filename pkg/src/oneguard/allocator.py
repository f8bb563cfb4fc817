"""Actuator manager: resource allocation and command merging.

Allocation is greedy in task-priority order (priority 1 first): each
request gets ``min(requested, remaining availability)`` if that clears its
minimum acceptable amount, otherwise nothing. This is exactly the
priority-lexicographic optimum (verified against a brute-force oracle in
the tests) and is deterministic and cheap enough for a real-time tick.

Merging distinguishes two group semantics: *additive* groups (powers,
fluxes) sum their contributors and clamp to [0, capacity]; *exclusive*
groups (e.g. beam-aiming) take only the highest-priority holder's command.
A command from a task without a grant on the group is dropped and reported
as a violation rather than silently applied.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import ConfigError
from .model import Allocation, ResourceRequest

ADDITIVE = "additive"
EXCLUSIVE = "exclusive"


@dataclass(frozen=True)
class ActuatorGroup:
    """One shared actuator resource pool."""

    id: str
    capacity: float
    semantics: str = ADDITIVE
    command_range: Tuple[float, float] = (0.0, 0.0)
    unit: str = ""
    availability: Optional[float] = None

    def __post_init__(self) -> None:
        if self.capacity < 0.0:
            raise ConfigError(f"group {self.id!r}: negative capacity")
        if self.semantics not in (ADDITIVE, EXCLUSIVE):
            raise ConfigError(f"group {self.id!r}: bad semantics {self.semantics!r}")
        if self.command_range == (0.0, 0.0):
            object.__setattr__(self, "command_range", (0.0, self.capacity))
        lo, hi = self.command_range
        if lo > hi:
            raise ConfigError(f"group {self.id!r}: command range inverted")
        if self.availability is None:
            object.__setattr__(self, "availability", self.capacity)
        if not 0.0 <= self.availability <= self.capacity:
            raise ConfigError(f"group {self.id!r}: availability outside [0, capacity]")


@dataclass(frozen=True)
class ActuatorCommand:
    """A value commanded on one group at one instant."""

    group_id: str
    value: float
    time: float = 0.0


def allocate(
    requests: Sequence[ResourceRequest],
    groups: Mapping[str, ActuatorGroup],
    priorities: Mapping[str, int],
) -> Allocation:
    """Grant resources to requests in task-priority order.

    ``priorities`` maps task id to its priority in the current scenario.
    Requests from the same task on the same group must not repeat. Tasks
    whose request cannot reach its minimum acceptable amount are granted
    zero and listed in ``Allocation.starved``. The minimum comparison
    carries a 1e-9 slack so accumulated float error in the remaining
    availability cannot starve an exactly-satisfiable request.
    """
    seen: set = set()
    for req in requests:
        key = (req.task_id, req.group_id)
        if key in seen:
            raise ConfigError(f"duplicate request for task {req.task_id!r} on group {req.group_id!r}")
        seen.add(key)
        if req.group_id not in groups:
            raise ConfigError(f"request for unknown group {req.group_id!r}")
        if req.task_id not in priorities:
            raise ConfigError(f"request from inactive task {req.task_id!r}")

    remaining = {gid: g.availability for gid, g in groups.items()}
    # Stable order: priority first, then group id so multi-group tasks
    # allocate deterministically.
    ordered = sorted(requests, key=lambda r: (priorities[r.task_id], r.group_id))

    grants: Dict[str, Dict[str, float]] = {}
    starved: List[Tuple[str, str]] = []
    for req in ordered:
        granted = min(req.amount, remaining[req.group_id])
        if granted + 1e-9 < req.min_acceptable or (req.amount > 0.0 and granted <= 0.0):
            starved.append((req.task_id, req.group_id))
            continue
        remaining[req.group_id] -= granted
        grants.setdefault(req.task_id, {})[req.group_id] = granted
    return Allocation(grants=grants, starved=tuple(starved))


def merge_commands(
    outputs: Sequence[Tuple[str, ActuatorCommand]],
    allocation: Allocation,
    groups: Mapping[str, ActuatorGroup],
    priorities: Mapping[str, int],
) -> Tuple[Dict[str, float], List[Tuple[str, str, str]]]:
    """Combine per-task commands into one final value per group.

    Returns ``(commands, violations)`` where ``commands`` maps group id to
    the merged value (0 for groups nobody commands) and ``violations``
    lists dropped contributions as ``(task, group, reason)``.
    """
    contributions: Dict[str, List[Tuple[int, str, float]]] = {gid: [] for gid in groups}
    violations: List[Tuple[str, str, str]] = []

    for task_id, cmd in outputs:
        if cmd.group_id not in groups:
            raise ConfigError(f"command on unknown group {cmd.group_id!r}")
        group = groups[cmd.group_id]
        grant = allocation.grant(task_id, cmd.group_id)
        if grant <= 0.0:
            if cmd.value != 0.0:
                violations.append((task_id, cmd.group_id, "no grant"))
            continue
        if group.semantics == ADDITIVE and abs(cmd.value) > grant + 1e-12:
            violations.append((task_id, cmd.group_id, "command exceeds grant"))
            continue
        contributions[cmd.group_id].append((priorities.get(task_id, 1 << 30), task_id, cmd.value))

    commands: Dict[str, float] = {}
    for gid, group in groups.items():
        contribs = contributions[gid]
        if not contribs:
            commands[gid] = 0.0
            continue
        if group.semantics == ADDITIVE:
            total = sum(v for _, _, v in contribs)
            commands[gid] = min(max(total, 0.0), group.capacity)
        else:
            contribs.sort(key=lambda c: (c[0], c[1]))
            lo, hi = group.command_range
            commands[gid] = min(max(contribs[0][2], lo), hi)
    return commands, violations
