"""Event monitor: continuous signals in, discrete per-event levels out.

Each configured off-normal event watches one signal through a table of
ordered thresholds with per-threshold hysteresis bands. Crossing threshold
``i`` in the worse direction raises the level to ``i`` immediately;
recovering below level ``i`` requires re-crossing ``t_i`` by more than the
band ``h_i``, which kills level chatter right at a threshold. With all
bands at zero the output is the plain stateless bucket index.

Virtual events combine the discrete levels of several base events through
an explicit lookup table, one layer deep (no virtuals of virtuals).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .errors import ConfigError, MonitorFault
from .model import ContinuousSignal, EventState

RISING = "rising"
FALLING = "falling"


@dataclass(frozen=True)
class ThresholdTable:
    """Discretization table for one monitored signal.

    ``thresholds`` are strictly increasing for ``direction == "rising"``
    (higher is worse) and strictly decreasing for ``"falling"`` (lower is
    worse). The threshold value itself belongs to the worse bucket: a
    rising table escalates at ``value >= t_i``, a falling one at
    ``value <= t_i``. ``hysteresis`` bands must not make neighbouring
    thresholds overlap.
    """

    signal: str
    thresholds: Tuple[float, ...]
    direction: str = RISING
    hysteresis: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.direction not in (RISING, FALLING):
            raise ConfigError(f"table for {self.signal!r}: bad direction {self.direction!r}")
        if not self.thresholds:
            raise ConfigError(f"table for {self.signal!r}: needs at least one threshold")
        hyst = self.hysteresis or tuple(0.0 for _ in self.thresholds)
        if len(hyst) != len(self.thresholds):
            raise ConfigError(
                f"table for {self.signal!r}: {len(hyst)} hysteresis bands "
                f"for {len(self.thresholds)} thresholds"
            )
        object.__setattr__(self, "hysteresis", hyst)
        if any(h < 0.0 for h in hyst):
            raise ConfigError(f"table for {self.signal!r}: negative hysteresis band")
        ts = self.thresholds
        if self.direction == RISING:
            ok_order = all(a < b for a, b in zip(ts, ts[1:]))
            ok_bands = all(
                ts[i] + hyst[i] < ts[i + 1] - hyst[i + 1] for i in range(len(ts) - 1)
            )
        else:
            ok_order = all(a > b for a, b in zip(ts, ts[1:]))
            ok_bands = all(
                ts[i] - hyst[i] > ts[i + 1] + hyst[i + 1] for i in range(len(ts) - 1)
            )
        if not ok_order:
            raise ConfigError(f"table for {self.signal!r}: thresholds not strictly monotone")
        if not ok_bands:
            raise ConfigError(f"table for {self.signal!r}: hysteresis bands overlap")

    @property
    def max_level(self) -> int:
        return len(self.thresholds)

    def bucket(self, value: float) -> int:
        """Stateless bucket index of ``value`` (no hysteresis)."""
        if self.direction == RISING:
            crossed = [value >= t for t in self.thresholds]
        else:
            crossed = [value <= t for t in self.thresholds]
        level = 0
        for i, hit in enumerate(crossed, start=1):
            if hit:
                level = i
        return level

    def holds_level(self, value: float, level: int) -> bool:
        """Whether ``value`` is still within the hysteresis band of ``level``."""
        t = self.thresholds[level - 1]
        h = self.hysteresis[level - 1]
        if self.direction == RISING:
            return value >= t - h
        return value <= t + h


def discretize(signal: ContinuousSignal, table: ThresholdTable, previous_level: int) -> EventState:
    """Map one signal sample to a discrete event level.

    Escalation follows the stateless bucket; de-escalation from the
    previous level only happens once the value clears the hysteresis band
    of each level it leaves.
    """
    if signal.name != table.signal:
        raise ConfigError(f"signal {signal.name!r} fed to table for {table.signal!r}")
    if not 0 <= previous_level <= table.max_level:
        raise ConfigError(
            f"previous level {previous_level} outside [0, {table.max_level}] "
            f"for {table.signal!r}"
        )
    if not math.isfinite(signal.value):
        # ContinuousSignal normally rejects this, but guard against callers
        # bypassing the type.
        raise MonitorFault(f"non-finite value for {signal.name!r}")

    bucket = table.bucket(signal.value)
    if bucket >= previous_level:
        level = bucket
    else:
        level = previous_level
        while level > bucket and not table.holds_level(signal.value, level):
            level -= 1
    return EventState(one_id=table.signal, level=level, time=signal.time)


@dataclass(frozen=True)
class VirtualOneRule:
    """Combine the levels of several base events into one virtual event.

    ``table`` maps tuples of input levels to the output level and must be
    total over the declared input ranges (validated from the schedule).
    """

    id: str
    inputs: Tuple[str, ...]
    table: Mapping[Tuple[int, ...], int]

    def __post_init__(self) -> None:
        if not self.inputs:
            raise ConfigError(f"virtual event {self.id!r}: needs at least one input")

    @property
    def max_level(self) -> int:
        return max(self.table.values(), default=0)


def compose_virtual(inputs: Sequence[EventState], rule: VirtualOneRule) -> EventState:
    """Evaluate a virtual event from its base events' current levels."""
    by_id = {e.one_id: e for e in inputs}
    levels = []
    for one_id in rule.inputs:
        if one_id not in by_id:
            raise ConfigError(f"virtual event {rule.id!r}: missing input {one_id!r}")
        levels.append(by_id[one_id].level)
    key = tuple(levels)
    if key not in rule.table:
        raise ConfigError(f"virtual event {rule.id!r}: no table row for levels {key}")
    time = max(e.time for e in inputs if e.one_id in rule.inputs)
    return EventState(one_id=rule.id, level=rule.table[key], time=time)


@dataclass(frozen=True)
class MonitorConfig:
    """Monitor wiring for one schedule.

    ``tables`` is keyed by base event id, in configuration order; each
    table's ``signal`` field names the continuous signal that event
    watches. Virtual rules are evaluated after all base events, in
    configuration order.
    """

    tables: Mapping[str, ThresholdTable]
    virtual_rules: Tuple[VirtualOneRule, ...] = ()
    plant_failure_one: Optional[str] = None

    def event_ids(self) -> List[str]:
        return list(self.tables.keys()) + [r.id for r in self.virtual_rules]

    def max_level(self, one_id: str) -> int:
        if one_id in self.tables:
            return self.tables[one_id].max_level
        for rule in self.virtual_rules:
            if rule.id == one_id:
                return rule.max_level
        raise ConfigError(f"unknown event id {one_id!r}")


def monitor_step(
    signals: Mapping[str, float],
    config: MonitorConfig,
    previous: Mapping[str, EventState],
    time: float,
) -> Tuple[Dict[str, EventState], List[Tuple[str, str]]]:
    """Produce one event-level vector from one signal snapshot.

    Returns ``(events, faults)``. A non-finite or missing signal does not
    abort the other events: the affected event keeps its previous level
    and is reported in ``faults``. If ``plant_failure_one`` is configured,
    any fault also forces that event to its maximum level.
    """
    events: Dict[str, EventState] = {}
    faults: List[Tuple[str, str]] = []

    for one_id, table in config.tables.items():
        prev_level = previous[one_id].level if one_id in previous else 0
        value = signals.get(table.signal)
        if value is None or not math.isfinite(value):
            faults.append((one_id, f"signal {table.signal!r} unavailable or non-finite"))
            events[one_id] = EventState(one_id=one_id, level=prev_level, time=time)
            continue
        sample = ContinuousSignal(name=table.signal, value=value, time=time)
        raw = discretize(sample, table, prev_level)
        events[one_id] = EventState(one_id=one_id, level=raw.level, time=time)

    for rule in config.virtual_rules:
        events[rule.id] = compose_virtual(list(events.values()), rule)

    if faults and config.plant_failure_one is not None:
        pf = config.plant_failure_one
        events[pf] = EventState(one_id=pf, level=config.max_level(pf), time=time)

    return events, faults
