"""Fixed-period control loop, trace recording and supervisor replay.

Loop contract for one tick: the monitor reads the current plant snapshot,
the supervisor turns the event vector into a scenario and an active task
list, the actuator manager allocates the pending resource requests, the
controllers spend their grants and post requests for the next tick, and
the merged commands drive the plant into the next tick (one tick of
actuation delay). Every stage is a pure function, so a run is a
deterministic map from the schedule to the trace bytes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

from .allocator import allocate, merge_commands
from .config import CompiledSchedule
from .controllers import StepContext, TaskRuntime, build_runtime
from .errors import TraceError
from .model import DangerLevel, EventState, ResourceRequest, ScenarioType
from .monitor import monitor_step
from .plant import PlantState, initial_state, plant_signals, plant_step
from .supervisor import SupervisorState, supervisor_step

EXIT_CLEAN = 0
EXIT_DISRUPTED = 2
EXIT_SHUTDOWN = 3
EXIT_CONFIG = 64

_SHUTDOWN_TYPES = (ScenarioType.SOFT_SHUTDOWN, ScenarioType.DISRUPTION_MITIGATION)


@dataclass
class TickRecord:
    """Everything one tick decided, for the trace."""

    time: float
    signals: Mapping[str, float]
    events: Mapping[str, EventState]
    dangers: Mapping[str, DangerLevel]
    reactions: Mapping[str, int]
    scenario_id: str
    task_ids: List[str]
    group_grants: Mapping[str, float]
    commands: Mapping[str, float]
    task_commands: List[Tuple[str, str, float]]
    faults: List[Tuple[str, str]]
    violations: List[Tuple[str, str, str]]


class ControlLoop:
    """Monitor -> supervisor -> allocator -> controllers, one tick at a time.

    Owns all cross-tick state (previous event levels, supervisor memory,
    controller runtimes, pending requests, last merged commands). The
    plant stays outside so the same loop drives both live runs and fuzzed
    signal traces.
    """

    def __init__(self, schedule: CompiledSchedule):
        self.schedule = schedule
        self.events: Dict[str, EventState] = {}
        self.sup_state = SupervisorState.initial(schedule.supervisor)
        self.runtimes: Dict[str, TaskRuntime] = {}
        self.pending: Dict[str, List[ResourceRequest]] = {}
        self.prev_commands: Dict[str, float] = {gid: 0.0 for gid in schedule.groups}

    def tick(self, signals: Mapping[str, float], time: float, dt: float) -> TickRecord:
        cs = self.schedule
        events, faults = monitor_step(signals, cs.monitor, self.events, time)
        self.events = events
        scenario_id, tasks, dangers, reactions, self.sup_state = supervisor_step(
            events, self.sup_state, cs.supervisor, time
        )

        active_ids = {t.id for t in tasks}
        for stale in [tid for tid in self.runtimes if tid not in active_ids]:
            del self.runtimes[stale]
            self.pending.pop(stale, None)

        ctx = StepContext(time=time, dt=dt, signals=signals, prev_commands=self.prev_commands)
        priorities = {t.id: t.priority for t in tasks}
        requests: List[ResourceRequest] = []
        for task in tasks:
            runtime = self.runtimes.get(task.id)
            if runtime is None:
                runtime = build_runtime(task, cs.controllers[task.controller], cs.groups)
                self.runtimes[task.id] = runtime
            queued = self.pending.get(task.id)
            requests.extend(queued if queued is not None else runtime.requests(ctx))

        allocation = allocate(requests, cs.groups, priorities)

        outputs = []
        for task in tasks:
            runtime = self.runtimes[task.id]
            grants = allocation.grants.get(task.id, {})
            commands, next_requests = runtime.step(ctx, grants)
            outputs.extend((task.id, cmd) for cmd in commands)
            self.pending[task.id] = next_requests

        commands, violations = merge_commands(outputs, allocation, cs.groups, priorities)
        self.prev_commands = commands

        grants_per_group = {gid: allocation.group_total(gid) for gid in cs.groups}
        return TickRecord(
            time=time,
            signals=signals,
            events=events,
            dangers=dangers,
            reactions=reactions,
            scenario_id=scenario_id,
            task_ids=[t.id for t in tasks],
            group_grants=grants_per_group,
            commands=commands,
            task_commands=[(tid, c.group_id, c.value) for tid, c in outputs],
            faults=faults,
            violations=violations,
        )


# ---------------------------------------------------------------------------
# Trace format.
# ---------------------------------------------------------------------------

_PLANT_COLUMNS = ("h98y2", "ne_edge_norm", "w_mj", "nbi_power", "nbi_energy", "gas_flux", "disrupted")


def trace_header(schedule: CompiledSchedule) -> List[str]:
    cols = ["time"]
    for one_id in schedule.one_ids:
        cols += [f"sig_{one_id}", f"evt_{one_id}", f"dng_{one_id}", f"rct_{one_id}"]
    cols += ["scenario", "tasks"]
    for gid in schedule.groups:
        cols += [f"grant_{gid}", f"cmd_{gid}"]
    cols += list(_PLANT_COLUMNS)
    return cols


def _fmt(value: float) -> str:
    return repr(float(value))


def trace_row(schedule: CompiledSchedule, record: TickRecord, plant: PlantState) -> List[str]:
    row = [_fmt(record.time)]
    for one_id in schedule.one_ids:
        signal_name = schedule.signal_of(one_id)
        if signal_name is None or signal_name not in record.signals:
            row.append("")
        else:
            row.append(_fmt(record.signals[signal_name]))
        row.append(str(record.events[one_id].level))
        row.append(record.dangers[one_id].label)
        row.append(str(record.reactions[one_id]))
    row.append(record.scenario_id)
    row.append(";".join(record.task_ids))
    for gid in schedule.groups:
        row.append(_fmt(record.group_grants[gid]))
        row.append(_fmt(record.commands[gid]))
    row += [
        _fmt(plant.h98y2),
        _fmt(plant.ne_edge_norm),
        _fmt(plant.w_mj),
        _fmt(plant.nbi_power),
        _fmt(plant.nbi_energy),
        _fmt(plant.gas_flux),
        "1" if plant.disrupted else "0",
    ]
    return row


def read_trace(path) -> Tuple[List[str], List[Dict[str, str]]]:
    """Load a trace file as (header, rows-as-dicts), all values strings."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceError(f"{path}: empty trace file") from None
        rows = []
        for line in reader:
            if len(line) != len(header):
                raise TraceError(f"{path}: row width {len(line)} != header width {len(header)}")
            rows.append(dict(zip(header, line)))
    return header, rows


# ---------------------------------------------------------------------------
# Full closed-loop run.
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    exit_code: int
    trace_text: str
    rows: int
    disrupted: bool
    final_scenario: str
    violations: int
    faults: int


def run(schedule: CompiledSchedule, observer=None) -> RunResult:
    """Execute the closed loop for the configured duration.

    Stops early when the plant disrupts, after rolling the loop for the
    configured post-roll so the trace shows the frozen state. The exit
    code distinguishes clean completion, disruption and a discharge that
    ended inside a shutdown-type scenario. ``observer``, if given, is
    called with every TickRecord (diagnostic hook; the trace stays the
    source of truth).
    """
    cs = schedule
    dt = cs.run.dt
    n_ticks = int(round(cs.run.duration / dt)) if dt > 0 else 0
    post_roll_ticks = int(round(cs.run.post_roll / dt)) if dt > 0 else 0

    loop = ControlLoop(cs)
    plant = initial_state(cs.plant)
    loop.prev_commands[cs.source.plant.gas_group] = cs.plant.gas_init

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_header(cs))

    violations = 0
    faults = 0
    final_scenario = cs.supervisor.os_mapping.default
    ticks_after_disruption = 0

    for k in range(n_ticks):
        if plant.disrupted:
            ticks_after_disruption += 1
            if ticks_after_disruption > post_roll_ticks:
                break
        t = k * dt
        signals = dict(plant_signals(plant, cs.plant))
        for name, wf in cs.scripted.items():
            signals[name] = wf(t)
        record = loop.tick(signals, t, dt)
        writer.writerow(trace_row(cs, record, plant))
        if observer is not None:
            observer(record)
        violations += len(record.violations)
        faults += len(record.faults)
        final_scenario = record.scenario_id

        plant = plant_step(
            plant,
            cs.plant,
            p_nbi=record.commands.get(cs.source.plant.nbi_group, 0.0),
            gas_flux=record.commands.get(cs.source.plant.gas_group, 0.0),
            dt=dt,
        )

    scenario_type = cs.supervisor.scenarios[final_scenario].type
    if plant.disrupted:
        exit_code = EXIT_DISRUPTED
    elif scenario_type in _SHUTDOWN_TYPES:
        exit_code = EXIT_SHUTDOWN
    else:
        exit_code = EXIT_CLEAN

    text = buf.getvalue()
    return RunResult(
        exit_code=exit_code,
        trace_text=text,
        rows=text.count("\n") - 1,
        disrupted=plant.disrupted,
        final_scenario=final_scenario,
        violations=violations,
        faults=faults,
    )


# ---------------------------------------------------------------------------
# Supervisor-only replay.
# ---------------------------------------------------------------------------

def replay_events(
    schedule: CompiledSchedule,
    times: Sequence[float],
    levels: Sequence[Mapping[str, int]],
) -> List[Dict[str, str]]:
    """Re-run the decision chain over recorded event levels.

    Feeding a run's own event columns back must reproduce its danger,
    reaction, scenario and task columns exactly.
    """
    state = SupervisorState.initial(schedule.supervisor)
    rows: List[Dict[str, str]] = []
    prev_t = None
    for t, lvl in zip(times, levels):
        if prev_t is not None and t <= prev_t:
            raise TraceError(f"trace times not strictly increasing at t={t!r}")
        prev_t = t
        events = {
            one_id: EventState(one_id=one_id, level=lvl[one_id], time=t)
            for one_id in schedule.one_ids
        }
        scenario_id, tasks, dangers, reactions, state = supervisor_step(
            events, state, schedule.supervisor, t
        )
        row = {"time": repr(float(t))}
        for one_id in schedule.one_ids:
            row[f"evt_{one_id}"] = str(lvl[one_id])
            row[f"dng_{one_id}"] = dangers[one_id].label
            row[f"rct_{one_id}"] = str(reactions[one_id])
        row["scenario"] = scenario_id
        row["tasks"] = ";".join(t.id for t in tasks)
        rows.append(row)
    return rows


def replay_file(schedule: CompiledSchedule, trace_path) -> List[Dict[str, str]]:
    """Replay the event columns of a trace file (full or events-only)."""
    header, rows = read_trace(trace_path)
    if "time" not in header:
        raise TraceError(f"{trace_path}: missing 'time' column")
    missing = [one_id for one_id in schedule.one_ids if f"evt_{one_id}" not in header]
    if missing:
        raise TraceError(
            f"{trace_path}: missing event columns for {missing}; "
            f"trace does not match the schedule's event list"
        )
    times: List[float] = []
    levels: List[Dict[str, int]] = []
    for row in rows:
        times.append(float(row["time"]))
        lvl = {}
        for one_id in schedule.one_ids:
            raw = row[f"evt_{one_id}"]
            try:
                value = int(raw)
            except ValueError:
                raise TraceError(f"{trace_path}: bad event level {raw!r} for {one_id}") from None
            top = schedule.monitor.max_level(one_id)
            if not 0 <= value <= top:
                raise TraceError(
                    f"{trace_path}: event level {value} for {one_id} outside [0, {top}]"
                )
            lvl[one_id] = value
        levels.append(lvl)
    return replay_events(schedule, times, levels)


def replay_to_csv(rows: Sequence[Mapping[str, str]], schedule: CompiledSchedule) -> str:
    cols = ["time"]
    for one_id in schedule.one_ids:
        cols += [f"evt_{one_id}", f"dng_{one_id}", f"rct_{one_id}"]
    cols += ["scenario", "tasks"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([row[c] for c in cols])
    return buf.getvalue()
