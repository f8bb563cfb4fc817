"""Pulse-schedule document: parsing, validation, compilation.

The schedule is a YAML document with sections ``run``, ``plant``,
``signals``, ``ones``, ``virtual_ones``, ``os_mapping``, ``scenarios``,
``controllers`` and ``actuator_groups``. Parsing is strict about shape
(unknown keys are rejected, every number must be finite, unit suffixes
must match the field's declared unit); ``validate`` then reports semantic
problems as diagnostics without throwing. A schedule that validates with
zero errors compiles into runtime objects that cannot raise ConfigError
on any input trace.

YAML 1.1 note: an unquoted ``no`` loads as boolean false. Since "no" is a
legitimate danger-level name, bare booleans in danger positions are read
back as "no"/"yes" rather than rejected.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import yaml

from .allocator import ADDITIVE, EXCLUSIVE, ActuatorGroup
from .controllers import (
    HOLD,
    LINEAR,
    MODE_CUTOFF,
    MODE_FREEZE,
    MODE_NORMAL,
    MODE_RECOVERY,
    MODE_SLOW_RAMP,
    Waveform,
)
from .errors import ConfigError
from .model import (
    Activation,
    ControlTask,
    DangerLevel,
    EventTrigger,
    REACTION_MAX,
    REACTION_MIN,
    SCENARIO_TYPE_FOR_REACTION,
    ScenarioType,
)
from .monitor import FALLING, MonitorConfig, RISING, ThresholdTable, VirtualOneRule
from .plant import DisruptionBoundary, PlantParams
from .supervisor import (
    DangerFsm,
    OsMapping,
    ReactionFsm,
    Scenario,
    SupervisorConfig,
)

#: Signals the surrogate plant publishes every tick.
PLANT_SIGNALS = (
    "h98y2",
    "ne_edge_norm",
    "stored_energy",
    "nbi_power",
    "nbi_energy",
    "nbi_energy_frac",
    "gas_flux",
    "d_ne_edge",
)

CONTROLLER_TYPES = ("feedforward", "pid", "da_power", "gas_shaper", "ntm")

_QUANTITY_RE = re.compile(r"\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([^\s]*)\s*")


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding, anchored to a document path."""

    severity: str  # "error" or "warning"
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.path}: {self.message}"


def _is_error(d: Diagnostic) -> bool:
    return d.severity == "error"


def errors_of(diagnostics: Sequence[Diagnostic]) -> List[Diagnostic]:
    return [d for d in diagnostics if _is_error(d)]


class _Shape:
    """Error accumulator for the shape-checking pass."""

    def __init__(self) -> None:
        self.errors: List[str] = []

    def fail(self, path: str, message: str) -> None:
        self.errors.append(f"{path}: {message}")

    def number(
        self,
        value: Any,
        path: str,
        unit: Optional[str] = None,
        default: Optional[float] = None,
    ) -> float:
        """Parse a numeric leaf, optionally suffixed with a declared unit."""
        if value is None and default is not None:
            return default
        if isinstance(value, bool):
            self.fail(path, f"expected a number, got boolean {value}")
            return 0.0
        if isinstance(value, (int, float)):
            num = float(value)
        elif isinstance(value, str):
            m = _QUANTITY_RE.fullmatch(value)
            if not m:
                self.fail(path, f"cannot parse number {value!r}")
                return 0.0
            num = float(m.group(1))
            suffix = m.group(2)
            if suffix:
                if unit is None:
                    self.fail(path, f"field does not declare a unit, got suffix {suffix!r}")
                elif suffix != unit:
                    self.fail(path, f"unit suffix {suffix!r} does not match declared {unit!r}")
        else:
            self.fail(path, f"expected a number, got {type(value).__name__}")
            return 0.0
        if not math.isfinite(num):
            self.fail(path, f"number must be finite, got {num!r}")
            return 0.0
        return num

    def integer(self, value: Any, path: str, default: Optional[int] = None) -> int:
        if value is None and default is not None:
            return default
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
            return 0
        return value

    def string(self, value: Any, path: str, default: Optional[str] = None) -> str:
        if value is None and default is not None:
            return default
        if not isinstance(value, str):
            self.fail(path, f"expected a string, got {value!r}")
            return ""
        return value

    def mapping(self, value: Any, path: str, allowed: Mapping[str, bool]) -> Dict[str, Any]:
        """Check a mapping node: required keys present, no unknown keys."""
        if value is None:
            value = {}
        if not isinstance(value, dict):
            self.fail(path, f"expected a mapping, got {type(value).__name__}")
            return {}
        for key in value:
            if key not in allowed:
                self.fail(path, f"unknown key {key!r}")
        for key, required in allowed.items():
            if required and key not in value:
                self.fail(path, f"missing required key {key!r}")
        return value

    def sequence(self, value: Any, path: str, required: bool = True) -> List[Any]:
        if value is None:
            if required:
                self.fail(path, "missing required list")
            return []
        if not isinstance(value, list):
            self.fail(path, f"expected a list, got {type(value).__name__}")
            return []
        return value


def _danger_name(value: Any) -> str:
    # YAML 1.1 reads bare no/yes as booleans; map them back to names.
    if value is False:
        return "no"
    if value is True:
        return "yes"
    return str(value)


# ---------------------------------------------------------------------------
# Typed document model.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WaveformSpec:
    points: Tuple[Tuple[float, float], ...]
    interpolation: str = LINEAR

    def build(self) -> Waveform:
        return Waveform(points=self.points, interpolation=self.interpolation)


@dataclass(frozen=True)
class RunSpec:
    dt: float
    duration: float
    post_roll: float = 0.0
    plant_failure_one: Optional[str] = None


@dataclass(frozen=True)
class PlantSpec:
    tau_e: float
    tau_98: float
    tau_n: float
    k_gas: float
    p_ohmic: float
    nbi_energy_limit: float
    w_init: float
    ne_init: float
    gas_init: float
    nbi_group: str
    gas_group: str
    degradation: Tuple[Tuple[float, float], ...]
    boundary: Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class OneSpec:
    id: str
    signal: str
    direction: str
    thresholds: Tuple[float, ...]
    hysteresis: Tuple[float, ...]
    unit: Optional[str]
    danger: Tuple[Tuple[int, str], ...]
    reaction: Tuple[Tuple[str, int], ...]
    irreversible: Tuple[int, ...]

    @property
    def max_level(self) -> int:
        return len(self.thresholds)


@dataclass(frozen=True)
class VirtualOneSpec:
    id: str
    inputs: Tuple[str, ...]
    rows: Tuple[Tuple[Tuple[int, ...], int], ...]
    danger: Tuple[Tuple[int, str], ...]
    reaction: Tuple[Tuple[str, int], ...]
    irreversible: Tuple[int, ...]

    @property
    def max_level(self) -> int:
        return max((lvl for _, lvl in self.rows), default=0)


@dataclass(frozen=True)
class ActivationSpec:
    t_start: float = 0.0
    t_end: Optional[float] = None
    one: Optional[str] = None
    min_level: int = 0
    max_level: Optional[int] = None

    def build(self) -> Activation:
        trigger = None
        if self.one is not None:
            trigger = EventTrigger(one_id=self.one, min_level=self.min_level, max_level=self.max_level)
        return Activation(t_start=self.t_start, t_end=self.t_end, trigger=trigger)


@dataclass(frozen=True)
class TaskSpec:
    id: str
    priority: int
    controller: str
    group: str
    reference: Optional[Any]  # float or WaveformSpec
    activation: ActivationSpec

    def build(self) -> ControlTask:
        ref = self.reference
        if isinstance(ref, WaveformSpec):
            ref = ref.build()
        return ControlTask(
            id=self.id,
            priority=self.priority,
            controller=self.controller,
            group=self.group,
            reference=ref,
            activation=self.activation.build(),
        )


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    type: str
    tasks: Tuple[TaskSpec, ...]


@dataclass(frozen=True)
class GroupSpec:
    id: str
    capacity: float
    semantics: str
    command_range: Tuple[float, float]
    unit: str


@dataclass(frozen=True)
class PulseSchedule:
    """Typed mirror of one schedule document."""

    doc: Mapping[str, Any]
    run: RunSpec
    plant: PlantSpec
    scripted: Tuple[Tuple[str, WaveformSpec], ...]
    ones: Tuple[OneSpec, ...]
    virtual_ones: Tuple[VirtualOneSpec, ...]
    os_default: str
    os_rows: Tuple[Tuple[Tuple[int, ...], str], ...]
    scenarios: Tuple[ScenarioSpec, ...]
    controllers: Tuple[Tuple[str, Mapping[str, Any]], ...]
    groups: Tuple[GroupSpec, ...]

    @property
    def one_ids(self) -> Tuple[str, ...]:
        return tuple(o.id for o in self.ones) + tuple(v.id for v in self.virtual_ones)

    def scenario_map(self) -> Dict[str, ScenarioSpec]:
        return {s.id: s for s in self.scenarios}

    def controller_map(self) -> Dict[str, Mapping[str, Any]]:
        return dict(self.controllers)

    def group_map(self) -> Dict[str, GroupSpec]:
        return {g.id: g for g in self.groups}


# ---------------------------------------------------------------------------
# Parse (shape pass).
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "run": True,
    "plant": True,
    "signals": False,
    "ones": True,
    "virtual_ones": False,
    "os_mapping": True,
    "scenarios": True,
    "controllers": True,
    "actuator_groups": True,
}


def _parse_waveform(node: Any, path: str, sh: _Shape) -> WaveformSpec:
    m = sh.mapping(node, path, {"points": True, "interpolation": False, "unit": False})
    unit = m.get("unit")
    if unit is not None and not isinstance(unit, str):
        sh.fail(f"{path}.unit", "unit must be a string")
        unit = None
    interpolation = sh.string(m.get("interpolation"), f"{path}.interpolation", default=LINEAR)
    points: List[Tuple[float, float]] = []
    for i, pt in enumerate(sh.sequence(m.get("points"), f"{path}.points")):
        if not isinstance(pt, list) or len(pt) != 2:
            sh.fail(f"{path}.points[{i}]", "each breakpoint must be a [time, value] pair")
            continue
        t = sh.number(pt[0], f"{path}.points[{i}].time", unit="s")
        v = sh.number(pt[1], f"{path}.points[{i}].value", unit=unit)
        points.append((t, v))
    return WaveformSpec(points=tuple(points), interpolation=interpolation)


def _parse_reference(node: Any, path: str, sh: _Shape) -> Optional[Any]:
    if node is None:
        return None
    if isinstance(node, dict):
        return _parse_waveform(node, path, sh)
    return sh.number(node, path)


def _parse_level_map(node: Any, path: str, sh: _Shape) -> Tuple[Tuple[int, str], ...]:
    if not isinstance(node, dict):
        sh.fail(path, "danger map must be a mapping of event level to danger name")
        return ()
    out = []
    for key, value in node.items():
        lvl = sh.integer(key, f"{path}[{key!r}]")
        out.append((lvl, _danger_name(value)))
    return tuple(out)


def _parse_reaction_map(node: Any, path: str, sh: _Shape) -> Tuple[Tuple[str, int], ...]:
    if not isinstance(node, dict):
        sh.fail(path, "reaction map must be a mapping of danger name to reaction level")
        return ()
    out = []
    for key, value in node.items():
        out.append((_danger_name(key), sh.integer(value, f"{path}[{key!r}]")))
    return tuple(out)


def _parse_one(node: Any, path: str, sh: _Shape) -> OneSpec:
    m = sh.mapping(
        node,
        path,
        {
            "id": True,
            "signal": True,
            "direction": True,
            "thresholds": True,
            "hysteresis": False,
            "unit": False,
            "danger": True,
            "reaction": True,
            "irreversible": False,
        },
    )
    unit = m.get("unit")
    if unit is not None and not isinstance(unit, str):
        sh.fail(f"{path}.unit", "unit must be a string")
        unit = None
    thresholds = tuple(
        sh.number(v, f"{path}.thresholds[{i}]", unit=unit)
        for i, v in enumerate(sh.sequence(m.get("thresholds"), f"{path}.thresholds"))
    )
    hyst_node = m.get("hysteresis")
    if hyst_node is None:
        hysteresis = tuple(0.0 for _ in thresholds)
    else:
        hysteresis = tuple(
            sh.number(v, f"{path}.hysteresis[{i}]", unit=unit)
            for i, v in enumerate(sh.sequence(hyst_node, f"{path}.hysteresis"))
        )
    irreversible = tuple(
        sh.integer(v, f"{path}.irreversible[{i}]")
        for i, v in enumerate(sh.sequence(m.get("irreversible", [3, 4]), f"{path}.irreversible"))
    )
    return OneSpec(
        id=sh.string(m.get("id"), f"{path}.id"),
        signal=sh.string(m.get("signal"), f"{path}.signal"),
        direction=sh.string(m.get("direction"), f"{path}.direction"),
        thresholds=thresholds,
        hysteresis=hysteresis,
        unit=unit,
        danger=_parse_level_map(m.get("danger"), f"{path}.danger", sh),
        reaction=_parse_reaction_map(m.get("reaction"), f"{path}.reaction", sh),
        irreversible=irreversible,
    )


def _parse_virtual(node: Any, path: str, sh: _Shape) -> VirtualOneSpec:
    m = sh.mapping(
        node,
        path,
        {
            "id": True,
            "inputs": True,
            "rows": True,
            "danger": True,
            "reaction": True,
            "irreversible": False,
        },
    )
    inputs = tuple(
        sh.string(v, f"{path}.inputs[{i}]")
        for i, v in enumerate(sh.sequence(m.get("inputs"), f"{path}.inputs"))
    )
    rows: List[Tuple[Tuple[int, ...], int]] = []
    for i, row in enumerate(sh.sequence(m.get("rows"), f"{path}.rows")):
        rm = sh.mapping(row, f"{path}.rows[{i}]", {"levels": True, "level": True})
        levels = tuple(
            sh.integer(v, f"{path}.rows[{i}].levels[{j}]")
            for j, v in enumerate(sh.sequence(rm.get("levels"), f"{path}.rows[{i}].levels"))
        )
        rows.append((levels, sh.integer(rm.get("level"), f"{path}.rows[{i}].level")))
    irreversible = tuple(
        sh.integer(v, f"{path}.irreversible[{i}]")
        for i, v in enumerate(sh.sequence(m.get("irreversible", [3, 4]), f"{path}.irreversible"))
    )
    return VirtualOneSpec(
        id=sh.string(m.get("id"), f"{path}.id"),
        inputs=inputs,
        rows=tuple(rows),
        danger=_parse_level_map(m.get("danger"), f"{path}.danger", sh),
        reaction=_parse_reaction_map(m.get("reaction"), f"{path}.reaction", sh),
        irreversible=irreversible,
    )


def _parse_activation(node: Any, path: str, sh: _Shape) -> ActivationSpec:
    if node is None:
        return ActivationSpec()
    m = sh.mapping(node, path, {"t_start": False, "t_end": False, "event": False})
    t_start = sh.number(m.get("t_start"), f"{path}.t_start", unit="s", default=0.0)
    t_end = None
    if m.get("t_end") is not None:
        t_end = sh.number(m.get("t_end"), f"{path}.t_end", unit="s")
    one = None
    min_level = 0
    max_level = None
    if m.get("event") is not None:
        em = sh.mapping(m.get("event"), f"{path}.event", {"one": True, "min_level": False, "max_level": False})
        one = sh.string(em.get("one"), f"{path}.event.one")
        min_level = sh.integer(em.get("min_level"), f"{path}.event.min_level", default=0)
        if em.get("max_level") is not None:
            max_level = sh.integer(em.get("max_level"), f"{path}.event.max_level")
    return ActivationSpec(t_start=t_start, t_end=t_end, one=one, min_level=min_level, max_level=max_level)


def _parse_task(node: Any, path: str, sh: _Shape) -> TaskSpec:
    m = sh.mapping(
        node,
        path,
        {
            "id": True,
            "priority": True,
            "controller": True,
            "group": True,
            "reference": False,
            "activation": False,
        },
    )
    return TaskSpec(
        id=sh.string(m.get("id"), f"{path}.id"),
        priority=sh.integer(m.get("priority"), f"{path}.priority", default=1),
        controller=sh.string(m.get("controller"), f"{path}.controller"),
        group=sh.string(m.get("group"), f"{path}.group"),
        reference=_parse_reference(m.get("reference"), f"{path}.reference", sh),
        activation=_parse_activation(m.get("activation"), f"{path}.activation", sh),
    )


def _parse_scenario(node: Any, path: str, sh: _Shape) -> ScenarioSpec:
    m = sh.mapping(node, path, {"id": True, "type": True, "tasks": False})
    tasks = tuple(
        _parse_task(t, f"{path}.tasks[{i}]", sh)
        for i, t in enumerate(sh.sequence(m.get("tasks", []), f"{path}.tasks", required=False))
    )
    return ScenarioSpec(
        id=sh.string(m.get("id"), f"{path}.id"),
        type=sh.string(m.get("type"), f"{path}.type"),
        tasks=tasks,
    )


def _parse_group(node: Any, path: str, sh: _Shape) -> GroupSpec:
    m = sh.mapping(
        node,
        path,
        {"id": True, "capacity": True, "semantics": False, "command_range": False, "unit": False},
    )
    unit = sh.string(m.get("unit"), f"{path}.unit", default="")
    capacity = sh.number(m.get("capacity"), f"{path}.capacity", unit=unit or None)
    cr = m.get("command_range")
    if cr is None:
        command_range = (0.0, capacity)
    elif isinstance(cr, list) and len(cr) == 2:
        command_range = (
            sh.number(cr[0], f"{path}.command_range[0]", unit=unit or None),
            sh.number(cr[1], f"{path}.command_range[1]", unit=unit or None),
        )
    else:
        sh.fail(f"{path}.command_range", "expected a [lo, hi] pair")
        command_range = (0.0, capacity)
    return GroupSpec(
        id=sh.string(m.get("id"), f"{path}.id"),
        capacity=capacity,
        semantics=sh.string(m.get("semantics"), f"{path}.semantics", default=ADDITIVE),
        command_range=command_range,
        unit=unit,
    )


def _parse_pairs(node: Any, path: str, sh: _Shape) -> Tuple[Tuple[float, float], ...]:
    out = []
    for i, pt in enumerate(sh.sequence(node, path)):
        if not isinstance(pt, list) or len(pt) != 2:
            sh.fail(f"{path}[{i}]", "expected a [x, y] pair")
            continue
        out.append((sh.number(pt[0], f"{path}[{i}][0]"), sh.number(pt[1], f"{path}[{i}][1]")))
    return tuple(out)


def _parse_plant(node: Any, sh: _Shape) -> PlantSpec:
    m = sh.mapping(
        node,
        "plant",
        {
            "tau_e": True,
            "tau_98": True,
            "tau_n": True,
            "k_gas": True,
            "p_ohmic": True,
            "nbi_energy_limit": True,
            "w_init": False,
            "ne_init": False,
            "gas_init": False,
            "nbi_group": True,
            "gas_group": True,
            "degradation": True,
            "boundary": True,
        },
    )
    return PlantSpec(
        tau_e=sh.number(m.get("tau_e"), "plant.tau_e", unit="s"),
        tau_98=sh.number(m.get("tau_98"), "plant.tau_98", unit="s"),
        tau_n=sh.number(m.get("tau_n"), "plant.tau_n", unit="s"),
        k_gas=sh.number(m.get("k_gas"), "plant.k_gas"),
        p_ohmic=sh.number(m.get("p_ohmic"), "plant.p_ohmic", unit="MW"),
        nbi_energy_limit=sh.number(m.get("nbi_energy_limit"), "plant.nbi_energy_limit", unit="MJ"),
        w_init=sh.number(m.get("w_init"), "plant.w_init", unit="MJ", default=0.0),
        ne_init=sh.number(m.get("ne_init"), "plant.ne_init", default=0.0),
        gas_init=sh.number(m.get("gas_init"), "plant.gas_init", default=0.0),
        nbi_group=sh.string(m.get("nbi_group"), "plant.nbi_group"),
        gas_group=sh.string(m.get("gas_group"), "plant.gas_group"),
        degradation=_parse_pairs(m.get("degradation"), "plant.degradation", sh),
        boundary=_parse_pairs(m.get("boundary"), "plant.boundary", sh),
    )


def parse(text: str) -> PulseSchedule:
    """Parse a schedule document, raising ConfigError on shape problems."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"schedule is not valid YAML: {exc}") from None
    if doc is None:
        raise ConfigError("schedule document is empty")
    if not isinstance(doc, dict):
        raise ConfigError("schedule document must be a mapping")

    sh = _Shape()
    top = sh.mapping(doc, "schedule", _TOP_KEYS)

    run_m = sh.mapping(top.get("run"), "run", {"dt": True, "duration": True, "post_roll": False, "plant_failure_one": False})
    pf = run_m.get("plant_failure_one")
    if pf is not None and not isinstance(pf, str):
        sh.fail("run.plant_failure_one", "expected an event id string")
        pf = None
    run = RunSpec(
        dt=sh.number(run_m.get("dt"), "run.dt", unit="s"),
        duration=sh.number(run_m.get("duration"), "run.duration", unit="s"),
        post_roll=sh.number(run_m.get("post_roll"), "run.post_roll", unit="s", default=0.0),
        plant_failure_one=pf,
    )

    plant = _parse_plant(top.get("plant"), sh)

    scripted: List[Tuple[str, WaveformSpec]] = []
    sig_node = top.get("signals") or {}
    if not isinstance(sig_node, dict):
        sh.fail("signals", "expected a mapping of signal name to waveform")
    else:
        for name, wf in sig_node.items():
            scripted.append((str(name), _parse_waveform(wf, f"signals.{name}", sh)))

    ones = tuple(
        _parse_one(o, f"ones[{i}]", sh) for i, o in enumerate(sh.sequence(top.get("ones"), "ones"))
    )
    virtual_ones = tuple(
        _parse_virtual(v, f"virtual_ones[{i}]", sh)
        for i, v in enumerate(sh.sequence(top.get("virtual_ones", []), "virtual_ones", required=False))
    )

    os_m = sh.mapping(top.get("os_mapping"), "os_mapping", {"default": True, "rows": False})
    os_rows: List[Tuple[Tuple[int, ...], str]] = []
    for i, row in enumerate(sh.sequence(os_m.get("rows", []), "os_mapping.rows", required=False)):
        rm = sh.mapping(row, f"os_mapping.rows[{i}]", {"reactions": True, "scenario": True})
        reactions = tuple(
            sh.integer(v, f"os_mapping.rows[{i}].reactions[{j}]")
            for j, v in enumerate(sh.sequence(rm.get("reactions"), f"os_mapping.rows[{i}].reactions"))
        )
        os_rows.append((reactions, sh.string(rm.get("scenario"), f"os_mapping.rows[{i}].scenario")))

    scenarios = tuple(
        _parse_scenario(s, f"scenarios[{i}]", sh)
        for i, s in enumerate(sh.sequence(top.get("scenarios"), "scenarios"))
    )

    controllers: List[Tuple[str, Mapping[str, Any]]] = []
    ctrl_node = top.get("controllers")
    if not isinstance(ctrl_node, dict):
        sh.fail("controllers", "expected a mapping of controller id to settings")
    else:
        for cid, cfg in ctrl_node.items():
            if not isinstance(cfg, dict):
                sh.fail(f"controllers.{cid}", "expected a mapping")
                continue
            controllers.append((str(cid), dict(cfg)))

    groups = tuple(
        _parse_group(g, f"actuator_groups[{i}]", sh)
        for i, g in enumerate(sh.sequence(top.get("actuator_groups"), "actuator_groups"))
    )

    os_default = sh.string(os_m.get("default"), "os_mapping.default", default="")

    if sh.errors:
        raise ConfigError("schedule has shape errors:\n  " + "\n  ".join(sh.errors))

    return PulseSchedule(
        doc=doc,
        run=run,
        plant=plant,
        scripted=tuple(scripted),
        ones=ones,
        virtual_ones=virtual_ones,
        os_default=os_default,
        os_rows=tuple(os_rows),
        scenarios=scenarios,
        controllers=tuple(controllers),
        groups=groups,
    )


def parse_file(path) -> PulseSchedule:
    with open(path, "r", encoding="utf-8") as fh:
        return parse(fh.read())


def serialize(ps: PulseSchedule) -> str:
    """Dump a schedule back to YAML; ``parse(serialize(ps)) == ps``."""
    return yaml.safe_dump(dict(ps.doc), sort_keys=False)


# ---------------------------------------------------------------------------
# Validate (semantic pass).
# ---------------------------------------------------------------------------

_DANGER_NAMES = tuple(d.label for d in DangerLevel)
_SCENARIO_TYPES = tuple(t.value for t in ScenarioType)


def _check_waveform(spec: WaveformSpec, path: str, out: List[Diagnostic]) -> None:
    if not spec.points:
        out.append(Diagnostic("error", path, "waveform has no breakpoints"))
        return
    times = [t for t, _ in spec.points]
    if any(a >= b for a, b in zip(times, times[1:])):
        out.append(Diagnostic("error", path, "breakpoint times must be strictly increasing"))
    if spec.interpolation not in (HOLD, LINEAR):
        out.append(Diagnostic("error", path, f"unknown interpolation {spec.interpolation!r}"))


def _check_danger_map(
    danger: Tuple[Tuple[int, str], ...], max_level: int, path: str, out: List[Diagnostic]
) -> None:
    seen = {}
    for lvl, name in danger:
        if lvl < 0 or lvl > max_level:
            out.append(Diagnostic("error", path, f"level {lvl} outside [0, {max_level}]"))
        if name not in _DANGER_NAMES:
            out.append(Diagnostic("error", path, f"unknown danger name {name!r}"))
        if lvl in seen:
            out.append(Diagnostic("error", path, f"duplicate entry for level {lvl}"))
        seen[lvl] = name
    missing = [l for l in range(max_level + 1) if l not in seen]
    if missing:
        out.append(Diagnostic("error", path, f"non-total mapping: missing levels {missing}"))


def _check_reaction_map(
    reaction: Tuple[Tuple[str, int], ...], path: str, out: List[Diagnostic]
) -> None:
    seen = {}
    for name, lvl in reaction:
        if name not in _DANGER_NAMES:
            out.append(Diagnostic("error", path, f"unknown danger name {name!r}"))
            continue
        if not REACTION_MIN <= lvl <= REACTION_MAX:
            out.append(
                Diagnostic("error", path, f"reaction {lvl} outside [{REACTION_MIN}, {REACTION_MAX}]")
            )
        if name in seen:
            out.append(Diagnostic("error", path, f"duplicate entry for danger {name!r}"))
        seen[name] = lvl
    missing = [n for n in _DANGER_NAMES if n not in seen]
    if missing:
        out.append(Diagnostic("error", path, f"non-total mapping: missing danger levels {missing}"))


def _reachable_reactions(
    danger: Tuple[Tuple[int, str], ...],
    reaction: Tuple[Tuple[str, int], ...],
    levels: Sequence[int],
) -> Tuple[int, ...]:
    """Reaction levels this event can ever report (latch adds nothing new)."""
    dmap = dict(danger)
    rmap = dict(reaction)
    out = set()
    for lvl in levels:
        name = dmap.get(lvl)
        if name is None or name not in rmap:
            continue
        out.add(rmap[name])
    return tuple(sorted(out))


def _known_signals(ps: PulseSchedule) -> set:
    return set(PLANT_SIGNALS) | {name for name, _ in ps.scripted}


def _check_controller(
    cid: str,
    cfg: Mapping[str, Any],
    ps: PulseSchedule,
    out: List[Diagnostic],
) -> None:
    path = f"controllers.{cid}"
    kind = cfg.get("type")
    if kind not in CONTROLLER_TYPES:
        out.append(Diagnostic("error", path, f"unknown controller type {kind!r}"))
        return

    def need_number(key: str, required: bool = True, positive: bool = False) -> None:
        if key not in cfg:
            if required:
                out.append(Diagnostic("error", path, f"missing required field {key!r}"))
            return
        v = cfg[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(float(v)):
            out.append(Diagnostic("error", path, f"field {key!r} must be a finite number"))
            return
        if positive and float(v) <= 0.0:
            out.append(Diagnostic("error", path, f"field {key!r} must be positive"))

    def need_signal(key: str) -> None:
        name = cfg.get(key)
        if not isinstance(name, str):
            out.append(Diagnostic("error", path, f"missing required signal name {key!r}"))
        elif name not in _known_signals(ps):
            out.append(Diagnostic("error", path, f"{key!r} references unknown signal {name!r}"))

    def allow_keys(*keys: str) -> None:
        allowed = set(keys) | {"type"}
        for key in cfg:
            if key not in allowed:
                out.append(Diagnostic("error", path, f"unknown key {key!r}"))

    groups = ps.group_map()
    if kind == "feedforward":
        allow_keys("min_request")
        need_number("min_request", required=False)
    elif kind == "pid":
        allow_keys("kp", "ki", "kd", "lo", "hi", "anti_windup", "measurement")
        for key in ("kp", "ki", "kd", "lo"):
            need_number(key, required=False)
        need_number("hi")
        need_signal("measurement")
        lo, hi = cfg.get("lo", 0.0), cfg.get("hi")
        if isinstance(lo, (int, float)) and isinstance(hi, (int, float)) and lo > hi:
            out.append(Diagnostic("error", path, "output limits inverted (lo > hi)"))
        aw = cfg.get("anti_windup", True)
        if not isinstance(aw, bool):
            out.append(Diagnostic("error", path, "anti_windup must be a boolean"))
    elif kind == "da_power":
        allow_keys("mode", "d_critical1", "gain", "p_max", "signal")
        if cfg.get("mode") not in (MODE_NORMAL, MODE_RECOVERY):
            out.append(Diagnostic("error", path, f"mode must be one of {MODE_NORMAL!r}, {MODE_RECOVERY!r}"))
        need_number("d_critical1")
        need_number("gain", required=False)
        need_number("p_max", positive=True)
        need_signal("signal")
    elif kind == "gas_shaper":
        allow_keys("mode", "factor", "ramp_down")
        if cfg.get("mode") not in (MODE_SLOW_RAMP, MODE_FREEZE, MODE_CUTOFF):
            out.append(
                Diagnostic(
                    "error", path, f"mode must be one of {MODE_SLOW_RAMP!r}, {MODE_FREEZE!r}, {MODE_CUTOFF!r}"
                )
            )
        need_number("factor", required=False)
        factor = cfg.get("factor", 0.5)
        if isinstance(factor, (int, float)) and not 0.0 <= float(factor) <= 1.0:
            out.append(Diagnostic("error", path, "factor must lie in [0, 1]"))
        need_number("ramp_down", required=False)
        rd = cfg.get("ramp_down", 0.1)
        if isinstance(rd, (int, float)) and float(rd) < 0.0:
            out.append(Diagnostic("error", path, "ramp_down must be >= 0"))
    elif kind == "ntm":
        allow_keys("position_signal", "aim_group")
        need_signal("position_signal")
        aim = cfg.get("aim_group")
        if not isinstance(aim, str) or aim not in groups:
            out.append(Diagnostic("error", path, f"aim_group references unknown group {aim!r}"))
        elif groups[aim].semantics != EXCLUSIVE:
            out.append(Diagnostic("error", path, f"aim_group {aim!r} must have exclusive semantics"))


#: Controller types whose bound tasks must carry a reference.
_NEEDS_REFERENCE = {"feedforward": True, "pid": True}


def _task_needs_reference(kind: str, cfg: Mapping[str, Any]) -> bool:
    if kind in _NEEDS_REFERENCE:
        return True
    return kind == "gas_shaper" and cfg.get("mode") == MODE_SLOW_RAMP


def validate(ps: PulseSchedule) -> List[Diagnostic]:
    """Semantic checks. Returns diagnostics; never raises on content."""
    out: List[Diagnostic] = []
    groups = ps.group_map()
    scenario_map = ps.scenario_map()
    controller_map = ps.controller_map()
    known_signals = _known_signals(ps)

    # Run section.
    if ps.run.dt <= 0.0:
        out.append(Diagnostic("error", "run.dt", "control period must be positive"))
    if ps.run.duration < 0.0:
        out.append(Diagnostic("error", "run.duration", "duration must be >= 0"))
    if ps.run.post_roll < 0.0:
        out.append(Diagnostic("error", "run.post_roll", "post_roll must be >= 0"))
    if ps.run.plant_failure_one is not None and ps.run.plant_failure_one not in ps.one_ids:
        out.append(
            Diagnostic("error", "run.plant_failure_one", f"unknown event {ps.run.plant_failure_one!r}")
        )

    # Actuator groups.
    seen_groups = set()
    for i, g in enumerate(ps.groups):
        path = f"actuator_groups[{i}]"
        if g.id in seen_groups:
            out.append(Diagnostic("error", path, f"duplicate group id {g.id!r}"))
        seen_groups.add(g.id)
        if g.capacity < 0.0:
            out.append(Diagnostic("error", path, "capacity must be >= 0"))
        if g.semantics not in (ADDITIVE, EXCLUSIVE):
            out.append(Diagnostic("error", path, f"unknown semantics {g.semantics!r}"))
        if g.command_range[0] > g.command_range[1]:
            out.append(Diagnostic("error", path, "command_range inverted"))

    # Plant section.
    for name in ("tau_e", "tau_98", "tau_n"):
        if getattr(ps.plant, name) <= 0.0:
            out.append(Diagnostic("error", f"plant.{name}", "must be positive"))
    if ps.plant.nbi_energy_limit <= 0.0:
        out.append(Diagnostic("error", "plant.nbi_energy_limit", "must be positive"))
    for table, path in ((ps.plant.degradation, "plant.degradation"), (ps.plant.boundary, "plant.boundary")):
        xs = [x for x, _ in table]
        if len(xs) < 2:
            out.append(Diagnostic("error", path, "needs at least two points"))
        elif any(a >= b for a, b in zip(xs, xs[1:])):
            out.append(Diagnostic("error", path, "densities must be strictly increasing"))
    for key in ("nbi_group", "gas_group"):
        gid = getattr(ps.plant, key)
        if gid not in groups:
            out.append(Diagnostic("error", f"plant.{key}", f"unknown group {gid!r}"))

    # Scripted signals.
    for name, spec in ps.scripted:
        path = f"signals.{name}"
        if name in PLANT_SIGNALS:
            out.append(Diagnostic("error", path, "name collides with a plant-provided signal"))
        _check_waveform(spec, path, out)

    # Events.
    seen_ones = set()
    base_ids = {o.id for o in ps.ones}
    for i, one in enumerate(ps.ones):
        path = f"ones[{i}]"
        if one.id in seen_ones:
            out.append(Diagnostic("error", path, f"duplicate event id {one.id!r}"))
        seen_ones.add(one.id)
        if one.signal not in known_signals:
            out.append(Diagnostic("error", f"{path}.signal", f"unknown signal {one.signal!r}"))
        if one.direction not in (RISING, FALLING):
            out.append(Diagnostic("error", f"{path}.direction", f"must be {RISING!r} or {FALLING!r}"))
        ts, hs = one.thresholds, one.hysteresis
        if not ts:
            out.append(Diagnostic("error", f"{path}.thresholds", "needs at least one threshold"))
        if len(hs) != len(ts):
            out.append(
                Diagnostic("error", f"{path}.hysteresis", f"{len(hs)} bands for {len(ts)} thresholds")
            )
        elif ts:
            if any(h < 0.0 for h in hs):
                out.append(Diagnostic("error", f"{path}.hysteresis", "bands must be >= 0"))
            if one.direction == RISING:
                if any(a >= b for a, b in zip(ts, ts[1:])):
                    out.append(Diagnostic("error", f"{path}.thresholds", "must be strictly increasing"))
                elif any(ts[j] + hs[j] >= ts[j + 1] - hs[j + 1] for j in range(len(ts) - 1)):
                    out.append(Diagnostic("error", f"{path}.hysteresis", "bands overlap neighbouring thresholds"))
            elif one.direction == FALLING:
                if any(a <= b for a, b in zip(ts, ts[1:])):
                    out.append(Diagnostic("error", f"{path}.thresholds", "must be strictly decreasing"))
                elif any(ts[j] - hs[j] <= ts[j + 1] + hs[j + 1] for j in range(len(ts) - 1)):
                    out.append(Diagnostic("error", f"{path}.hysteresis", "bands overlap neighbouring thresholds"))
        _check_danger_map(one.danger, one.max_level, f"{path}.danger", out)
        _check_reaction_map(one.reaction, f"{path}.reaction", out)
        for lvl in one.irreversible:
            if not REACTION_MIN <= lvl <= REACTION_MAX:
                out.append(Diagnostic("error", f"{path}.irreversible", f"level {lvl} outside [0, 4]"))
        if not {3, 4} <= set(one.irreversible):
            out.append(
                Diagnostic(
                    "warning",
                    f"{path}.irreversible",
                    "set does not cover the conventional irreversible levels {3, 4}",
                )
            )

    # Virtual events.
    for i, v in enumerate(ps.virtual_ones):
        path = f"virtual_ones[{i}]"
        if v.id in seen_ones:
            out.append(Diagnostic("error", path, f"duplicate event id {v.id!r}"))
        seen_ones.add(v.id)
        if not v.inputs:
            out.append(Diagnostic("error", f"{path}.inputs", "needs at least one input"))
        ranges: List[range] = []
        for j, input_id in enumerate(v.inputs):
            if input_id not in base_ids:
                out.append(
                    Diagnostic(
                        "error",
                        f"{path}.inputs[{j}]",
                        f"input {input_id!r} is not a base event (virtuals combine base events only)",
                    )
                )
                ranges.append(range(1))
            else:
                base = next(o for o in ps.ones if o.id == input_id)
                ranges.append(range(base.max_level + 1))
        table = {}
        for levels, lvl in v.rows:
            if levels in table:
                out.append(Diagnostic("error", f"{path}.rows", f"duplicate row for levels {list(levels)}"))
            table[levels] = lvl
            if len(levels) != len(v.inputs):
                out.append(Diagnostic("error", f"{path}.rows", f"row {list(levels)} arity mismatch"))
            if lvl < 0:
                out.append(Diagnostic("error", f"{path}.rows", f"output level {lvl} must be >= 0"))
        if all(len(levels) == len(v.inputs) for levels, _ in v.rows):
            missing = [
                combo for combo in itertools.product(*ranges) if combo not in table
            ]
            if missing:
                shown = ", ".join(str(list(c)) for c in missing[:4])
                out.append(
                    Diagnostic(
                        "error",
                        f"{path}.rows",
                        f"combiner not total: {len(missing)} missing combinations (e.g. {shown})",
                    )
                )
        _check_danger_map(v.danger, v.max_level, f"{path}.danger", out)
        _check_reaction_map(v.reaction, f"{path}.reaction", out)
        for lvl in v.irreversible:
            if not REACTION_MIN <= lvl <= REACTION_MAX:
                out.append(Diagnostic("error", f"{path}.irreversible", f"level {lvl} outside [0, 4]"))
        if not {3, 4} <= set(v.irreversible):
            out.append(
                Diagnostic(
                    "warning",
                    f"{path}.irreversible",
                    "set does not cover the conventional irreversible levels {3, 4}",
                )
            )

    # Scenarios and tasks.
    seen_scenarios = set()
    for i, sc in enumerate(ps.scenarios):
        path = f"scenarios[{i}]"
        if sc.id in seen_scenarios:
            out.append(Diagnostic("error", path, f"duplicate scenario id {sc.id!r}"))
        seen_scenarios.add(sc.id)
        if sc.type not in _SCENARIO_TYPES:
            out.append(Diagnostic("error", f"{path}.type", f"unknown scenario type {sc.type!r}"))
        seen_prio: Dict[int, str] = {}
        seen_tasks = set()
        for j, task in enumerate(sc.tasks):
            tpath = f"{path}.tasks[{j}]"
            if task.id in seen_tasks:
                out.append(Diagnostic("error", tpath, f"duplicate task id {task.id!r}"))
            seen_tasks.add(task.id)
            if task.priority < 1:
                out.append(Diagnostic("error", tpath, "priority must be >= 1"))
            if task.priority in seen_prio:
                out.append(
                    Diagnostic(
                        "error",
                        tpath,
                        f"priority {task.priority} already used by task {seen_prio[task.priority]!r}",
                    )
                )
            seen_prio[task.priority] = task.id
            if task.controller not in controller_map:
                out.append(Diagnostic("error", tpath, f"unknown controller {task.controller!r}"))
            else:
                cfg = controller_map[task.controller]
                kind = cfg.get("type")
                if isinstance(kind, str) and _task_needs_reference(kind, cfg) and task.reference is None:
                    out.append(
                        Diagnostic("error", tpath, f"controller type {kind!r} requires a task reference")
                    )
                if kind == "ntm" and cfg.get("aim_group") == task.group:
                    out.append(Diagnostic("error", tpath, "ntm task group must differ from aim_group"))
            if task.group not in groups:
                out.append(Diagnostic("error", tpath, f"unknown actuator group {task.group!r}"))
            if isinstance(task.reference, WaveformSpec):
                _check_waveform(task.reference, f"{tpath}.reference", out)
            act = task.activation
            if act.t_end is not None and act.t_end <= act.t_start:
                out.append(Diagnostic("error", f"{tpath}.activation", "t_end must exceed t_start"))
            if act.one is not None:
                if act.one not in ps.one_ids:
                    out.append(Diagnostic("error", f"{tpath}.activation", f"unknown event {act.one!r}"))
                if act.min_level < 0:
                    out.append(Diagnostic("error", f"{tpath}.activation", "min_level must be >= 0"))
                if act.max_level is not None and act.max_level < act.min_level:
                    out.append(Diagnostic("error", f"{tpath}.activation", "max_level below min_level"))

    # Controllers.
    for cid, cfg in ps.controllers:
        _check_controller(cid, cfg, ps, out)

    # Scenario mapping.
    n_ones = len(ps.one_ids)
    if ps.os_default not in scenario_map:
        out.append(Diagnostic("error", "os_mapping.default", f"unknown scenario {ps.os_default!r}"))
    elif scenario_map[ps.os_default].type != ScenarioType.NORMAL.value:
        out.append(Diagnostic("error", "os_mapping.default", "default scenario must be of type normal"))
    seen_rows = set()
    row_map = {}
    for i, (reactions, scenario_id) in enumerate(ps.os_rows):
        path = f"os_mapping.rows[{i}]"
        if len(reactions) != n_ones:
            out.append(
                Diagnostic("error", path, f"row arity {len(reactions)} does not match {n_ones} events")
            )
            continue
        if any(not REACTION_MIN <= r <= REACTION_MAX for r in reactions):
            out.append(Diagnostic("error", path, f"reaction levels outside [0, 4]: {list(reactions)}"))
        if reactions in seen_rows:
            out.append(Diagnostic("error", path, f"duplicate row for combination {list(reactions)}"))
        seen_rows.add(reactions)
        if scenario_id not in scenario_map:
            out.append(Diagnostic("error", path, f"unknown scenario {scenario_id!r}"))
            continue
        row_map[reactions] = scenario_id
        if all(r == 0 for r in reactions) and scenario_map[scenario_id].type != ScenarioType.NORMAL.value:
            out.append(
                Diagnostic("error", path, "the all-zero combination must map to a normal-type scenario")
            )

    # Coverage of reachable reaction combinations.
    if n_ones > 0 and not errors_of(out):
        per_one = []
        for one in ps.ones:
            per_one.append(_reachable_reactions(one.danger, one.reaction, range(one.max_level + 1)))
        for v in ps.virtual_ones:
            levels = sorted({lvl for _, lvl in v.rows})
            per_one.append(_reachable_reactions(v.danger, v.reaction, levels))
        types_present = {sc.type for sc in ps.scenarios}
        fallback_hits = []
        for combo in itertools.product(*per_one):
            if combo in row_map:
                continue
            if all(r == 0 for r in combo):
                fallback_hits.append((combo, "default scenario"))
                continue
            wanted = SCENARIO_TYPE_FOR_REACTION[max(combo)]
            if wanted.value not in types_present:
                out.append(
                    Diagnostic(
                        "error",
                        "os_mapping.rows",
                        f"reachable combination {list(combo)} has no row and no "
                        f"{wanted.value!r} scenario to fall back to",
                    )
                )
            else:
                fallback_hits.append((combo, f"max-severity fallback to type {wanted.value!r}"))
        if fallback_hits:
            shown = "; ".join(f"{list(c)} -> {how}" for c, how in fallback_hits[:4])
            out.append(
                Diagnostic(
                    "warning",
                    "os_mapping.rows",
                    f"{len(fallback_hits)} reachable combination(s) have no explicit row and rely on "
                    f"the fallback rule (max reaction level picks the scenario type): {shown}",
                )
            )

    return out


# ---------------------------------------------------------------------------
# Compile (typed runtime objects).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CompiledSchedule:
    """Runtime-ready view of a validated schedule."""

    source: PulseSchedule
    run: RunSpec
    monitor: MonitorConfig
    supervisor: SupervisorConfig
    groups: Mapping[str, ActuatorGroup]
    controllers: Mapping[str, Mapping[str, Any]]
    plant: PlantParams
    scripted: Mapping[str, Waveform]

    @property
    def one_ids(self) -> Tuple[str, ...]:
        return self.supervisor.one_ids

    def signal_of(self, one_id: str) -> Optional[str]:
        """Monitored signal name of a base event; None for virtual events."""
        for one in self.source.ones:
            if one.id == one_id:
                return one.signal
        return None


def compile_schedule(ps: PulseSchedule) -> CompiledSchedule:
    """Build runtime objects from a schedule, insisting on zero errors."""
    problems = errors_of(validate(ps))
    if problems:
        raise ConfigError(
            "schedule failed validation:\n  " + "\n  ".join(str(d) for d in problems)
        )

    tables = {
        one.id: ThresholdTable(
            signal=one.signal,
            thresholds=one.thresholds,
            direction=one.direction,
            hysteresis=one.hysteresis,
        )
        for one in ps.ones
    }
    virtual_rules = tuple(
        VirtualOneRule(id=v.id, inputs=v.inputs, table={levels: lvl for levels, lvl in v.rows})
        for v in ps.virtual_ones
    )
    monitor = MonitorConfig(
        tables=tables,
        virtual_rules=virtual_rules,
        plant_failure_one=ps.run.plant_failure_one,
    )

    danger_fsms = {}
    reaction_fsms = {}
    for spec in list(ps.ones) + list(ps.virtual_ones):
        danger_fsms[spec.id] = DangerFsm(
            one_id=spec.id,
            mapping={lvl: DangerLevel.from_name(name) for lvl, name in spec.danger},
        )
        reaction_fsms[spec.id] = ReactionFsm(
            one_id=spec.id,
            mapping={DangerLevel.from_name(name): lvl for name, lvl in spec.reaction},
            irreversible=frozenset(spec.irreversible),
        )

    scenarios = {
        sc.id: Scenario(
            id=sc.id,
            type=ScenarioType.from_name(sc.type),
            tasks=tuple(t.build() for t in sc.tasks),
        )
        for sc in ps.scenarios
    }
    os_mapping = OsMapping(
        one_ids=ps.one_ids,
        rows={reactions: sid for reactions, sid in ps.os_rows},
        scenarios=scenarios,
        default=ps.os_default,
    )
    supervisor = SupervisorConfig(
        one_ids=ps.one_ids,
        danger_fsms=danger_fsms,
        reaction_fsms=reaction_fsms,
        os_mapping=os_mapping,
    )

    groups = {
        g.id: ActuatorGroup(
            id=g.id,
            capacity=g.capacity,
            semantics=g.semantics,
            command_range=g.command_range,
            unit=g.unit,
        )
        for g in ps.groups
    }
    plant = PlantParams(
        tau_e=ps.plant.tau_e,
        tau_98=ps.plant.tau_98,
        tau_n=ps.plant.tau_n,
        k_gas=ps.plant.k_gas,
        p_ohmic=ps.plant.p_ohmic,
        nbi_energy_limit=ps.plant.nbi_energy_limit,
        degradation=ps.plant.degradation,
        boundary=DisruptionBoundary(vertices=ps.plant.boundary),
        w_init=ps.plant.w_init,
        ne_init=ps.plant.ne_init,
        gas_init=ps.plant.gas_init,
    )
    scripted = {name: spec.build() for name, spec in ps.scripted}
    return CompiledSchedule(
        source=ps,
        run=ps.run,
        monitor=monitor,
        supervisor=supervisor,
        groups=groups,
        controllers=ps.controller_map(),
        plant=plant,
        scripted=scripted,
    )
