"""Generic task-executing controllers.

Each controller follows the same two-way contract with the actuator
manager: it emits a resource request for the next tick and a command that
never exceeds the grant it currently holds. The pure step functions carry
the control laws; thin runtime wrappers bind them to a task for the loop
and own whatever state survives between ticks. Runtime state lives per
task binding and is discarded when the task deactivates.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, replace
from typing import List, Mapping, Optional, Tuple

from .errors import ConfigError
from .model import ControlTask, ResourceRequest
from .allocator import ActuatorCommand, ActuatorGroup

HOLD = "hold"
LINEAR = "linear"


@dataclass(frozen=True)
class Waveform:
    """Piecewise reference trajectory over time.

    Evaluation holds the first value before the first breakpoint and the
    last value after the last one. ``hold`` interpolation steps at each
    breakpoint; ``linear`` interpolates between neighbours.
    """

    points: Tuple[Tuple[float, float], ...]
    interpolation: str = LINEAR

    def __post_init__(self) -> None:
        if not self.points:
            raise ConfigError("waveform needs at least one breakpoint")
        times = [t for t, _ in self.points]
        if any(a >= b for a, b in zip(times, times[1:])):
            raise ConfigError("waveform breakpoint times must be strictly increasing")
        if self.interpolation not in (HOLD, LINEAR):
            raise ConfigError(f"unknown interpolation {self.interpolation!r}")

    def __call__(self, time: float) -> float:
        times = [t for t, _ in self.points]
        idx = bisect_right(times, time) - 1
        if idx < 0:
            return self.points[0][1]
        if idx >= len(self.points) - 1:
            return self.points[-1][1]
        if self.interpolation == HOLD:
            return self.points[idx][1]
        t0, v0 = self.points[idx]
        t1, v1 = self.points[idx + 1]
        frac = (time - t0) / (t1 - t0)
        return v0 + frac * (v1 - v0)


def as_waveform(reference) -> Waveform:
    """Promote a scalar setpoint to a constant waveform."""
    if isinstance(reference, Waveform):
        return reference
    if isinstance(reference, (int, float)):
        return Waveform(points=((0.0, float(reference)),), interpolation=HOLD)
    raise ConfigError(f"cannot use {reference!r} as a reference")


def feedforward_step(wf: Waveform, time: float) -> Tuple[float, float]:
    """Pre-programmed playback: request and command are both ``wf(time)``."""
    value = wf(time)
    return value, value


@dataclass(frozen=True)
class PidState:
    """Discrete PID state.

    ``integrator`` stores the integral *term* (output units), clamped to
    the output limits when anti-windup is on. The derivative acts on the
    measurement, not the error, to avoid kicks on reference steps.
    """

    kp: float
    ki: float
    kd: float
    lo: float
    hi: float
    anti_windup: bool = True
    integrator: float = 0.0
    prev_error: float = 0.0
    prev_measurement: Optional[float] = None
    last_output: float = 0.0
    fault: bool = False

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise ConfigError("PID output limits inverted")


def pid_step(
    reference: float, measurement: float, state: PidState, dt: float
) -> Tuple[float, float, PidState]:
    """One positional PID update.

    Returns ``(request, command, new_state)``; request and command are the
    same clamped output. A non-finite measurement holds the previous
    output and raises the fault flag instead of propagating the value.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not math.isfinite(measurement):
        return state.last_output, state.last_output, replace(state, fault=True)

    error = reference - measurement
    integrator = state.integrator + state.ki * error * dt
    if state.anti_windup:
        integrator = min(max(integrator, state.lo), state.hi)
    if state.prev_measurement is None:
        derivative = 0.0
    else:
        derivative = -state.kd * (measurement - state.prev_measurement) / dt
    output = state.kp * error + integrator + derivative
    output = min(max(output, state.lo), state.hi)
    new_state = replace(
        state,
        integrator=integrator,
        prev_error=error,
        prev_measurement=measurement,
        last_output=output,
        fault=False,
    )
    return output, output, new_state


MODE_NORMAL = "normal"
MODE_RECOVERY = "recovery"


def da_power_step(
    distance: float, d_critical1: float, gain: float, p_max: float, mode: str
) -> Tuple[float, float]:
    """Disruption-avoidance heating law.

    In normal mode the extra power grows linearly with the gap below the
    first critical distance (zero at and above it, so the law is
    continuous there), clamped at ``p_max``. In recovery mode it always
    asks for ``p_max``.
    """
    if p_max <= 0.0:
        raise ConfigError("da_power: p_max must be positive")
    if mode == MODE_RECOVERY:
        return p_max, p_max
    if mode != MODE_NORMAL:
        raise ConfigError(f"da_power: unknown mode {mode!r}")
    if distance >= d_critical1:
        return 0.0, 0.0
    value = min(gain * (d_critical1 - distance), p_max)
    return value, value


MODE_SLOW_RAMP = "slow_ramp"
MODE_FREEZE = "freeze"
MODE_CUTOFF = "cutoff"


def da_gas_step(
    base_command: float,
    mode: str,
    *,
    ramp_increment: float = 0.0,
    factor: float = 1.0,
    entry_value: float = 0.0,
    entry_time: float = 0.0,
    time: float = 0.0,
    ramp_down: float = 0.0,
) -> float:
    """Shape a flux/power command for disruption avoidance or shutdown.

    ``slow_ramp`` continues from the current command ``base_command`` at a
    fraction ``factor`` of the reference ramp increment, ``freeze`` holds
    the value captured at mode entry, and ``cutoff`` ramps that value
    linearly to zero over ``ramp_down`` seconds.
    """
    if mode == MODE_SLOW_RAMP:
        return base_command + factor * ramp_increment
    if mode == MODE_FREEZE:
        return entry_value
    if mode == MODE_CUTOFF:
        if ramp_down <= 0.0:
            return 0.0
        remaining = 1.0 - (time - entry_time) / ramp_down
        return entry_value * min(max(remaining, 0.0), 1.0)
    raise ConfigError(f"gas shaper: unknown mode {mode!r}")


def ntm_step(mode_position: float, granted_power: float) -> Tuple[float, float]:
    """Beam-deposition passthrough: aim at the mode, spend the full grant."""
    if not 0.0 <= mode_position <= 1.0:
        raise ConfigError(f"mode position {mode_position} outside [0, 1]")
    return mode_position, granted_power


# ---------------------------------------------------------------------------
# Per-task runtimes driven by the control loop.
# ---------------------------------------------------------------------------

@dataclass
class StepContext:
    """What every controller may look at during one tick."""

    time: float
    dt: float
    signals: Mapping[str, float]
    prev_commands: Mapping[str, float]


class TaskRuntime:
    """Base runtime: binds one control task to its law and state.

    ``requests`` is a dry run used both to bootstrap a freshly activated
    task and (from within ``step``) to ask for next-tick resources; it must
    not mutate state. ``step`` commits state and emits commands limited to
    the current grants.
    """

    def __init__(self, task: ControlTask):
        self.task = task

    def requests(self, ctx: StepContext) -> List[ResourceRequest]:
        raise NotImplementedError

    def step(
        self, ctx: StepContext, grants: Mapping[str, float]
    ) -> Tuple[List[ActuatorCommand], List[ResourceRequest]]:
        raise NotImplementedError


class FeedforwardRuntime(TaskRuntime):
    def __init__(self, task: ControlTask, min_request: float = 0.0):
        super().__init__(task)
        self.waveform = as_waveform(task.reference)
        self.min_request = min_request

    def _request_at(self, time: float) -> List[ResourceRequest]:
        amount, _ = feedforward_step(self.waveform, time)
        amount = max(amount, 0.0)
        return [
            ResourceRequest(
                task_id=self.task.id,
                group_id=self.task.group,
                amount=amount,
                min_acceptable=min(self.min_request, amount),
            )
        ]

    def requests(self, ctx: StepContext) -> List[ResourceRequest]:
        return self._request_at(ctx.time)

    def step(self, ctx, grants):
        _, desired = feedforward_step(self.waveform, ctx.time)
        value = min(max(desired, 0.0), grants.get(self.task.group, 0.0))
        cmd = ActuatorCommand(group_id=self.task.group, value=value, time=ctx.time)
        return [cmd], self._request_at(ctx.time + ctx.dt)


class PidRuntime(TaskRuntime):
    def __init__(
        self,
        task: ControlTask,
        *,
        kp: float,
        ki: float,
        kd: float,
        lo: float,
        hi: float,
        anti_windup: bool = True,
        measurement: str,
    ):
        super().__init__(task)
        self.reference = as_waveform(task.reference)
        self.measurement = measurement
        self.state = PidState(kp=kp, ki=ki, kd=kd, lo=lo, hi=hi, anti_windup=anti_windup)

    def _output(self, ctx: StepContext) -> Tuple[float, float, PidState]:
        ref = self.reference(ctx.time)
        meas = ctx.signals.get(self.measurement, math.nan)
        return pid_step(ref, meas, self.state, ctx.dt)

    def requests(self, ctx: StepContext) -> List[ResourceRequest]:
        request, _, _ = self._output(ctx)
        return [
            ResourceRequest(
                task_id=self.task.id,
                group_id=self.task.group,
                amount=max(request, 0.0),
            )
        ]

    def step(self, ctx, grants):
        request, command, self.state = self._output(ctx)
        value = min(max(command, 0.0), grants.get(self.task.group, 0.0))
        cmd = ActuatorCommand(group_id=self.task.group, value=value, time=ctx.time)
        next_req = ResourceRequest(
            task_id=self.task.id, group_id=self.task.group, amount=max(request, 0.0)
        )
        return [cmd], [next_req]


class DaPowerRuntime(TaskRuntime):
    def __init__(
        self,
        task: ControlTask,
        *,
        mode: str,
        d_critical1: float,
        gain: float,
        p_max: float,
        distance_signal: str,
    ):
        super().__init__(task)
        self.mode = mode
        self.d_critical1 = d_critical1
        self.gain = gain
        self.p_max = p_max
        self.distance_signal = distance_signal

    def _desired(self, ctx: StepContext) -> float:
        distance = ctx.signals.get(self.distance_signal, math.nan)
        if not math.isfinite(distance):
            # No usable distance estimate: do not inject extra power.
            return 0.0 if self.mode == MODE_NORMAL else self.p_max
        request, _ = da_power_step(distance, self.d_critical1, self.gain, self.p_max, self.mode)
        return request

    def requests(self, ctx: StepContext) -> List[ResourceRequest]:
        return [
            ResourceRequest(
                task_id=self.task.id, group_id=self.task.group, amount=self._desired(ctx)
            )
        ]

    def step(self, ctx, grants):
        desired = self._desired(ctx)
        value = min(desired, grants.get(self.task.group, 0.0))
        cmd = ActuatorCommand(group_id=self.task.group, value=value, time=ctx.time)
        next_req = ResourceRequest(
            task_id=self.task.id, group_id=self.task.group, amount=desired
        )
        return [cmd], [next_req]


class GasShaperRuntime(TaskRuntime):
    """Reduce, freeze or cut off a ramp command on one group.

    The shaper takes over whatever the group was last commanded to
    (``prev_commands``) when its task activates; ``slow_ramp`` additionally
    needs the task reference waveform whose increments it scales down.
    """

    def __init__(
        self,
        task: ControlTask,
        *,
        mode: str,
        factor: float = 0.5,
        ramp_down: float = 0.1,
    ):
        super().__init__(task)
        if mode not in (MODE_SLOW_RAMP, MODE_FREEZE, MODE_CUTOFF):
            raise ConfigError(f"gas shaper: unknown mode {mode!r}")
        if mode == MODE_SLOW_RAMP:
            self.waveform = as_waveform(task.reference)
        else:
            self.waveform = None
        self.mode = mode
        self.factor = factor
        self.ramp_down = ramp_down
        self.entry_value: Optional[float] = None
        self.entry_time: float = 0.0

    def _shape(self, ctx: StepContext) -> float:
        base = ctx.prev_commands.get(self.task.group, 0.0)
        entry_value = base if self.entry_value is None else self.entry_value
        entry_time = ctx.time if self.entry_value is None else self.entry_time
        increment = 0.0
        if self.waveform is not None:
            increment = self.waveform(ctx.time) - self.waveform(ctx.time - ctx.dt)
        value = da_gas_step(
            base,
            self.mode,
            ramp_increment=increment,
            factor=self.factor,
            entry_value=entry_value,
            entry_time=entry_time,
            time=ctx.time,
            ramp_down=self.ramp_down,
        )
        return max(value, 0.0)

    def _project(self, issued: float, ctx: StepContext) -> float:
        """Expected command one tick ahead, for the next resource request."""
        t_next = ctx.time + ctx.dt
        if self.mode == MODE_SLOW_RAMP:
            increment = 0.0
            if self.waveform is not None:
                increment = self.waveform(t_next) - self.waveform(ctx.time)
            return max(issued + self.factor * increment, 0.0)
        entry_value = issued if self.entry_value is None else self.entry_value
        entry_time = ctx.time if self.entry_value is None else self.entry_time
        value = da_gas_step(
            issued,
            self.mode,
            entry_value=entry_value,
            entry_time=entry_time,
            time=t_next,
            ramp_down=self.ramp_down,
        )
        return max(value, 0.0)

    def requests(self, ctx: StepContext) -> List[ResourceRequest]:
        return [
            ResourceRequest(
                task_id=self.task.id, group_id=self.task.group, amount=self._shape(ctx)
            )
        ]

    def step(self, ctx, grants):
        if self.entry_value is None:
            self.entry_value = ctx.prev_commands.get(self.task.group, 0.0)
            self.entry_time = ctx.time
        desired = self._shape(ctx)
        value = min(desired, grants.get(self.task.group, 0.0))
        cmd = ActuatorCommand(group_id=self.task.group, value=value, time=ctx.time)
        next_req = ResourceRequest(
            task_id=self.task.id, group_id=self.task.group, amount=self._project(value, ctx)
        )
        return [cmd], [next_req]


class NtmRuntime(TaskRuntime):
    """Aim the EC beam at the mode location and spend the whole grant.

    Holds one request on the power group (asks for everything available)
    and one ownership token on the aiming group.
    """

    def __init__(
        self,
        task: ControlTask,
        *,
        position_signal: str,
        aim_group: str,
        power_capacity: float,
    ):
        super().__init__(task)
        self.position_signal = position_signal
        self.aim_group = aim_group
        self.power_capacity = power_capacity

    def requests(self, ctx: StepContext) -> List[ResourceRequest]:
        return [
            ResourceRequest(
                task_id=self.task.id, group_id=self.task.group, amount=self.power_capacity
            ),
            ResourceRequest(
                task_id=self.task.id, group_id=self.aim_group, amount=1.0, min_acceptable=1.0
            ),
        ]

    def step(self, ctx, grants):
        if grants.get(self.aim_group, 0.0) <= 0.0:
            # Lost the aiming contest: park rather than dump power off-target.
            return [], self.requests(ctx)
        rho = ctx.signals.get(self.position_signal, math.nan)
        if not math.isfinite(rho):
            rho = 0.0
        rho = min(max(rho, 0.0), 1.0)
        deposition, power = ntm_step(rho, grants.get(self.task.group, 0.0))
        cmds = [
            ActuatorCommand(group_id=self.task.group, value=power, time=ctx.time),
            ActuatorCommand(group_id=self.aim_group, value=deposition, time=ctx.time),
        ]
        return cmds, self.requests(ctx)


def build_runtime(
    task: ControlTask,
    controller_cfg: Mapping,
    groups: Mapping[str, ActuatorGroup],
) -> TaskRuntime:
    """Instantiate the runtime for one task from its controller config."""
    kind = controller_cfg["type"]
    if kind == "feedforward":
        return FeedforwardRuntime(task, min_request=controller_cfg.get("min_request", 0.0))
    if kind == "pid":
        return PidRuntime(
            task,
            kp=controller_cfg.get("kp", 0.0),
            ki=controller_cfg.get("ki", 0.0),
            kd=controller_cfg.get("kd", 0.0),
            lo=controller_cfg.get("lo", 0.0),
            hi=controller_cfg["hi"],
            anti_windup=controller_cfg.get("anti_windup", True),
            measurement=controller_cfg["measurement"],
        )
    if kind == "da_power":
        return DaPowerRuntime(
            task,
            mode=controller_cfg["mode"],
            d_critical1=controller_cfg["d_critical1"],
            gain=controller_cfg.get("gain", 1.0),
            p_max=controller_cfg["p_max"],
            distance_signal=controller_cfg["signal"],
        )
    if kind == "gas_shaper":
        return GasShaperRuntime(
            task,
            mode=controller_cfg["mode"],
            factor=controller_cfg.get("factor", 0.5),
            ramp_down=controller_cfg.get("ramp_down", 0.1),
        )
    if kind == "ntm":
        aim_group = controller_cfg["aim_group"]
        return NtmRuntime(
            task,
            position_signal=controller_cfg["position_signal"],
            aim_group=aim_group,
            power_capacity=groups[task.group].capacity,
        )
    raise ConfigError(f"unknown controller type {kind!r}")
