"""0-D surrogate plasma standing in for the machine-dependent layer.

The model only has to produce the phenomenology the decision chain feeds
on: a gas ramp drags normalized edge density up through a first-order lag,
confinement quality degrades as density approaches the empirical limit,
and crossing the limit curve in the (density, confinement) plane is an
absorbing disruption. Stored energy follows a plain 0-D power balance and
injected beam energy is accumulated exactly for the energy-limit event.

Integration is a fixed-step explicit update at the control period; the
density lag uses the exact zero-order-hold discretization of the linear
lag rather than a forward-Euler slope, which keeps the trace bit-exact
against the closed-form solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple

import numpy as np

from .errors import ConfigError, SimFault

# End segments of the limit curve are continued this far in density so the
# signed distance stays continuous for any state the surrogate can reach.
_EXTENSION = 1.0e6


@dataclass(frozen=True)
class DisruptionBoundary:
    """Piecewise-linear empirical limit in the (density, confinement) plane.

    Vertices are (ne_edge_norm, h98y2) pairs with strictly increasing
    density, so the curve is a function of density; the end segments are
    extrapolated linearly. States above the curve are stable (positive
    distance), states below have crossed the limit (negative distance).
    """

    vertices: Tuple[Tuple[float, float], ...]

    def __post_init__(self) -> None:
        if len(self.vertices) < 2:
            raise ConfigError("disruption boundary needs at least two vertices")
        xs = [x for x, _ in self.vertices]
        if any(a >= b for a, b in zip(xs, xs[1:])):
            raise ConfigError("boundary vertices must have strictly increasing density")
        pts = np.asarray(self.vertices, dtype=float)
        first = pts[0] + (pts[0] - pts[1]) / abs(pts[0][0] - pts[1][0]) * _EXTENSION
        last = pts[-1] + (pts[-1] - pts[-2]) / abs(pts[-1][0] - pts[-2][0]) * _EXTENSION
        extended = np.vstack([first, pts, last])
        object.__setattr__(self, "_segments_a", extended[:-1])
        object.__setattr__(self, "_segments_b", extended[1:])

    def h_limit(self, ne: float) -> float:
        """Curve height at ``ne`` (end segments extrapolated)."""
        xs = [x for x, _ in self.vertices]
        ys = [y for _, y in self.vertices]
        if ne < xs[0]:
            slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
            return ys[0] + slope * (ne - xs[0])
        if ne > xs[-1]:
            slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
            return ys[-1] + slope * (ne - xs[-1])
        return float(np.interp(ne, xs, ys))

    def signed_distance(self, ne: float, h98: float) -> float:
        """Euclidean distance to the curve, negative once past the limit."""
        p = np.array([ne, h98], dtype=float)
        a = self._segments_a
        b = self._segments_b
        ab = b - a
        t = np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab)
        t = np.clip(t, 0.0, 1.0)
        closest = a + t[:, None] * ab
        dist = float(np.min(np.hypot(*(p - closest).T)))
        return dist if h98 >= self.h_limit(ne) else -dist


def distance(h98y2: float, ne_edge_norm: float, boundary: DisruptionBoundary) -> float:
    """Signed distance from the state point to the empirical limit."""
    return boundary.signed_distance(ne_edge_norm, h98y2)


@dataclass(frozen=True)
class PlantParams:
    """Tuning of the surrogate dynamics; all values schedule-supplied."""

    tau_e: float
    tau_98: float
    tau_n: float
    k_gas: float
    p_ohmic: float
    nbi_energy_limit: float
    degradation: Tuple[Tuple[float, float], ...]
    boundary: DisruptionBoundary
    w_init: float = 0.0
    ne_init: float = 0.0
    gas_init: float = 0.0

    def __post_init__(self) -> None:
        for name in ("tau_e", "tau_98", "tau_n"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"plant: {name} must be positive")
        if self.nbi_energy_limit <= 0.0:
            raise ConfigError("plant: nbi_energy_limit must be positive")
        xs = [x for x, _ in self.degradation]
        if len(xs) < 2 or any(a >= b for a, b in zip(xs, xs[1:])):
            raise ConfigError("plant: degradation table needs strictly increasing densities")

    def degradation_at(self, ne: float) -> float:
        xs = [x for x, _ in self.degradation]
        ys = [y for _, y in self.degradation]
        return float(np.interp(ne, xs, ys))

    def h98_at(self, ne: float) -> float:
        return (self.tau_e / self.tau_98) * self.degradation_at(ne)


@dataclass(frozen=True)
class PlantState:
    """Snapshot of the surrogate plasma and its actuators."""

    h98y2: float
    ne_edge_norm: float
    w_mj: float
    nbi_power: float
    nbi_energy: float
    gas_flux: float
    time: float
    disrupted: bool = False


def initial_state(params: PlantParams) -> PlantState:
    ne = params.ne_init
    return PlantState(
        h98y2=params.h98_at(ne),
        ne_edge_norm=ne,
        w_mj=params.w_init,
        nbi_power=0.0,
        nbi_energy=0.0,
        gas_flux=params.gas_init,
        time=0.0,
    )


def plant_step(
    state: PlantState,
    params: PlantParams,
    p_nbi: float,
    gas_flux: float,
    dt: float,
) -> PlantState:
    """Advance the surrogate one control period.

    Disruption is absorbing: once set, every field except time freezes.
    Commands are magnitudes; negative values clamp to zero (the beam and
    the valve cannot run backwards), keeping injected energy
    non-decreasing no matter the caller.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if not (math.isfinite(p_nbi) and math.isfinite(gas_flux)):
        raise SimFault(f"non-finite actuator command (p_nbi={p_nbi!r}, gas={gas_flux!r})")
    p_nbi = max(p_nbi, 0.0)
    gas_flux = max(gas_flux, 0.0)

    if state.disrupted:
        return replace(state, time=state.time + dt)

    w = state.w_mj + dt * (p_nbi + params.p_ohmic - state.w_mj / params.tau_e)
    target = params.k_gas * gas_flux
    ne = target + (state.ne_edge_norm - target) * math.exp(-dt / params.tau_n)
    h98 = params.h98_at(ne)
    nbi_energy = state.nbi_energy + dt * p_nbi
    disrupted = params.boundary.signed_distance(ne, h98) <= 0.0
    return PlantState(
        h98y2=h98,
        ne_edge_norm=ne,
        w_mj=w,
        nbi_power=p_nbi,
        nbi_energy=nbi_energy,
        gas_flux=gas_flux,
        time=state.time + dt,
        disrupted=disrupted,
    )


def nbi_energy_check(nbi_energy: float, limit: float = 1.3) -> float:
    """Injected-energy fraction fed to the actuator-limit event monitor."""
    if nbi_energy < 0.0:
        raise ValueError("nbi_energy must be >= 0")
    return nbi_energy / limit


def plant_signals(state: PlantState, params: PlantParams) -> dict:
    """The generic continuous signals the monitor and controllers see."""
    return {
        "h98y2": state.h98y2,
        "ne_edge_norm": state.ne_edge_norm,
        "stored_energy": state.w_mj,
        "nbi_power": state.nbi_power,
        "nbi_energy": state.nbi_energy,
        "nbi_energy_frac": nbi_energy_check(state.nbi_energy, params.nbi_energy_limit),
        "gas_flux": state.gas_flux,
        "d_ne_edge": distance(state.h98y2, state.ne_edge_norm, params.boundary),
    }
