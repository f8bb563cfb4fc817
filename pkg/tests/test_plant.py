import math
import random

import numpy as np
import pytest

from oneguard.errors import ConfigError, SimFault
from oneguard.plant import (
    DisruptionBoundary,
    PlantParams,
    PlantState,
    distance,
    initial_state,
    nbi_energy_check,
    plant_signals,
    plant_step,
)

BOUNDARY = DisruptionBoundary(vertices=((0.2, 0.14), (0.8, 0.5), (1.4, 1.04)))


def params(**kw):
    defaults = dict(
        tau_e=0.02,
        tau_98=0.02,
        tau_n=0.25,
        k_gas=0.02,
        p_ohmic=0.3,
        nbi_energy_limit=1.3,
        degradation=((0.0, 1.0), (0.6, 1.0), (0.9, 0.85), (0.94, 0.25), (1.4, 0.2)),
        boundary=BOUNDARY,
        w_init=0.006,
        ne_init=0.3,
        gas_init=15.0,
    )
    defaults.update(kw)
    return PlantParams(**defaults)


def sample_polyline(boundary, margin=50.0, n=2_000_000):
    """Dense point cloud along the (extended) limit curve for the oracle."""
    pts = np.asarray(boundary.vertices, dtype=float)
    first_dir = (pts[0] - pts[1]) / abs(pts[0, 0] - pts[1, 0])
    last_dir = (pts[-1] - pts[-2]) / abs(pts[-1, 0] - pts[-2, 0])
    extended = np.vstack([pts[0] + first_dir * margin, pts, pts[-1] + last_dir * margin])
    segments = []
    lengths = []
    for a, b in zip(extended[:-1], extended[1:]):
        segments.append((a, b))
        lengths.append(np.hypot(*(b - a)))
    total = sum(lengths)
    cloud = []
    for (a, b), length in zip(segments, lengths):
        count = max(int(n * length / total), 2)
        t = np.linspace(0.0, 1.0, count)
        cloud.append(a + t[:, None] * (b - a))
    return np.vstack(cloud)


class TestDistance:
    def test_point_on_boundary_is_zero(self):
        assert distance(0.5, 0.8, BOUNDARY) == pytest.approx(0.0, abs=1e-12)

    def test_perpendicular_offset_from_single_segment(self):
        flat = DisruptionBoundary(vertices=((0.0, 1.0), (2.0, 1.0)))
        assert distance(1.0 + 0.3, 1.0, flat) == pytest.approx(0.3, abs=1e-12)
        assert distance(1.0 - 0.3, 1.0, flat) == pytest.approx(-0.3, abs=1e-12)

    def test_sign_negative_past_the_limit(self):
        assert distance(0.2, 0.8, BOUNDARY) < 0.0

    def test_matches_dense_sampling_oracle(self):
        cloud = sample_polyline(BOUNDARY)
        rng = random.Random(20250810)
        checked = 0
        while checked < 60:
            ne = rng.uniform(0.0, 1.8)
            h98 = rng.uniform(-0.2, 1.6)
            got = distance(h98, ne, BOUNDARY)
            if abs(got) < 0.05:
                continue  # keep the sampling error term negligible
            diff = cloud - np.array([ne, h98])
            expected = float(np.min(np.hypot(diff[:, 0], diff[:, 1])))
            if h98 < BOUNDARY.h_limit(ne):
                expected = -expected
            assert got == pytest.approx(expected, abs=1e-6)
            checked += 1

    def test_lipschitz_along_trajectory(self):
        rng = random.Random(7)
        point = np.array([0.4, 0.9])
        for _ in range(500):
            step = np.array([rng.uniform(-0.02, 0.02), rng.uniform(-0.02, 0.02)])
            before = distance(point[1], point[0], BOUNDARY)
            point = point + step
            after = distance(point[1], point[0], BOUNDARY)
            assert abs(after - before) <= np.hypot(*step) * (1.0 + 1e-9) + 1e-12

    def test_boundary_validation(self):
        with pytest.raises(ConfigError):
            DisruptionBoundary(vertices=((0.0, 0.0),))
        with pytest.raises(ConfigError):
            DisruptionBoundary(vertices=((0.5, 0.0), (0.5, 1.0)))


class TestPlantStep:
    def test_equilibrium_is_a_fixed_point(self):
        p = params(ne_init=0.0, gas_init=0.0, w_init=0.02 * 0.3)
        state = initial_state(p)
        stepped = plant_step(state, p, p_nbi=0.0, gas_flux=0.0, dt=0.01)
        assert stepped.w_mj == pytest.approx(state.w_mj, abs=1e-15)
        assert stepped.ne_edge_norm == state.ne_edge_norm
        assert stepped.h98y2 == state.h98y2
        assert stepped.time == pytest.approx(0.01)

    def test_density_lag_matches_closed_form(self):
        p = params()
        dt = p.tau_n / 100.0
        state = initial_state(p)
        flux = 40.0
        target = p.k_gas * flux
        for k in range(1, 301):
            state = plant_step(state, p, p_nbi=0.0, gas_flux=flux, dt=dt)
            exact = target + (p.ne_init - target) * math.exp(-k * dt / p.tau_n)
            assert state.ne_edge_norm == pytest.approx(exact, rel=1e-3)

    def test_density_rises_monotonically_below_target(self):
        p = params()
        state = initial_state(p)
        flux = 15.0
        previous = state.ne_edge_norm
        for k in range(200):
            flux += 0.5
            state = plant_step(state, p, p_nbi=0.0, gas_flux=flux, dt=0.01)
            if state.disrupted:
                break
            assert state.ne_edge_norm >= previous
            previous = state.ne_edge_norm

    def test_sustained_ramp_ends_in_disruption(self):
        p = params()
        state = initial_state(p)
        for k in range(2000):
            state = plant_step(state, p, p_nbi=0.65, gas_flux=15.0 + 0.6 * k, dt=0.01)
            if state.disrupted:
                break
        assert state.disrupted

    def test_disruption_is_absorbing(self):
        p = params()
        state = initial_state(p)
        while not state.disrupted:
            state = plant_step(state, p, p_nbi=0.65, gas_flux=state.gas_flux + 1.0, dt=0.01)
        frozen = state
        for _ in range(10):
            state = plant_step(state, p, p_nbi=1.3, gas_flux=99.0, dt=0.01)
        assert state.time == pytest.approx(frozen.time + 0.1)
        for field in ("h98y2", "ne_edge_norm", "w_mj", "nbi_power", "nbi_energy", "gas_flux"):
            assert getattr(state, field) == getattr(frozen, field)

    def test_energy_bookkeeping_exact(self):
        p = params()
        state = initial_state(p)
        rng = random.Random(3)
        powers = []
        dt = 0.01
        for _ in range(5000):
            power = rng.uniform(0.0, 1.3)
            powers.append(power)
            state = plant_step(state, p, p_nbi=power, gas_flux=0.0, dt=dt)
            if state.disrupted:
                break
        total = 0.0
        for power in powers:
            total += dt * power
        assert abs(state.nbi_energy - total) <= 1e-9 * max(total, 1.0)

    def test_non_finite_command_faults(self):
        p = params()
        with pytest.raises(SimFault):
            plant_step(initial_state(p), p, p_nbi=math.nan, gas_flux=0.0, dt=0.01)

    def test_negative_commands_clamp_and_energy_never_decreases(self):
        p = params()
        state = initial_state(p)
        rng = random.Random(11)
        previous_energy = state.nbi_energy
        for _ in range(300):
            state = plant_step(
                state, p, p_nbi=rng.uniform(-1.0, 1.0), gas_flux=rng.uniform(-20.0, 20.0), dt=0.01
            )
            assert state.nbi_energy >= previous_energy
            assert state.nbi_power >= 0.0 and state.gas_flux >= 0.0
            previous_energy = state.nbi_energy

    def test_signals_expose_distance_and_energy_fraction(self):
        p = params()
        state = initial_state(p)
        signals = plant_signals(state, p)
        assert signals["d_ne_edge"] == pytest.approx(
            distance(state.h98y2, state.ne_edge_norm, BOUNDARY)
        )
        assert signals["nbi_energy_frac"] == 0.0


class TestEnergyCheck:
    def test_zero_energy_zero_fraction(self):
        assert nbi_energy_check(0.0) == 0.0

    def test_threshold_boundary(self):
        assert nbi_energy_check(1.235, limit=1.3) == pytest.approx(0.95, abs=1e-12)

    def test_full_budget(self):
        assert nbi_energy_check(1.3, limit=1.3) == pytest.approx(1.0, abs=1e-15)

    def test_negative_energy_rejected(self):
        with pytest.raises(ValueError):
            nbi_energy_check(-0.1)
