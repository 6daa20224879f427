import math

import numpy as np
import pytest

from source.fluid.domain import DomainConfig
from source.geometry.frenet import build_reference_path
from source.planner.planner import FluidMotionPlanner, PlanResult
from source.reporting.reports import write_run_log
from source.simulation.engine import (
    STATUS_COLLISION,
    STATUS_COMPLETED,
    STATUS_OFF_ROUTE,
    STATUS_TIMEOUT,
    footprints_overlap,
    run_closed_loop,
)
from source.simulation.scenario import loads_scenario
from source.vehicle.dynamics import VehicleState


def sample_config():
    return {
        'domain': {
            'lattice': [32, 8, 8],
            'length': 128.0,
            'width': 6.4,
            'horizon': 6.4,
            'behind': 8.0,
        },
        'lbm': {'backend': 'numpy', 'max_iters': 50},
        'sampler': {'candidates': 4, 'gammas': [0.85, 1.0, 1.15], 'etas': [1.0]},
        'simulation': {'dt': 0.1, 'substeps': 10, 'seed': 0},
        'kpi': {'safe_radius': 2.5},
    }


def scenario(duration=2.0, goal=None, obstacles="", route_length=500.0):
    text = f"""\
id: t1
layout: a
nominal_speed: 15.0
duration: {duration}
ego:
  speed: 15.0
  heading: 0.0
  route:
    segments:
      - straight: {route_length}
"""
    if goal is not None:
        text += f"goal_distance: {goal}\n"
    return loads_scenario(text + obstacles)


PARKED_OV = """\
obstacles:
  - name: OV1
    position: [21.0, 0.0]
    speed: 0.0
    heading: 0.0
"""


class CoastingPlanner:
    """Stands in for the fluid planner: commands zero force and a fixed steering angle."""

    def __init__(self, fault_steps=(), delta_f=0.0):
        self.domain_config = DomainConfig()
        self.fault_steps = set(fault_steps)
        self.delta_f = delta_f
        self.calls = []

    def plan(self, ev, predictions, previous_input=None, s_hint=None):
        step = len(self.calls)
        self.calls.append((ev, predictions, previous_input, s_hint))
        if step in self.fault_steps:
            return PlanResult(F_x=-8000.0, delta_f=0.0, force_saturated=True, fault=True,
                              fault_reason='test fault')
        return PlanResult(F_x=0.0, delta_f=self.delta_f)


class TestClosedLoop:
    """Run termination and logging."""

    def test_runs_full_duration_without_goal(self):
        planner = CoastingPlanner()
        log = run_closed_loop(scenario(duration=2.0), sample_config(), planner=planner)
        assert log.status == STATUS_COMPLETED
        assert len(log.records) == 20
        assert log.distance_travelled == pytest.approx(30.0, abs=1e-6)
        assert log.records[0].s == pytest.approx(40.0)

    def test_timeout_when_goal_not_reached(self):
        log = run_closed_loop(scenario(duration=1.0, goal=100.0), sample_config(),
                              planner=CoastingPlanner())
        assert log.status == STATUS_TIMEOUT
        assert log.succeeded
        assert log.kpis['progress'] == pytest.approx(0.15, abs=1e-6)

    def test_stops_at_goal(self):
        log = run_closed_loop(scenario(duration=5.0, goal=10.0), sample_config(),
                              planner=CoastingPlanner())
        assert log.status == STATUS_COMPLETED
        assert len(log.records) == 7
        assert log.kpis['progress'] == 1.0

    def test_collision_with_parked_obstacle(self):
        log = run_closed_loop(scenario(duration=3.0, obstacles=PARKED_OV), sample_config(),
                              planner=CoastingPlanner())
        assert log.status == STATUS_COLLISION
        assert log.collided_with == 'OV1'
        assert log.collision_time == pytest.approx(1.1)
        assert not log.succeeded

    def test_leaving_route_end(self):
        log = run_closed_loop(scenario(duration=5.0, route_length=30.0), sample_config(),
                              planner=CoastingPlanner())
        assert log.status == STATUS_OFF_ROUTE
        assert log.records[-1].t == pytest.approx(2.0)

    def test_drifting_off_road_laterally(self):
        log = run_closed_loop(scenario(duration=5.0), sample_config(),
                              planner=CoastingPlanner(delta_f=0.05))
        assert log.status == STATUS_OFF_ROUTE
        assert log.records[-1].t < 4.0
        assert all(r.d <= 4.8 for r in log.records)

    def test_previous_input_and_hint_passed(self):
        planner = CoastingPlanner()
        run_closed_loop(scenario(duration=0.3), sample_config(), planner=planner)
        assert planner.calls[0][2] is None
        assert planner.calls[1][2] == (0.0, 0.0)
        assert planner.calls[1][3] == pytest.approx(41.5)

    def test_emergency_steps_counted(self):
        log = run_closed_loop(scenario(duration=1.0), sample_config(),
                              planner=CoastingPlanner(fault_steps=(2, 3)))
        assert log.emergency_steps == 2
        assert log.records[2].fault_reason == 'test fault'
        assert log.records[2].force_saturated

    def test_obstacle_entries_logged(self):
        seen = []
        run_closed_loop(scenario(duration=0.5, obstacles=PARKED_OV), sample_config(),
                        planner=CoastingPlanner(), on_step=seen.append)
        first = seen[0].obstacles[0]
        assert first['name'] == 'OV1'
        assert first['distance'] == pytest.approx(21.0)
        assert first['ttc'] == pytest.approx((21.0 - 2.5) / 15.0)

    def test_overlap_at_start(self):
        ov = "obstacles:\n  - name: OV1\n    position: [1.0, 0.0]\n    speed: 0.0\n    heading: 0.0\n"
        log = run_closed_loop(scenario(obstacles=ov), sample_config(), planner=CoastingPlanner())
        assert log.status == STATUS_COLLISION
        assert log.records == []

    def test_timing_summary(self):
        log = run_closed_loop(scenario(duration=0.5), sample_config(), planner=CoastingPlanner())
        summary = log.timing_summary()
        assert summary['plan_time_mean'] == 0.0
        assert set(summary) >= {'plan_time_max', 'lbm_ms_mean'}


class TestFootprints:
    """Separating-axis overlap."""

    def test_overlapping_boxes(self):
        a = np.array([[0, 0], [2, 0], [2, 1], [0, 1]], dtype=float)
        assert footprints_overlap(a, a + [1.0, 0.5])

    def test_separated_boxes(self):
        a = np.array([[0, 0], [2, 0], [2, 1], [0, 1]], dtype=float)
        assert not footprints_overlap(a, a + [3.0, 0.0])

    def test_rotated_gap(self):
        a = np.array([[0, 0], [2, 0], [2, 1], [0, 1]], dtype=float)
        c, s = math.cos(math.pi / 4), math.sin(math.pi / 4)
        diamond = np.array([[0, -1], [1, 0], [0, 1], [-1, 0]], dtype=float) @ [[c, -s], [s, c]]
        assert not footprints_overlap(a, diamond * 0.5 + [3.2, 0.5])


@pytest.mark.slow
class TestFluidPlanner:
    """Planner step on a small lattice."""

    PATH = build_reference_path([(-20.0, 0.0), (200.0, 0.0)])

    def test_uniform_road_keeps_speed(self):
        planner = FluidMotionPlanner(self.PATH, sample_config(), nominal_speed=15.0)
        result = planner.plan(VehicleState(x=0.0, y=0.0, u=15.0), [])
        assert not result.fault
        assert result.best_index == 0
        assert abs(result.F_x) < 1.0
        assert abs(result.delta_f) < 1e-6
        assert result.solve_report.converged
        assert set(result.timings) >= {'domain_ms', 'lbm_ms', 'sampling_ms', 'total_ms'}

    def test_ev_outside_band_is_emergency(self):
        planner = FluidMotionPlanner(self.PATH, sample_config(), nominal_speed=15.0)
        result = planner.plan(VehicleState(x=0.0, y=10.0, u=15.0), [])
        assert result.fault
        assert result.F_x == -planner.params.F_max
        assert result.delta_f == 0.0

    def test_divergence_is_emergency(self):
        config = sample_config()
        config['lbm'].update(lattice_speed=0.5, divergence_speed=0.3)
        planner = FluidMotionPlanner(self.PATH, config, nominal_speed=15.0)
        result = planner.plan(VehicleState(x=0.0, y=0.0, u=15.0), [])
        assert result.fault
        assert 'diverged' in result.fault_reason


@pytest.mark.slow
class TestClosedLoopDeterminism:
    """Same scenario and seed, same log."""

    def test_repeated_run_log_byte_identical(self, tmp_path):
        spec_text = "lane_markings: [1.6]\n" + PARKED_OV
        written = []
        for name in ('first', 'second'):
            log = run_closed_loop(scenario(duration=0.3, obstacles=spec_text), sample_config())
            assert len(log.records) == 3
            written.append(write_run_log(log, tmp_path / f'{name}.jsonl', include_timing=False))
        assert written[0].read_bytes() == written[1].read_bytes()
