"""
Closed-loop receding-horizon simulation.

Every step: advance the scripted traffic, plan from the current EV state,
apply the first control of the selected candidate to the EV plant, then check
for collisions and route completion.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from source.fluid.domain import footprint_corners
from source.geometry.frenet import OutOfDomainError, cart_to_frenet
from source.planner.planner import FluidMotionPlanner, PlanResult
from source.simulation.kpi import DEFAULT_SAFE_RADIUS, KinematicState, compute_kpis, compute_ttc
from source.simulation.obstacles import ObstacleState, ObstacleTraffic
from source.simulation.scenario import ScenarioSpec
from source.vehicle.dynamics import (
    VehicleParams,
    VehicleState,
    forward_dynamics,
    inertial_accels,
    step_plant,
)

logger = logging.getLogger(__name__)

STATUS_COMPLETED = 'completed'
STATUS_TIMEOUT = 'timeout'
STATUS_COLLISION = 'collision'
STATUS_OFF_ROUTE = 'off_route'


@dataclass
class StepRecord:
    step: int
    t: float
    ev: Dict[str, float]
    ev_vx: float
    ev_vy: float
    s: float
    d: float
    F_x: float
    delta_f: float
    force_saturated: bool
    steer_saturated: bool
    a_lon: float
    a_lat: float
    fault: bool = False
    fault_reason: str = ""
    best_index: int = -1
    candidates: int = 0
    feasible: int = 0
    costs: Optional[Dict[str, float]] = None
    lbm: Dict[str, float] = field(default_factory=dict)
    obstacles: List[Dict[str, float]] = field(default_factory=list)
    timing: Dict[str, float] = field(default_factory=dict)

    def as_dict(self, include_timing: bool = True) -> dict:
        out = {
            'record': 'step',
            'step': self.step,
            't': self.t,
            'ev': self.ev,
            's': self.s,
            'd': self.d,
            'controls': {'F_x': self.F_x, 'delta_f': self.delta_f},
            'saturated': {'force': self.force_saturated, 'steer': self.steer_saturated},
            'accel': {'lon': self.a_lon, 'lat': self.a_lat},
            'fault': self.fault,
            'fault_reason': self.fault_reason,
            'selected': self.best_index,
            'candidates': self.candidates,
            'feasible': self.feasible,
            'costs': self.costs,
            'lbm': self.lbm,
            'obstacles': self.obstacles,
        }
        if include_timing:
            out['timing'] = self.timing
        return out


@dataclass
class RunLog:
    scenario_id: str
    seed: int
    status: str = STATUS_TIMEOUT
    records: List[StepRecord] = field(default_factory=list)
    collision_time: Optional[float] = None
    collided_with: Optional[str] = None
    distance_travelled: float = 0.0
    intended_distance: float = 0.0
    kpis: Dict[str, float] = field(default_factory=dict)
    wall_time_s: float = 0.0
    field_dumps: Dict[int, Dict[str, np.ndarray]] = field(default_factory=dict)

    @property
    def succeeded(self) -> bool:
        return self.status in (STATUS_COMPLETED, STATUS_TIMEOUT)

    @property
    def emergency_steps(self) -> int:
        return sum(1 for r in self.records if r.fault)

    def timing_summary(self) -> Dict[str, float]:
        """Mean/max planner wall time and the mean per-stage breakdown (ms)."""
        keys = ('domain_ms', 'lbm_ms', 'sampling_ms', 'total_ms')
        if not self.records:
            return {'plan_time_mean': 0.0, 'plan_time_max': 0.0, **{f'{k}_mean': 0.0 for k in keys}}
        totals = [r.timing.get('total_ms', 0.0) for r in self.records]
        summary = {'plan_time_mean': float(np.mean(totals)), 'plan_time_max': float(np.max(totals))}
        for key in keys:
            summary[f'{key}_mean'] = float(np.mean([r.timing.get(key, 0.0) for r in self.records]))
        return summary


def footprints_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex polygons given as (n, 2) corners."""
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        for ex, ey in edges:
            axis = np.array([-ey, ex])
            pa, pb = a @ axis, b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True


def _collision(ev: VehicleState, params: VehicleParams,
               obstacles: Sequence[ObstacleState]) -> Optional[str]:
    ev_box = footprint_corners(ev.x, ev.y, ev.psi, params.length, params.width)
    for ov in obstacles:
        reach = 0.5 * (math.hypot(params.length, params.width) + math.hypot(ov.length, ov.width))
        if math.hypot(ov.x - ev.x, ov.y - ev.y) > reach:
            continue
        if footprints_overlap(ev_box, footprint_corners(ov.x, ov.y, ov.heading, ov.length, ov.width)):
            return ov.name
    return None


def _route_position(path, ev: VehicleState, s_hint: float, band: Tuple[float, float]):
    """Frenet position of the EV; OutOfDomainError once it leaves the route or the road band."""
    fp = cart_to_frenet(path, (ev.x, ev.y), d_max=math.inf, s_hint=s_hint)
    if not band[0] <= fp.d <= band[1]:
        raise OutOfDomainError(f"Lateral offset {fp.d:.2f} m outside road band [{band[0]:.1f}, {band[1]:.1f}] m")
    return fp


def _ev_velocity(ev: VehicleState) -> tuple:
    c, s = math.cos(ev.psi), math.sin(ev.psi)
    return ev.u * c - ev.v * s, ev.u * s + ev.v * c


def _obstacle_entries(ev: VehicleState, obstacles: Sequence[ObstacleState],
                      safe_radius: float) -> List[Dict[str, float]]:
    vx, vy = _ev_velocity(ev)
    ev_kin = KinematicState(ev.x, ev.y, vx, vy)
    entries = []
    for ov in obstacles:
        ttc = compute_ttc(ev_kin, KinematicState(ov.x, ov.y, ov.vx, ov.vy), safe_radius)
        entries.append({
            'name': ov.name,
            'x': ov.x,
            'y': ov.y,
            'vx': ov.vx,
            'vy': ov.vy,
            'distance': math.hypot(ov.x - ev.x, ov.y - ev.y),
            'ttc': ttc,
        })
    return entries


def _field_dump(result: PlanResult) -> Optional[Dict[str, np.ndarray]]:
    if result.domain is None or result.stvf is None:
        return None
    dump = {
        'cell_class': result.domain.cell_class.copy(),
        'stvf': result.stvf.vectors.copy(),
    }
    if result.lattice is not None:
        dump['rho'] = result.lattice.rho
        dump['V'] = result.lattice.V
    return dump


def run_closed_loop(
    spec: ScenarioSpec,
    config: dict = None,
    planner: Optional[FluidMotionPlanner] = None,
    dump_steps: Sequence[int] = (),
    on_step: Optional[Callable[[StepRecord], None]] = None,
) -> RunLog:
    """
    Simulate one scenario to completion, collision or timeout.

    Args:
        spec: Parsed scenario
        config: Full configuration dict (sections simulation, kpi, ...)
        planner: Optional pre-built planner (tests inject stubs here)
        dump_steps: Steps whose lattice fields are kept in RunLog.field_dumps
        on_step: Callback invoked with each StepRecord as it is produced

    Returns:
        RunLog with records, status and KPIs
    """
    config = config or {}
    sim = config.get('simulation', {})
    dt = sim.get('dt', 0.1)
    substeps = sim.get('substeps', 10)
    seed = sim.get('seed', 0)
    safe_radius = config.get('kpi', {}).get('safe_radius', DEFAULT_SAFE_RADIUS)

    path = spec.ev_path(config.get('domain', {}).get('resample_step', 0.5),
                        config.get('domain', {}).get('max_curvature', 0.2))
    params = VehicleParams.from_config(config)
    planner = planner or FluidMotionPlanner(path, config, spec.lane_markings,
                                            nominal_speed=spec.nominal_speed, params=params)
    traffic = ObstacleTraffic(spec)
    horizon = planner.domain_config.t_p
    pred_dt = planner.domain_config.dt
    band = (planner.domain_config.d_min, planner.domain_config.d_min + planner.domain_config.d_e)

    ev = spec.initial_ev_state()
    s_start = cart_to_frenet(path, (ev.x, ev.y), d_max=math.inf).s
    s_now = s_start
    intended = spec.goal_distance or min(spec.nominal_speed * spec.duration,
                                         path.total_length - s_start)
    log = RunLog(scenario_id=spec.scenario_id, seed=seed, intended_distance=intended)
    n_steps = int(round(spec.duration / dt))
    previous_input = None
    dump_steps = set(dump_steps)
    logger.info(f"Running scenario {spec.scenario_id}: {n_steps} steps, "
                f"{len(traffic)} obstacle(s), intended distance {intended:.1f} m")

    hit = _collision(ev, params, traffic.states_at(0.0))
    if hit is not None:
        log.status, log.collision_time, log.collided_with = STATUS_COLLISION, 0.0, hit
        logger.error(f"Scenario {spec.scenario_id}: EV overlaps {hit} at start")
        return log

    wall_start = time.perf_counter()
    for k in range(n_steps):
        t = k * dt
        ov_states = traffic.states_at(t)
        predictions = traffic.predictions(t, horizon, pred_dt)
        result = planner.plan(ev, predictions, previous_input, s_hint=s_now)
        if k in dump_steps:
            dump = _field_dump(result)
            if dump is not None:
                log.field_dumps[k] = dump

        rates = forward_dynamics(ev, result.F_x, result.delta_f, params)
        a_lon, a_lat = inertial_accels(ev, rates)
        fp = cart_to_frenet(path, (ev.x, ev.y), d_max=math.inf, s_hint=s_now)
        vx, vy = _ev_velocity(ev)
        report = result.solve_report
        record = StepRecord(
            step=k,
            t=round(t, 9),
            ev=ev.as_dict(),
            ev_vx=vx,
            ev_vy=vy,
            s=fp.s,
            d=fp.d,
            F_x=result.F_x,
            delta_f=result.delta_f,
            force_saturated=result.force_saturated,
            steer_saturated=result.steer_saturated,
            a_lon=a_lon,
            a_lat=a_lat,
            fault=result.fault,
            fault_reason=result.fault_reason,
            best_index=result.best_index,
            candidates=len(result.costs),
            feasible=result.feasible_count,
            costs=result.selected_cost.as_dict() if result.selected_cost else None,
            lbm={'iterations': report.iterations, 'converged': report.converged,
                 'residual_mps': report.residual_mps} if report else {},
            obstacles=_obstacle_entries(ev, ov_states, safe_radius),
            timing=dict(result.timings),
        )
        log.records.append(record)
        if on_step is not None:
            on_step(record)

        ev = step_plant(ev, result.F_x, result.delta_f, params, dt, substeps)
        previous_input = (result.F_x, result.delta_f)
        try:
            s_now = _route_position(path, ev, s_now, band).s
        except OutOfDomainError as e:
            log.status = STATUS_OFF_ROUTE
            logger.error(f"Scenario {spec.scenario_id}: EV left the route at t={t + dt:.1f} s: {e}")
            break
        log.distance_travelled = s_now - s_start

        hit = _collision(ev, params, traffic.states_at(t + dt))
        if hit is not None:
            log.status, log.collision_time, log.collided_with = STATUS_COLLISION, round(t + dt, 9), hit
            logger.error(f"Scenario {spec.scenario_id}: collision with {hit} at t={t + dt:.1f} s")
            break
        if spec.goal_distance is not None and log.distance_travelled >= spec.goal_distance:
            log.status = STATUS_COMPLETED
            break
    else:
        log.status = STATUS_TIMEOUT if spec.goal_distance is not None else STATUS_COMPLETED

    log.wall_time_s = time.perf_counter() - wall_start
    if log.records:
        log.kpis = compute_kpis(log, config)
    timing = log.timing_summary()
    logger.info(
        f"Scenario {spec.scenario_id} finished: {log.status} after {len(log.records)} steps, "
        f"travelled {log.distance_travelled:.1f} m, plan time mean {timing['plan_time_mean']:.1f} ms "
        f"(max {timing['plan_time_max']:.1f} ms), emergency steps {log.emergency_steps}"
    )
    return log
