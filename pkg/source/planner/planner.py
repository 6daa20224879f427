"""
One planning step: scene -> domain -> Stvf -> candidates -> selection.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from source.fluid.domain import (
    DomainBuildError,
    DomainConfig,
    FluidDomainSpec,
    ObstaclePrediction,
    build_domain,
)
from source.fluid.solver import LatticeState, LbmSolver, SolveReport, SolverDivergenceError, Stvf
from source.geometry.frenet import ReferencePath
from source.planner.sampler import (
    ControlSequence,
    PerturbationSchedule,
    StreamlineSampler,
    Trajectory,
)
from source.planner.selector import CostBreakdown, CostWeights, PlannerFault, select_best, total_cost
from source.vehicle.dynamics import VehicleParams, VehicleState

logger = logging.getLogger(__name__)


@dataclass
class PlanResult:
    F_x: float
    delta_f: float
    force_saturated: bool = False
    steer_saturated: bool = False
    best_index: int = -1
    trajectory: Optional[Trajectory] = None
    controls: Optional[ControlSequence] = None
    costs: List[CostBreakdown] = field(default_factory=list)
    stvf: Optional[Stvf] = None
    domain: Optional[FluidDomainSpec] = None
    solve_report: Optional[SolveReport] = None
    lattice: Optional[LatticeState] = None
    timings: Dict[str, float] = field(default_factory=dict)
    fault: bool = False
    fault_reason: str = ""

    @property
    def feasible_count(self) -> int:
        return sum(1 for c in self.costs if c.feasible)

    @property
    def selected_cost(self) -> Optional[CostBreakdown]:
        return self.costs[self.best_index] if self.best_index >= 0 else None


class FluidMotionPlanner:
    """
    Receding-horizon planner following the solved flow field.

    Each call to plan() is an independent boundary-value solve unless
    `lbm.warm_start` is set, in which case the previous converged lattice
    seeds the next solve when the lattice dimensions match.
    """

    def __init__(self, path: ReferencePath, config: dict = None,
                 lane_markings: Sequence[float] = (), nominal_speed: Optional[float] = None,
                 params: Optional[VehicleParams] = None, solver: Optional[LbmSolver] = None):
        self.config = config or {}
        self.path = path
        self.lane_markings = list(lane_markings)
        self.params = params or VehicleParams.from_config(self.config)
        self.domain_config = DomainConfig.from_config(self.config, nominal_speed=nominal_speed)
        self.solver = solver or LbmSolver(self.config)
        self.sampler = StreamlineSampler(path, self.params, self.config)
        self.schedule = PerturbationSchedule.from_config(self.config)
        self.weights = CostWeights.from_config(self.config)
        self.warm_start = self.config.get('lbm', {}).get('warm_start', False)
        self._lattice: Optional[LatticeState] = None

        if self.sampler.steps * self.sampler.dt > self.domain_config.t_p + 1e-9:
            logger.warning(
                f"Sampling horizon {self.sampler.steps * self.sampler.dt:.1f} s exceeds "
                f"domain horizon {self.domain_config.t_p:.1f} s; field queries will be clamped"
            )

    def emergency(self, reason: str, timings: Dict[str, float], **extra) -> PlanResult:
        logger.error(f"Planner fault, commanding emergency stop: {reason}")
        return PlanResult(F_x=-self.params.F_max, delta_f=0.0, force_saturated=True,
                          steer_saturated=False, timings=timings, fault=True,
                          fault_reason=reason, **extra)

    def plan(self, ev: VehicleState, predictions: Sequence[ObstaclePrediction],
             previous_input: Optional[Tuple[float, float]] = None,
             s_hint: Optional[float] = None) -> PlanResult:
        """
        Run one planning cycle.

        Returns:
            PlanResult with the first control of the selected candidate, or
            the emergency command (F_x = -F_max, delta_f = 0) with fault set
        """
        timings = {'domain_ms': 0.0, 'lbm_ms': 0.0, 'sampling_ms': 0.0, 'total_ms': 0.0}
        start = time.perf_counter()

        def lap(key: str, since: float) -> float:
            now = time.perf_counter()
            timings[key] = (now - since) * 1000.0
            timings['total_ms'] = (now - start) * 1000.0
            return now

        try:
            domain = build_domain(self.path, ev, predictions, self.lane_markings,
                                  self.domain_config, ev_s_hint=s_hint)
        except DomainBuildError as e:
            lap('domain_ms', start)
            return self.emergency(str(e), timings)
        mark = lap('domain_ms', start)

        initial = self._lattice if self.warm_start else None
        try:
            stvf, report, lattice = self.solver.solve(domain, initial=initial)
        except SolverDivergenceError as e:
            lap('lbm_ms', mark)
            self._lattice = None
            return self.emergency(str(e), timings, domain=domain)
        self._lattice = lattice
        timings['mlups'] = report.mlups
        mark = lap('lbm_ms', mark)

        candidates = self.sampler.sample(ev, stvf, self.schedule, s_hint=s_hint)
        costs = [total_cost(traj, controls, stvf, self.weights, self.sampler.dt, previous_input)
                 for traj, controls in candidates]
        for i, c in enumerate(costs):
            logger.debug(f"Candidate {i}: J={c.J:.4f} (J1={c.J1:.4f}, J2={c.J2:.4f}, "
                         f"J3={c.J3:.4f}, J4={c.J4:.4f})")
        try:
            best = select_best(costs)
        except PlannerFault as e:
            lap('sampling_ms', mark)
            return self.emergency(str(e), timings, costs=costs, stvf=stvf, domain=domain,
                                  solve_report=report, lattice=lattice)
        lap('sampling_ms', mark)

        traj, controls = candidates[best]
        F_x, delta_f = controls.inputs[0]
        force_sat, steer_sat = controls.flags[0]
        return PlanResult(
            F_x=F_x, delta_f=delta_f, force_saturated=force_sat, steer_saturated=steer_sat,
            best_index=best, trajectory=traj, controls=controls, costs=costs, stvf=stvf,
            domain=domain, solve_report=report, lattice=lattice, timings=timings,
        )
