"""
Cumulative trajectory cost and selection.

J1 penalises shear stress of the guiding field along the path (large next to
obstacles and road edges), J2 body accelerations, J3 control effort and J4
control rates. Infeasible candidates cost +inf.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from source.fluid.solver import Stvf
from source.planner.sampler import ControlSequence, Trajectory, clamp_to_centres

logger = logging.getLogger(__name__)


class PlannerFault(RuntimeError):
    """No feasible candidate was produced for this planning step."""


@dataclass(frozen=True)
class CostWeights:
    c_1: float = 10.0
    c_21: float = 1.0
    c_22: float = 4.0
    c_31: float = 1e-7
    c_32: float = 10.0
    c_41: float = 1e-7
    c_42: float = 10.0

    def __post_init__(self):
        values = self.as_tuple()
        if any(v < 0 or not math.isfinite(v) for v in values):
            raise ValueError(f"Cost weights must be finite and nonnegative: {values}")
        if not any(v > 0 for v in values):
            raise ValueError("At least one cost weight must be positive")

    def as_tuple(self) -> Tuple[float, ...]:
        return (self.c_1, self.c_21, self.c_22, self.c_31, self.c_32, self.c_41, self.c_42)

    def scaled(self, factor: float) -> "CostWeights":
        return CostWeights(*(v * factor for v in self.as_tuple()))

    @classmethod
    def from_config(cls, config: dict) -> "CostWeights":
        cc = (config or {}).get('costs', {})
        defaults = cls()
        return cls(**{name: cc.get(name, getattr(defaults, name))
                      for name in ('c_1', 'c_21', 'c_22', 'c_31', 'c_32', 'c_41', 'c_42')})


@dataclass
class CostBreakdown:
    J: float
    J1: float
    J2: float
    J3: float
    J4: float
    shear: List[float] = field(default_factory=list)
    step_costs: List[float] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.J)

    @classmethod
    def infeasible(cls) -> "CostBreakdown":
        inf = math.inf
        return cls(J=inf, J1=inf, J2=inf, J3=inf, J4=inf)

    def as_dict(self) -> dict:
        return {'J': self.J, 'J1': self.J1, 'J2': self.J2, 'J3': self.J3, 'J4': self.J4}


def shear_field(stvf: Stvf) -> np.ndarray:
    """|d s_dot / d d| at every cell centre (1/s), solid cells counted as s_dot = 0."""
    vec = stvf.vectors
    t_comp = vec[2]
    moving = t_comp > 1e-9
    s_dot = np.where(moving, vec[0] / np.where(moving, t_comp, 1.0), 0.0) * stvf.ds / stvf.dt
    s_dot[stvf.solid_mask] = 0.0
    return np.abs(np.gradient(s_dot, stvf.dd, axis=1))


def _shear_interpolator(stvf: Stvf) -> RegularGridInterpolator:
    if 'shear' not in stvf._cache:
        stvf._cache['shear'] = RegularGridInterpolator(stvf.axes(), shear_field(stvf),
                                                       method='linear', bounds_error=False,
                                                       fill_value=None)
    return stvf._cache['shear']


def shear_stress(stvf: Stvf, s: float, d: float, t: float) -> float:
    """
    |d s_dot / d d| of the field's longitudinal speed (1/s), central
    differences in the interior, one-sided at the lateral edges, blended
    trilinearly to the query point.
    """
    point, _ = clamp_to_centres(stvf, s, d, t)
    return float(_shear_interpolator(stvf)(point[None, :])[0])


def total_cost(traj: Trajectory, controls: ControlSequence, stvf: Stvf, w: CostWeights,
               dt: float = 0.1, previous_input: Optional[Tuple[float, float]] = None) -> CostBreakdown:
    """
    Cumulative cost of one candidate.

    J1 sums over every stored state (t = 0..horizon); J2..J4 over the applied
    steps. The first control rate is taken against `previous_input` (zero
    when there is none).
    """
    if not traj.feasible or not traj.states:
        return CostBreakdown.infeasible()

    shear = [shear_stress(stvf, s, d, k * dt) for k, (s, d, _, _) in enumerate(traj.frenet)]
    step_costs = []
    J1 = sum(w.c_1 * h * h for h in shear)

    J2 = J3 = J4 = 0.0
    prev = previous_input if previous_input is not None else (controls.inputs[0] if controls.inputs else (0.0, 0.0))
    for (u_dot, v_dot), (F_x, delta_f) in zip(traj.accels, controls.inputs):
        j2 = w.c_21 * u_dot * u_dot + w.c_22 * v_dot * v_dot
        j3 = w.c_31 * F_x * F_x + w.c_32 * delta_f * delta_f
        F_rate = (F_x - prev[0]) / dt
        d_rate = (delta_f - prev[1]) / dt
        j4 = w.c_41 * F_rate * F_rate + w.c_42 * d_rate * d_rate
        prev = (F_x, delta_f)
        J2 += j2
        J3 += j3
        J4 += j4
        step_costs.append(j2 + j3 + j4)

    J = J1 + J2 + J3 + J4
    return CostBreakdown(J=J, J1=J1, J2=J2, J3=J3, J4=J4, shear=shear, step_costs=step_costs)


def select_best(costs: Sequence[CostBreakdown]) -> int:
    """Index of the cheapest feasible candidate; ties go to the lower index.

    Raises:
        ValueError: no candidates
        PlannerFault: every candidate is infeasible
    """
    if not costs:
        raise ValueError("select_best needs at least one candidate")
    totals = np.array([c.J for c in costs], dtype=float)
    totals[np.isnan(totals)] = np.inf
    if not np.isfinite(totals).any():
        raise PlannerFault(f"All {len(costs)} candidate trajectories are infeasible")
    best = int(np.argmin(totals))
    logger.debug(f"Selected candidate {best} of {len(costs)} (J={totals[best]:.4f})")
    return best
