"""
Vector-field guided trajectory sampling.

Each candidate rolls the vehicle forward over the horizon: the current body
velocity is mapped to the road frame, the next position is predicted, the
field velocity there (scaled by the candidate's gamma/eta pair) defines the
desired Frenet acceleration, which is mapped back to the body frame, inverted
through the vehicle model, saturated and integrated with forward dynamics.
Candidate 0 always uses the identity pair and is the pure streamline.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.signal import savgol_coeffs

from source.fluid.solver import Stvf
from source.geometry.frenet import (
    OutOfDomainError,
    ReferencePath,
    body_to_frenet_velocity,
    cart_to_frenet,
    frenet_to_body_accel,
)
from source.vehicle.dynamics import (
    VehicleParams,
    VehicleState,
    forward_dynamics,
    inverse_dynamics,
    saturate,
    step_plant,
)

logger = logging.getLogger(__name__)

DEFAULT_GAMMAS = (0.85, 1.0, 1.15)
DEFAULT_ETAS = (0.6, 0.8, 1.0, 1.2, 1.4)


class FieldSample(NamedTuple):
    s_dot: float
    d_dot: float
    clamped: bool


@dataclass(frozen=True)
class PerturbationSchedule:
    """(gamma, eta) multipliers per candidate; the first pair is (1, 1)."""
    pairs: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if not self.pairs or tuple(self.pairs[0]) != (1.0, 1.0):
            raise ValueError("First perturbation pair must be the identity (1, 1)")

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def grid(cls, gammas: Sequence[float] = DEFAULT_GAMMAS, etas: Sequence[float] = DEFAULT_ETAS,
             n: Optional[int] = None) -> "PerturbationSchedule":
        """Identity pair first, then the gamma x eta grid without duplicates."""
        pairs = [(1.0, 1.0)]
        for g in gammas:
            for e in etas:
                pair = (float(g), float(e))
                if pair not in pairs:
                    pairs.append(pair)
        if n is not None:
            if n < 1:
                raise ValueError(f"Need at least one candidate, got {n}")
            pairs = pairs[:n]
        return cls(pairs=tuple(pairs))

    @classmethod
    def from_config(cls, config: dict) -> "PerturbationSchedule":
        sc = (config or {}).get('sampler', {})
        return cls.grid(sc.get('gammas', DEFAULT_GAMMAS), sc.get('etas', DEFAULT_ETAS),
                        sc.get('candidates', 15))


@dataclass(eq=False)
class Trajectory:
    """States at t = 0..horizon plus their Frenet shadows.

    frenet rows are (s, d, s_dot, d_dot); accels rows are the forward-dynamics
    (u_dot, v_dot) applied over each step.
    """
    states: List[VehicleState] = field(default_factory=list)
    frenet: List[Tuple[float, float, float, float]] = field(default_factory=list)
    accels: List[Tuple[float, float]] = field(default_factory=list)
    feasible: bool = True
    reason: str = ""

    def __len__(self) -> int:
        return len(self.states)


@dataclass(eq=False)
class ControlSequence:
    inputs: List[Tuple[float, float]] = field(default_factory=list)
    flags: List[Tuple[bool, bool]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.inputs)


def _field_interpolator(stvf: Stvf) -> RegularGridInterpolator:
    if 'interp' not in stvf._cache:
        values = np.moveaxis(stvf.vectors, 0, -1)
        stvf._cache['interp'] = RegularGridInterpolator(stvf.axes(), values, method='linear',
                                                        bounds_error=False, fill_value=None)
    return stvf._cache['interp']


def clamp_to_centres(stvf: Stvf, s: float, d: float, t: float) -> Tuple[np.ndarray, bool]:
    """Query point clamped to the cell-centre hull; flag set when outside the domain."""
    axes = stvf.axes()
    point = np.array([s, d, t], dtype=float)
    outside = False
    for a, (lo, hi) in enumerate(stvf.extent()):
        if point[a] < lo - 1e-9 or point[a] > hi + 1e-9:
            outside = True
        point[a] = min(max(point[a], axes[a][0]), axes[a][-1])
    return point, outside


def interpolate_field(stvf: Stvf, s: float, d: float, t: float) -> FieldSample:
    """
    Trilinear field lookup converted to physical Frenet velocities.

    Solid neighbours contribute their zero vectors with their weight. The
    blend is renormalised and s_dot = (ds/dt) * (cell ds / cell dt),
    analogously for d_dot. A blend with no time component yields (0, 0).
    """
    point, outside = clamp_to_centres(stvf, s, d, t)
    if outside:
        logger.debug(f"Field query ({s:.2f}, {d:.2f}, {t:.2f}) outside domain, clamped")
    vec = _field_interpolator(stvf)(point[None, :])[0]
    norm = float(np.linalg.norm(vec))
    if norm < 1e-9 or vec[2] <= 1e-9 * norm:
        return FieldSample(0.0, 0.0, outside)
    vec = vec / norm
    s_dot = float(vec[0] / vec[2]) * stvf.ds / stvf.dt
    d_dot = float(vec[1] / vec[2]) * stvf.dd / stvf.dt
    limit = stvf.max_speed
    return FieldSample(max(-limit, min(limit, s_dot)), max(-limit, min(limit, d_dot)), outside)


class RateFilter:
    """Causal Savitzky-Golay smoother over the trailing `window` raw rates.

    Until the window fills, history is padded with the first sample.
    """

    def __init__(self, window: int = 5, order: int = 2):
        if window < order + 1:
            raise ValueError(f"Savitzky-Golay window {window} too short for order {order}")
        self.window = window
        self.coeffs = savgol_coeffs(window, order, pos=window - 1, use='dot')
        self.history: List[float] = []

    def __call__(self, value: float) -> float:
        if not self.history:
            self.history = [value] * self.window
        else:
            self.history = self.history[1:] + [value]
        return float(np.dot(self.coeffs, self.history))


def frenet_accels(s_dot: float, d_dot: float, s_dot_next: float, d_dot_next: float,
                  kappa: float, dt: float, centripetal_factor: float = 1.0,
                  s_filter: Optional[RateFilter] = None,
                  d_filter: Optional[RateFilter] = None) -> Tuple[float, float]:
    """
    Frenet accelerations with Coriolis (2 k s_dot d_dot) and centripetal
    (factor * k s_dot^2) terms added to the finite-difference rates.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    s_rate = (s_dot_next - s_dot) / dt
    d_rate = (d_dot_next - d_dot) / dt
    if s_filter is not None:
        s_rate = s_filter(s_rate)
    if d_filter is not None:
        d_rate = d_filter(d_rate)
    return (s_rate + 2.0 * kappa * s_dot * d_dot,
            d_rate + centripetal_factor * kappa * s_dot * s_dot)


class StreamlineSampler:
    """
    Rolls out candidate trajectories through the Stvf.

    Reads the `sampler` config section: dt, steps, substeps, centripetal_factor,
    savgol_window, savgol_order.
    """

    def __init__(self, path: ReferencePath, params: VehicleParams, config: dict = None):
        self.path = path
        self.params = params
        sc = (config or {}).get('sampler', {})
        self.dt = sc.get('dt', 0.1)
        self.steps = sc.get('steps', 64)
        self.substeps = sc.get('substeps', 10)
        self.centripetal_factor = sc.get('centripetal_factor', 1.0)
        self.savgol_window = sc.get('savgol_window', 5)
        self.savgol_order = sc.get('savgol_order', 2)

    def rollout(self, ev: VehicleState, stvf: Stvf, gamma: float = 1.0, eta: float = 1.0,
                s_hint: Optional[float] = None) -> Tuple[Trajectory, ControlSequence]:
        p = self.params
        (s_lo, s_hi), (d_lo, d_hi), _ = stvf.extent()
        traj = Trajectory()
        controls = ControlSequence()
        s_filter = RateFilter(self.savgol_window, self.savgol_order)
        d_filter = RateFilter(self.savgol_window, self.savgol_order)

        state = ev
        try:
            fp = cart_to_frenet(self.path, (state.x, state.y), d_max=math.inf, s_hint=s_hint)
        except OutOfDomainError as e:
            traj.feasible, traj.reason = False, f"start off route: {e}"
            return traj, controls

        for step in range(self.steps + 1):
            beta = self.path.heading_at(fp.s) - state.psi
            s_dot, d_dot = body_to_frenet_velocity(beta, state.u, state.v)
            traj.states.append(state)
            traj.frenet.append((fp.s, fp.d, s_dot, d_dot))
            if not (s_lo <= fp.s <= s_hi and d_lo <= fp.d <= d_hi):
                traj.feasible = False
                traj.reason = f"left band at t={step * self.dt:.1f} s (s={fp.s:.1f}, d={fp.d:.2f})"
                break
            if step == self.steps:
                break

            s_next = fp.s + s_dot * self.dt
            d_next = fp.d + d_dot * self.dt
            sample = interpolate_field(stvf, s_next, d_next, (step + 1) * self.dt)
            s_dot_next = gamma * sample.s_dot
            d_dot_next = eta * sample.d_dot

            kappa = float(self.path.curvature_at(fp.s))
            s_ddot, d_ddot = frenet_accels(s_dot, d_dot, s_dot_next, d_dot_next, kappa, self.dt,
                                           self.centripetal_factor, s_filter, d_filter)
            u_dot, v_dot = frenet_to_body_accel(beta, s_ddot, d_ddot)
            F_x, delta_f = inverse_dynamics(state, u_dot, v_dot, p)
            sat = saturate(F_x, delta_f, p)
            rates = forward_dynamics(state, sat.F_x, sat.delta_f, p)

            controls.inputs.append((sat.F_x, sat.delta_f))
            controls.flags.append((sat.force_saturated, sat.steer_saturated))
            traj.accels.append((rates[0], rates[1]))

            state = step_plant(state, sat.F_x, sat.delta_f, p, self.dt, self.substeps)
            try:
                fp = cart_to_frenet(self.path, (state.x, state.y), d_max=math.inf, s_hint=fp.s)
            except OutOfDomainError as e:
                traj.feasible, traj.reason = False, f"left route: {e}"
                break
        return traj, controls

    def sample(self, ev: VehicleState, stvf: Stvf, schedule: PerturbationSchedule,
               s_hint: Optional[float] = None) -> List[Tuple[Trajectory, ControlSequence]]:
        results = []
        for i, (gamma, eta) in enumerate(schedule.pairs):
            traj, controls = self.rollout(ev, stvf, gamma, eta, s_hint)
            if not traj.feasible:
                logger.debug(f"Candidate {i} (gamma={gamma}, eta={eta}) infeasible: {traj.reason}")
            results.append((traj, controls))
        return results


def sample_trajectories(ev: VehicleState, stvf: Stvf, n: int, dt: float, path: ReferencePath,
                        params: VehicleParams,
                        schedule: Optional[PerturbationSchedule] = None,
                        config: dict = None) -> List[Tuple[Trajectory, ControlSequence]]:
    """Sample n candidates; the default schedule is the gamma x eta grid."""
    config = dict(config or {})
    config['sampler'] = dict(config.get('sampler', {}), dt=dt)
    schedule = schedule or PerturbationSchedule.grid(n=n)
    if len(schedule) < n:
        raise ValueError(f"Schedule has {len(schedule)} pairs, {n} candidates requested")
    schedule = PerturbationSchedule(pairs=schedule.pairs[:n])
    return StreamlineSampler(path, params, config).sample(ev, stvf, schedule)
