"""
Nonlinear single-track (bicycle) vehicle model.

Forward dynamics evaluate the body-frame rates (u_dot, v_dot, r_dot) for a
commanded longitudinal force F_x and front steering angle delta_f. Inverse
dynamics recover (F_x, delta_f) for desired (u_dot, v_dot) and keep the tyre
slip angles inside their linear region by freezing the yaw rate when it is
already out of bounds and still growing.

Below u_min the slip-angle terms are singular, so both directions switch to a
kinematic bicycle model.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Tuple

logger = logging.getLogger(__name__)

# Time constant (s) used by the low-speed model to relax v, r to kinematic values
KINEMATIC_RELAXATION = 0.1
_TAN_LIMIT = math.pi / 2 - 1e-6


@dataclass(frozen=True)
class VehicleParams:
    m: float = 1500.0
    I_z: float = 2500.0
    l_f: float = 1.2
    l_r: float = 1.6
    C_f: float = 80000.0
    C_r: float = 80000.0
    mu_f: float = 1.0
    mu_r: float = 1.0
    F_max: float = 8000.0
    delta_max: float = math.radians(30.0)
    alpha_min: float = math.radians(-4.0)
    alpha_max: float = math.radians(4.0)
    u_min: float = 0.5
    length: float = 5.0
    width: float = 2.0

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r

    @classmethod
    def from_config(cls, config: dict) -> "VehicleParams":
        """Build parameters from the `vehicle` config section (angles in degrees)."""
        vc = (config or {}).get('vehicle', {})
        alpha_max = math.radians(vc.get('alpha_max_deg', 4.0))
        return cls(
            m=vc.get('mass', 1500.0),
            I_z=vc.get('yaw_inertia', 2500.0),
            l_f=vc.get('l_f', 1.2),
            l_r=vc.get('l_r', 1.6),
            C_f=vc.get('cornering_stiffness_front', 80000.0),
            C_r=vc.get('cornering_stiffness_rear', 80000.0),
            mu_f=vc.get('mu_front', 1.0),
            mu_r=vc.get('mu_rear', 1.0),
            F_max=vc.get('force_max', 8000.0),
            delta_max=math.radians(vc.get('steer_max_deg', 30.0)),
            alpha_min=-alpha_max,
            alpha_max=alpha_max,
            u_min=vc.get('u_min', 0.5),
            length=vc.get('length', 5.0),
            width=vc.get('width', 2.0),
        )


@dataclass(frozen=True)
class VehicleState:
    """Pose (x, y, psi) and body-frame velocities (u, v, r)."""
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0
    u: float = 0.0
    v: float = 0.0
    r: float = 0.0

    def as_dict(self) -> dict:
        return {'x': self.x, 'y': self.y, 'psi': self.psi, 'u': self.u, 'v': self.v, 'r': self.r}


class Saturation(NamedTuple):
    F_x: float
    delta_f: float
    force_saturated: bool
    steer_saturated: bool


def _check_finite(*values: float):
    for value in values:
        if not math.isfinite(value):
            raise ValueError(f"Non-finite dynamics input: {values}")


def _slip_terms(state: VehicleState, p: VehicleParams) -> Tuple[float, float]:
    a_f = math.atan((state.v + p.l_f * state.r) / state.u)
    a_r = math.atan((state.v - p.l_r * state.r) / state.u)
    return a_f, a_r


def forward_dynamics(state: VehicleState, F_x: float, delta_f: float,
                     p: VehicleParams) -> Tuple[float, float, float]:
    """
    Body-frame rates for the given inputs.

    Returns:
        (u_dot, v_dot, r_dot)
    """
    _check_finite(state.u, state.v, state.r, F_x, delta_f)

    if state.u <= p.u_min:
        r_kin = state.u * math.tan(delta_f) / p.wheelbase
        v_kin = r_kin * p.l_r
        return (F_x / p.m,
                (v_kin - state.v) / KINEMATIC_RELAXATION,
                (r_kin - state.r) / KINEMATIC_RELAXATION)

    a_f, a_r = _slip_terms(state, p)
    cf = p.C_f * p.mu_f
    cr = p.C_r * p.mu_r
    u_dot = state.v * state.r + F_x / p.m
    v_dot = -state.u * state.r + cf / p.m * delta_f - (cf * a_f + cr * a_r) / p.m
    r_dot = p.l_f * cf / p.I_z * delta_f - (p.l_f * cf * a_f - p.l_r * cr * a_r) / p.I_z
    return u_dot, v_dot, r_dot


def yaw_rate_bounds(state: VehicleState, delta_f: float, p: VehicleParams) -> Tuple[float, float]:
    """
    Yaw-rate interval keeping both slip angles inside [alpha_min, alpha_max].

    Front: alpha_f = atan((v + l_f r)/u) - delta_f; rear: alpha_r = atan((v - l_r r)/u).

    Returns:
        (r_min, r_max)
    """
    def tan_clamped(angle: float) -> float:
        return math.tan(max(-_TAN_LIMIT, min(_TAN_LIMIT, angle)))

    u, v = state.u, state.v
    front_lo = (u * tan_clamped(p.alpha_min + delta_f) - v) / p.l_f
    front_hi = (u * tan_clamped(p.alpha_max + delta_f) - v) / p.l_f
    rear_lo = (v - u * math.tan(p.alpha_max)) / p.l_r
    rear_hi = (v - u * math.tan(p.alpha_min)) / p.l_r
    return max(front_lo, rear_lo), min(front_hi, rear_hi)


def slip_angles(state: VehicleState, delta_f: float, p: VehicleParams) -> Tuple[float, float]:
    a_f, a_r = _slip_terms(state, p)
    return a_f - delta_f, a_r


def inverse_dynamics(state: VehicleState, u_dot: float, v_dot: float,
                     p: VehicleParams) -> Tuple[float, float]:
    """
    Inputs (F_x, delta_f) producing the desired body-frame accelerations.

    If the yaw rate is outside its slip-angle bounds and the resulting r_dot
    pushes it further out, r_dot is forced to zero and delta_f is re-solved
    from the yaw equation.
    """
    _check_finite(state.u, state.v, state.r, u_dot, v_dot)

    if state.u <= p.u_min:
        u_eff = max(state.u, p.u_min)
        return p.m * u_dot, math.atan(p.wheelbase * v_dot / (u_eff * u_eff))

    a_f, a_r = _slip_terms(state, p)
    cf = p.C_f * p.mu_f
    cr = p.C_r * p.mu_r

    F_x = p.m * (u_dot - state.v * state.r)
    delta_f = (p.m * (v_dot + state.u * state.r) + cf * a_f + cr * a_r) / cf
    r_dot = p.l_f * cf / p.I_z * delta_f - (p.l_f * cf * a_f - p.l_r * cr * a_r) / p.I_z

    r_min, r_max = yaw_rate_bounds(state, delta_f, p)
    if (state.r > r_max and r_dot > 0.0) or (state.r < r_min and r_dot < 0.0):
        delta_f = (p.l_f * cf * a_f - p.l_r * cr * a_r) / (p.l_f * cf)
        logger.debug(f"Yaw rate {state.r:.4f} outside [{r_min:.4f}, {r_max:.4f}], holding r")
    return F_x, delta_f


def saturate(F_x: float, delta_f: float, p: VehicleParams) -> Saturation:
    """Clamp inputs to actuator limits and flag each clamped channel."""
    force_sat = bool(abs(F_x) > p.F_max)
    steer_sat = bool(abs(delta_f) > p.delta_max)
    return Saturation(
        F_x=max(-p.F_max, min(p.F_max, F_x)),
        delta_f=max(-p.delta_max, min(p.delta_max, delta_f)),
        force_saturated=force_sat,
        steer_saturated=steer_sat,
    )


def integrate(state: VehicleState, derivatives: Tuple[float, float, float],
              dt: float = 0.1, substeps: int = 10) -> VehicleState:
    """
    Semi-implicit Euler with fixed rates: velocities first, then the pose
    using the updated velocities rotated by the updated heading.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    u_dot, v_dot, r_dot = derivatives
    h = dt / substeps
    x, y, psi, u, v, r = state.x, state.y, state.psi, state.u, state.v, state.r
    for _ in range(substeps):
        u += u_dot * h
        v += v_dot * h
        r += r_dot * h
        psi += r * h
        c, s = math.cos(psi), math.sin(psi)
        x += (u * c - v * s) * h
        y += (u * s + v * c) * h
    return VehicleState(x=x, y=y, psi=psi, u=u, v=v, r=r)


def step_plant(state: VehicleState, F_x: float, delta_f: float, p: VehicleParams,
               dt: float = 0.1, substeps: int = 10) -> VehicleState:
    """Advance the plant over dt, re-evaluating forward dynamics every substep.

    Braking never reverses the vehicle: u is floored at zero.
    """
    h = dt / substeps
    for _ in range(substeps):
        rates = forward_dynamics(state, F_x, delta_f, p)
        state = integrate(state, rates, h, substeps=1)
        if state.u < 0.0:
            state = replace(state, u=0.0, v=0.0, r=0.0)
    return state


def inertial_accels(state: VehicleState, rates: Tuple[float, float, float]) -> Tuple[float, float]:
    """Longitudinal and lateral acceleration of the body (m/s^2)."""
    u_dot, v_dot, _ = rates
    return u_dot - state.v * state.r, v_dot + state.u * state.r
