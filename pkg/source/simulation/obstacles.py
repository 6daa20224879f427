"""
Scripted obstacle vehicles.

Each OV follows constant-acceleration kinematics in its own route frame:
s(t) = v0 t + a_lon t^2 / 2 with the speed floored at zero, and a lateral
offset d(t) = a_lat t^2 / 2. Past the end of a route the OV continues in a
straight line. Predictions are exact continuations of the same motion.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from source.fluid.domain import ObstaclePrediction
from source.geometry.frenet import ReferencePath, build_reference_path
from source.simulation.scenario import ActorSpec, ScenarioSpec, route_waypoints

logger = logging.getLogger(__name__)

# OV routes are not planned over, so tight junction turns are allowed
OV_MAX_CURVATURE = 1.0


class ObstacleState(NamedTuple):
    name: str
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    length: float
    width: float

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)


@dataclass(eq=False)
class ObstacleTrack:
    actor: ActorSpec
    path: Optional[ReferencePath] = None

    @classmethod
    def from_actor(cls, actor: ActorSpec) -> "ObstacleTrack":
        path = None
        if actor.route is not None:
            path = build_reference_path(route_waypoints(actor), max_curvature=OV_MAX_CURVATURE)
        return cls(actor=actor, path=path)

    def longitudinal(self, t: float) -> Tuple[float, float]:
        """Distance travelled and speed at time t, never reversing."""
        v0, a = self.actor.travel_speed, self.actor.accel_lon
        if a < 0.0:
            t_stop = v0 / -a
            if t >= t_stop:
                return v0 * t_stop / 2.0, 0.0
        return v0 * t + 0.5 * a * t * t, max(v0 + a * t, 0.0)

    def _frame(self, s: float) -> Tuple[float, float, float]:
        if self.path is None:
            heading = self.actor.travel_heading
            return (self.actor.position[0] + s * math.cos(heading),
                    self.actor.position[1] + s * math.sin(heading), heading)
        length = self.path.total_length
        if s <= length:
            x, y = self.path.position_at(s)
            return x, y, self.path.heading_at(s)
        x, y = self.path.position_at(length)
        heading = self.path.heading_at(length)
        extra = s - length
        return x + extra * math.cos(heading), y + extra * math.sin(heading), heading

    def state_at(self, t: float) -> ObstacleState:
        s, s_dot = self.longitudinal(t)
        d = 0.5 * self.actor.accel_lat * t * t
        d_dot = self.actor.accel_lat * t
        x, y, theta = self._frame(s)
        c, sn = math.cos(theta), math.sin(theta)
        heading = theta + math.atan2(d_dot, s_dot) if (s_dot > 0.0 or d_dot != 0.0) else theta
        return ObstacleState(
            name=self.actor.name,
            x=x - d * sn,
            y=y + d * c,
            heading=heading,
            vx=s_dot * c - d_dot * sn,
            vy=s_dot * sn + d_dot * c,
            length=self.actor.length,
            width=self.actor.width,
        )


class ObstacleTraffic:
    """All obstacle vehicles of one scenario."""

    def __init__(self, spec: ScenarioSpec):
        self.tracks = [ObstacleTrack.from_actor(ov) for ov in spec.obstacles]
        logger.debug(f"Obstacle traffic for {spec.scenario_id}: "
                     f"{', '.join(t.actor.name for t in self.tracks) or 'none'}")

    def __len__(self) -> int:
        return len(self.tracks)

    def states_at(self, t: float) -> List[ObstacleState]:
        return [track.state_at(t) for track in self.tracks]

    def predictions(self, t: float, horizon: float, dt: float) -> List[ObstaclePrediction]:
        """Exact future poses over [t, t + horizon], times relative to t."""
        n = int(round(horizon / dt))
        times = np.arange(n + 1) * dt
        preds = []
        for track in self.tracks:
            states = [track.state_at(t + tau) for tau in times]
            preds.append(ObstaclePrediction(
                times=times,
                x=np.array([st.x for st in states]),
                y=np.array([st.y for st in states]),
                heading=np.array([st.heading for st in states]),
                length=track.actor.length,
                width=track.actor.width,
                name=track.actor.name,
            ))
        return preds


def step_obstacles(spec: ScenarioSpec, t: float, horizon: float = 6.4,
                   dt: float = 0.1) -> Tuple[List[ObstacleState], List[ObstaclePrediction]]:
    """OV states at t and their predictions over [t, t + horizon]."""
    traffic = ObstacleTraffic(spec)
    return traffic.states_at(t), traffic.predictions(t, horizon, dt)

