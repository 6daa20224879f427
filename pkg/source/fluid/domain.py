"""
Driving scene -> fluid boundary-value problem.

The domain is a box in (s, d, t): s along the route starting `s_behind` metres
behind the ego vehicle, d across the road starting at path offset `d_min`, and
t over the planning horizon. Cells are classified as FLUID, SOLID (road edges
and the space occupied by other vehicles), POROUS_SOLID (blocked cells of a
lane-marking sheet) or BOUNDARY (velocity-prescribed faces).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from source.geometry.frenet import (
    OutOfDomainError,
    ReferencePath,
    body_to_frenet_velocity,
    cart_to_frenet,
)
from source.vehicle.dynamics import VehicleState

logger = logging.getLogger(__name__)


class CellClass(IntEnum):
    FLUID = 0
    SOLID = 1
    POROUS_SOLID = 2
    BOUNDARY = 3


class DomainBuildError(ValueError):
    """The scene cannot be turned into a valid domain."""


@dataclass(frozen=True)
class DomainConfig:
    s_e: float = 256.0
    d_e: float = 6.4
    t_p: float = 6.4
    n_s: int = 128
    n_d: int = 64
    n_t: int = 64
    s_behind: float = 30.0
    nominal_speed: float = 15.0
    porous_resistance: float = 0.5
    d_min: float = -1.6
    max_speed: float = 40.0
    obstacle_margin: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.porous_resistance <= 1.0:
            raise ValueError(f"porous_resistance must be in [0, 1], got {self.porous_resistance}")
        if min(self.n_s, self.n_d, self.n_t) < 3:
            raise ValueError(f"Lattice needs at least 3 cells per axis, got {self.dims}")
        if min(self.s_e, self.d_e, self.t_p) <= 0:
            raise ValueError("Domain extents must be positive")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.n_s, self.n_d, self.n_t

    @property
    def ds(self) -> float:
        return self.s_e / self.n_s

    @property
    def dd(self) -> float:
        return self.d_e / self.n_d

    @property
    def dt(self) -> float:
        return self.t_p / self.n_t

    @classmethod
    def from_config(cls, config: dict, nominal_speed: Optional[float] = None,
                    seed: Optional[int] = None) -> "DomainConfig":
        dc = (config or {}).get('domain', {})
        n_s, n_d, n_t = dc.get('lattice', [128, 64, 64])
        return cls(
            s_e=dc.get('length', 256.0),
            d_e=dc.get('width', 6.4),
            t_p=dc.get('horizon', 6.4),
            n_s=int(n_s),
            n_d=int(n_d),
            n_t=int(n_t),
            s_behind=dc.get('behind', 30.0),
            nominal_speed=nominal_speed if nominal_speed is not None else dc.get('nominal_speed', 15.0),
            porous_resistance=dc.get('porous_resistance', 0.5),
            d_min=dc.get('lateral_offset', -1.6),
            max_speed=dc.get('max_speed', 40.0),
            obstacle_margin=dc.get('obstacle_margin', 0.5),
            seed=seed if seed is not None else (config or {}).get('simulation', {}).get('seed', 0),
        )


@dataclass(frozen=True, eq=False)
class ObstaclePrediction:
    """Predicted poses of one obstacle, sampled at `times` (s from now)."""
    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    length: float = 5.0
    width: float = 2.0
    name: str = ""

    def pose_at(self, t: float) -> Tuple[float, float, float]:
        return (float(np.interp(t, self.times, self.x)),
                float(np.interp(t, self.times, self.y)),
                float(np.interp(t, self.times, np.unwrap(self.heading))))


@dataclass(eq=False)
class BodyForceField:
    """Curvature body force, evaluated against the live lattice velocity.

    kappa holds the path curvature at each s-slice centre (1/m).
    """
    kappa: np.ndarray
    ds: float
    dd: float

    @property
    def is_zero(self) -> bool:
        return not np.any(self.kappa)

    @property
    def kappa_d_cells(self) -> np.ndarray:
        # lateral term in cells/iteration^2 per (cells/iteration)^2 of V_s
        return self.kappa * self.ds * self.ds / self.dd

    @property
    def kappa_s_cells(self) -> np.ndarray:
        return self.kappa * self.dd

    def evaluate(self, rho: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Force per cell in lattice units, shape like V."""
        shape = (-1,) + (1,) * (V.ndim - 2)
        kd = self.kappa_d_cells.reshape(shape)
        ks = self.kappa_s_cells.reshape(shape)
        force = np.zeros_like(V)
        force[0] = 2.0 * rho * ks * V[0] * V[1]
        force[1] = rho * kd * V[0] * V[0]
        return force


@dataclass(eq=False)
class FluidDomainSpec:
    config: DomainConfig
    cell_class: np.ndarray
    boundary_velocity: np.ndarray
    edge_mask: np.ndarray
    body_force: Optional[BodyForceField] = None
    s0: float = 0.0
    _cache: Dict = field(default_factory=dict, repr=False)

    @property
    def dims(self) -> Tuple[int, ...]:
        return self.cell_class.shape

    @property
    def solid_mask(self) -> np.ndarray:
        return (self.cell_class == CellClass.SOLID) | (self.cell_class == CellClass.POROUS_SOLID)

    @property
    def boundary_mask(self) -> np.ndarray:
        return self.cell_class == CellClass.BOUNDARY

    @property
    def fluid_mask(self) -> np.ndarray:
        return self.cell_class == CellClass.FLUID

    def s_centers(self) -> np.ndarray:
        return self.s0 + (np.arange(self.config.n_s) + 0.5) * self.config.ds

    def d_centers(self) -> np.ndarray:
        return self.config.d_min + (np.arange(self.config.n_d) + 0.5) * self.config.dd

    def t_centers(self) -> np.ndarray:
        return (np.arange(self.config.n_t) + 0.5) * self.config.dt


def boundary_vector_from_speed(s_dot: float, d_dot: float, cfg: DomainConfig) -> np.ndarray:
    """
    Unit (ds, dd, dt) direction in cell units for a Frenet velocity.

    Speeds are clamped to cfg.max_speed before conversion, so the time
    component is always strictly positive.
    """
    s_dot = max(-cfg.max_speed, min(cfg.max_speed, s_dot))
    d_dot = max(-cfg.max_speed, min(cfg.max_speed, d_dot))
    vec = np.array([s_dot * cfg.dt / cfg.ds, d_dot * cfg.dt / cfg.dd, 1.0])
    return vec / np.linalg.norm(vec)


def curvature_force(kappa: float, s_dot: float, d_dot: float, rho: float = 1.0) -> Tuple[float, float]:
    """Centrifugal (f_d) and Coriolis (f_s) accelerations: returns (f_s, f_d)."""
    return 2.0 * rho * kappa * s_dot * d_dot, rho * kappa * s_dot * s_dot


def body_force_field(path: ReferencePath, cfg: DomainConfig, s0: float = 0.0) -> BodyForceField:
    """Curvature force field over the domain window starting at path coordinate s0."""
    s_centers = s0 + (np.arange(cfg.n_s) + 0.5) * cfg.ds
    kappa = np.asarray(path.curvature_at(s_centers), dtype=float)
    return BodyForceField(kappa=kappa, ds=cfg.ds, dd=cfg.dd)


def _stratified_pick(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """k distinct indices in [0, n), one from each of k near-equal strata."""
    if k <= 0:
        return np.zeros(0, dtype=int)
    edges = np.linspace(0, n, k + 1).astype(int)
    widths = np.diff(edges)
    return edges[:-1] + (rng.random(k) * widths).astype(int)


def _rasterize_porous(cell_class: np.ndarray, lane_markings: Sequence[float],
                      cfg: DomainConfig, rng: np.random.Generator) -> int:
    # interior cells only: the s and t faces stay BOUNDARY
    blocked_total = 0
    n_interior = cfg.n_s - 2
    k_blocked = int(math.floor(cfg.porous_resistance * n_interior))
    for d_m in lane_markings:
        j = int(math.floor((d_m - cfg.d_min) / cfg.dd))
        if j < 1 or j > cfg.n_d - 2:
            logger.warning(f"Lane marking at d={d_m:.2f} m falls outside the domain band, skipped")
            continue
        for k in range(1, cfg.n_t - 1):
            picks = 1 + _stratified_pick(rng, n_interior, k_blocked)
            cell_class[picks, j, k] = CellClass.POROUS_SOLID
            blocked_total += len(picks)
    return blocked_total


def footprint_corners(x: float, y: float, heading: float, length: float,
                       width: float) -> np.ndarray:
    """Rectangle corners (4, 2), clockwise from front-left."""
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    return np.column_stack([x + local[:, 0] * c - local[:, 1] * s,
                            y + local[:, 0] * s + local[:, 1] * c])


def _rasterize_obstacle(cell_class: np.ndarray, pred: ObstaclePrediction,
                        path: ReferencePath, cfg: DomainConfig, s0: float) -> int:
    """Mark the inflated footprint of one obstacle SOLID, slice by slice."""
    length = pred.length + 2.0 * cfg.obstacle_margin
    width = pred.width + 2.0 * cfg.obstacle_margin
    edge_times = np.arange(cfg.n_t + 1) * cfg.dt

    # Frenet corners at every slice edge, NaN where the projection fails
    corners_sd = np.full((cfg.n_t + 1, 4, 2), np.nan)
    hint = None
    for n, t in enumerate(edge_times):
        x, y, heading = pred.pose_at(t)
        for c, (cx, cy) in enumerate(footprint_corners(x, y, heading, length, width)):
            try:
                fp = cart_to_frenet(path, (cx, cy), d_max=math.inf, s_hint=hint)
            except OutOfDomainError:
                continue
            corners_sd[n, c] = (fp.s, fp.d)
            hint = fp.s

    marked = 0
    for k in range(cfg.n_t):
        pts = corners_sd[k:k + 2].reshape(-1, 2)
        pts = pts[~np.isnan(pts[:, 0])]
        if len(pts) == 0:
            continue
        s_lo, s_hi = pts[:, 0].min() - s0, pts[:, 0].max() - s0
        d_lo, d_hi = pts[:, 1].min() - cfg.d_min, pts[:, 1].max() - cfg.d_min
        if s_hi < 0.0 or s_lo > cfg.s_e or d_hi < 0.0 or d_lo > cfg.d_e:
            continue
        i0 = max(int(math.floor(s_lo / cfg.ds)), 0)
        i1 = min(int(math.floor(s_hi / cfg.ds)), cfg.n_s - 1)
        j0 = max(int(math.floor(d_lo / cfg.dd)), 0)
        j1 = min(int(math.floor(d_hi / cfg.dd)), cfg.n_d - 1)
        block = cell_class[i0:i1 + 1, j0:j1 + 1, k]
        marked += int(np.count_nonzero(block != CellClass.SOLID))
        block[...] = CellClass.SOLID
    return marked


def ev_frenet_velocity(path: ReferencePath, ev: VehicleState, s: float) -> Tuple[float, float]:
    beta = path.heading_at(s) - ev.psi
    return body_to_frenet_velocity(beta, ev.u, ev.v)


def build_domain(
    path: ReferencePath,
    ev: VehicleState,
    predictions: Sequence[ObstaclePrediction],
    lane_markings: Sequence[float],
    cfg: DomainConfig,
    ev_s_hint: Optional[float] = None,
) -> FluidDomainSpec:
    """
    Build the cell classification and boundary vectors for one planning step.

    Args:
        path: EV route reference path
        ev: Current EV state
        predictions: Obstacle predictions covering [0, t_p]
        lane_markings: Lateral offsets (path d, m) of crossable markings
        cfg: Domain configuration

    Returns:
        FluidDomainSpec anchored `s_behind` metres behind the EV

    Raises:
        DomainBuildError: EV outside the band or a prediction shorter than t_p
    """
    try:
        ev_fp = cart_to_frenet(path, (ev.x, ev.y), d_max=math.inf, s_hint=ev_s_hint)
    except OutOfDomainError as e:
        raise DomainBuildError(f"EV outside route: {e}") from e
    if not cfg.d_min < ev_fp.d < cfg.d_min + cfg.d_e:
        raise DomainBuildError(
            f"EV lateral offset {ev_fp.d:.2f} m outside band [{cfg.d_min}, {cfg.d_min + cfg.d_e}]"
        )
    for pred in predictions:
        if pred.times[-1] < cfg.t_p - 1e-9:
            raise DomainBuildError(
                f"Prediction for '{pred.name}' ends at {pred.times[-1]:.2f} s, horizon is {cfg.t_p} s"
            )

    s0 = ev_fp.s - cfg.s_behind
    n_s, n_d, n_t = cfg.dims
    cell_class = np.full(cfg.dims, CellClass.FLUID, dtype=np.int8)
    edge_mask = np.zeros(cfg.dims, dtype=bool)
    edge_mask[:, 0, :] = True
    edge_mask[:, -1, :] = True

    cell_class[0, :, :] = CellClass.BOUNDARY
    cell_class[-1, :, :] = CellClass.BOUNDARY
    cell_class[:, :, 0] = CellClass.BOUNDARY
    cell_class[:, :, -1] = CellClass.BOUNDARY
    cell_class[edge_mask] = CellClass.SOLID

    s_dot, d_dot = ev_frenet_velocity(path, ev, ev_fp.s)
    ev_vec = boundary_vector_from_speed(s_dot, d_dot, cfg)
    nominal_vec = boundary_vector_from_speed(cfg.nominal_speed, 0.0, cfg)

    rng = np.random.default_rng(cfg.seed)
    porous = _rasterize_porous(cell_class, lane_markings, cfg, rng)
    occupied = sum(_rasterize_obstacle(cell_class, pred, path, cfg, s0) for pred in predictions)

    bv = np.zeros((3,) + cfg.dims)
    bv[:, 0, :, :] = nominal_vec[:, None, None]
    bv[:, -1, :, :] = nominal_vec[:, None, None]
    bv[:, :, :, -1] = nominal_vec[:, None, None]
    bv[:, :, :, 0] = ev_vec[:, None, None]
    bv[:, cell_class != CellClass.BOUNDARY] = 0.0

    forces = body_force_field(path, cfg, s0)
    logger.debug(
        f"Domain built at s0={s0:.1f} m: ev=({s_dot:.2f}, {d_dot:.2f}) m/s, "
        f"porous cells={porous}, occupied cells={occupied}, "
        f"max|kappa|={float(np.max(np.abs(forces.kappa))):.4f}"
    )
    return FluidDomainSpec(
        config=cfg,
        cell_class=cell_class,
        boundary_velocity=bv,
        edge_mask=edge_mask,
        body_force=None if forces.is_zero else forces,
        s0=s0,
    )
