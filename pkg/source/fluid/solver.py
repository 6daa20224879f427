"""
Lattice Boltzmann solver for the planning domain.

One iteration pulls populations from upstream neighbours (bounce-back at
solid and porous cells, specular reflection at road-edge walls when
`edge_condition` is free_slip), resets BOUNDARY cells to the equilibrium of
their prescribed velocity, then relaxes FLUID cells toward equilibrium with
the curvature force applied as a velocity shift.

Unit boundary vectors are scaled by `lattice_speed` to lattice velocities;
the converged field is normalised back to unit (ds, dd, dt) directions.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from source.fluid.domain import CellClass, FluidDomainSpec
from source.fluid.kernels import (
    BACKENDS,
    KIND_BOUNDARY,
    KIND_FLUID,
    KIND_SOLID,
    resolve_backend,
)
from source.fluid.lattice import VelocitySet, equilibrium, macroscopics, velocity_set_for

logger = logging.getLogger(__name__)

DEFAULT_VISCOSITY = 0.003
DEFAULT_LATTICE_SPEED = 0.1
DEFAULT_DIVERGENCE_SPEED = 0.3
EDGE_CONDITIONS = ('free_slip', 'bounce_back')


class SolverDivergenceError(RuntimeError):
    """Lattice velocity exceeded the stability limit."""

    def __init__(self, iteration: int, max_speed: float, limit: float):
        self.iteration = iteration
        self.max_speed = max_speed
        super().__init__(
            f"LBM diverged at iteration {iteration}: max |V|={max_speed:.4f} > {limit} lattice units"
        )


@dataclass
class LatticeState:
    f: np.ndarray
    rho: np.ndarray
    V: np.ndarray
    iteration: int = 0
    clamped: int = 0


@dataclass(eq=False)
class Stvf:
    """Unit spatiotemporal vectors (ds, dd, dt) per cell, shape (3, n_s, n_d, n_t)."""
    vectors: np.ndarray
    solid_mask: np.ndarray
    s0: float
    d_min: float
    ds: float
    dd: float
    dt: float
    max_speed: float = 40.0
    _cache: Dict = field(default_factory=dict, repr=False)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.vectors.shape[1:]

    def axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Cell-centre coordinates (path s, path d, t)."""
        n_s, n_d, n_t = self.dims
        return (self.s0 + (np.arange(n_s) + 0.5) * self.ds,
                self.d_min + (np.arange(n_d) + 0.5) * self.dd,
                (np.arange(n_t) + 0.5) * self.dt)

    def extent(self) -> Tuple[Tuple[float, float], Tuple[float, float], Tuple[float, float]]:
        n_s, n_d, n_t = self.dims
        return ((self.s0, self.s0 + n_s * self.ds),
                (self.d_min, self.d_min + n_d * self.dd),
                (0.0, n_t * self.dt))


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    residual_mps: float
    mlups: float
    elapsed_s: float
    clamped: int
    backend: str


@dataclass(eq=False)
class StreamPlan:
    """Precomputed gather table and per-cell metadata for one domain."""
    table: np.ndarray      # (Q, N) flat source index into the (Q*N) population array
    kind: np.ndarray       # (N,) int8 cell kind code
    bc_index: np.ndarray   # (N,) column into f_bc for boundary cells
    f_bc: np.ndarray       # (Q, n_boundary)
    s_index: np.ndarray    # (N,) s-slice of each cell


def relaxation_time(viscosity: float) -> float:
    """BGK relaxation time tau = 3 nu + 0.5 (lattice units)."""
    return 3.0 * viscosity + 0.5


def build_stream_plan(domain: FluidDomainSpec, vs: VelocitySet, lattice_speed: float,
                      edge_condition: str = 'free_slip') -> StreamPlan:
    key = ('plan', edge_condition, lattice_speed)
    if key in domain._cache:
        return domain._cache[key]
    if edge_condition not in EDGE_CONDITIONS:
        raise ValueError(f"edge_condition must be one of {EDGE_CONDITIONS}, got {edge_condition}")

    dims = domain.dims
    N = int(np.prod(dims))
    Q = vs.Q
    coords = np.indices(dims).reshape(len(dims), N)
    upper = np.array(dims)[:, None]
    solid = domain.solid_mask.reshape(-1)
    edge = domain.edge_mask.reshape(-1)
    own = np.arange(N)

    def source(offset: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        src = coords - offset[:, None]
        inside = np.all((src >= 0) & (src < upper), axis=0)
        flat = np.ravel_multi_index(tuple(np.clip(src, 0, upper - 1)), dims)
        return flat, inside

    table = np.empty((Q, N), dtype=np.int64)
    for i in range(Q):
        src_flat, inside = source(vs.e[i])
        blocked = ~inside | solid[src_flat]
        entry = i * N + src_flat
        entry[blocked] = vs.opposite[i] * N + own[blocked]
        if edge_condition == 'free_slip' and vs.e[i][1] != 0:
            slide = vs.e[i].copy()
            slide[1] = 0
            slide_flat, slide_inside = source(slide)
            specular = blocked & inside & edge[src_flat] & slide_inside & ~solid[slide_flat]
            entry[specular] = vs.mirror_d[i] * N + slide_flat[specular]
        entry[solid] = i * N + own[solid]
        table[i] = entry

    cls = domain.cell_class.reshape(-1)
    kind = np.full(N, KIND_FLUID, dtype=np.int8)
    kind[solid] = KIND_SOLID
    kind[cls == CellClass.BOUNDARY] = KIND_BOUNDARY

    bmask = kind == KIND_BOUNDARY
    bc_index = np.zeros(N, dtype=np.int64)
    bc_index[bmask] = np.arange(int(bmask.sum()))
    bv = domain.boundary_velocity.reshape(len(dims), N)[:, bmask] * lattice_speed
    f_bc = np.ascontiguousarray(equilibrium(np.ones(bv.shape[1]), bv, vs))

    plan = StreamPlan(table=table, kind=kind, bc_index=bc_index, f_bc=f_bc,
                      s_index=np.ascontiguousarray(coords[0]))
    domain._cache[key] = plan
    return plan


def init_lattice(domain: FluidDomainSpec, lattice_speed: float = DEFAULT_LATTICE_SPEED) -> LatticeState:
    """
    Equilibrium start at rho = 1.

    Interior velocities blend linearly along t between the bottom-face and
    top-face boundary vectors of the same (s, d) column; in 2-D they take the
    mean boundary velocity.
    """
    vs = velocity_set_for(len(domain.dims))
    bv = domain.boundary_velocity * lattice_speed
    bmask = domain.boundary_mask
    solid = domain.solid_mask

    if len(domain.dims) == 3:
        n_t = domain.dims[2]
        w = (np.arange(n_t) / (n_t - 1))[None, None, None, :]
        V = (1.0 - w) * bv[:, :, :, :1] + w * bv[:, :, :, -1:]
    else:
        mean = bv[:, bmask].mean(axis=1) if bmask.any() else np.zeros(bv.shape[0])
        V = np.broadcast_to(mean.reshape((-1,) + (1,) * len(domain.dims)), bv.shape).copy()
    V = np.where(bmask[None], bv, V)
    V[:, solid] = 0.0

    rho = np.where(solid, 0.0, 1.0)
    f = equilibrium(rho, V, vs)
    return LatticeState(f=np.ascontiguousarray(f), rho=rho, V=V)


def stream(state: LatticeState, domain: FluidDomainSpec, edge_condition: str = 'free_slip',
           lattice_speed: float = DEFAULT_LATTICE_SPEED) -> LatticeState:
    """Pull streaming with wall handling; BOUNDARY cells re-imposed afterwards."""
    vs = velocity_set_for(len(domain.dims))
    plan = build_stream_plan(domain, vs, lattice_speed, edge_condition)
    Q = vs.Q
    f = state.f.reshape(-1)[plan.table]
    f[:, plan.kind == KIND_SOLID] = 0.0
    bmask = plan.kind == KIND_BOUNDARY
    f[:, bmask] = plan.f_bc[:, plan.bc_index[bmask]]
    f = f.reshape((Q,) + domain.dims)
    rho, V = macroscopics(f, vs)
    return LatticeState(f=f, rho=rho, V=V, iteration=state.iteration, clamped=state.clamped)


def collide(state: LatticeState, domain: FluidDomainSpec, tau: float) -> LatticeState:
    """BGK relaxation of FLUID cells; rho and V recomputed afterwards."""
    if tau <= 0.5:
        raise ValueError(f"Relaxation time must exceed 0.5 for stability, got {tau}")
    vs = velocity_set_for(len(domain.dims))
    rho, V = macroscopics(state.f, vs)
    V_eq = V
    if domain.body_force is not None:
        V_eq = V + tau * domain.body_force.evaluate(rho, V) / np.where(rho > 0.0, rho, 1.0)
    feq = equilibrium(rho, V_eq, vs)
    fluid = domain.fluid_mask[None]
    f = np.where(fluid, state.f + (feq - state.f) / tau, state.f)
    negative = f < 0.0
    clamped = int(np.count_nonzero(negative))
    if clamped:
        f = np.where(negative, 0.0, f)
    rho, V = macroscopics(f, vs)
    return LatticeState(f=f, rho=rho, V=V, iteration=state.iteration + 1,
                        clamped=state.clamped + clamped)


def normalize_field(V: np.ndarray, solid: np.ndarray) -> np.ndarray:
    """
    Unit vectors per cell. The time component (last axis of a 3-D field) is
    clamped to be nonnegative first; stagnant cells become pure time advance
    (0, 0, 1) and solid cells hold zero.
    """
    V = np.array(V, dtype=float, copy=True)
    if V.shape[0] == 3:
        V[2] = np.maximum(V[2], 0.0)
    norm = np.sqrt(np.sum(V * V, axis=0))
    stagnant = norm < 1e-12
    out = V / np.where(stagnant, 1.0, norm)
    if V.shape[0] == 3:
        out[:, stagnant] = np.array([0.0, 0.0, 1.0])[:, None]
    out[:, solid] = 0.0
    return out


class LbmSolver:
    """
    Iterates the lattice to a steady state and produces the Stvf.

    Reads the `lbm` config section: viscosity, max_iters, tolerance_mps,
    lattice_speed, divergence_speed, backend (auto | numpy | numba) and
    edge_condition (free_slip | bounce_back).
    """

    def __init__(self, config: dict = None):
        self.config = config or {}
        lbm = self.config.get('lbm', {})
        self.viscosity = lbm.get('viscosity', DEFAULT_VISCOSITY)
        self.tau = relaxation_time(self.viscosity)
        self.max_iters = lbm.get('max_iters', 100)
        self.tolerance_mps = lbm.get('tolerance_mps', 0.01)
        self.lattice_speed = lbm.get('lattice_speed', DEFAULT_LATTICE_SPEED)
        self.divergence_speed = lbm.get('divergence_speed', DEFAULT_DIVERGENCE_SPEED)
        self.edge_condition = lbm.get('edge_condition', 'free_slip')
        self.backend = resolve_backend(lbm.get('backend', 'auto'))
        self.kernel = BACKENDS[self.backend]

    def velocity_scale(self, domain: FluidDomainSpec) -> float:
        """m/s per lattice velocity unit along s."""
        cfg = domain.config
        return (cfg.ds / cfg.dt) / self.lattice_speed

    def solve(self, domain: FluidDomainSpec, max_iters: Optional[int] = None,
              tol: Optional[float] = None,
              initial: Optional[LatticeState] = None) -> Tuple[Stvf, SolveReport, LatticeState]:
        """
        Iterate until the mean per-cell velocity change drops below tol (m/s)
        or max_iters is reached.

        Raises:
            SolverDivergenceError: any |V| above divergence_speed
        """
        max_iters = self.max_iters if max_iters is None else max_iters
        tol = self.tolerance_mps if tol is None else tol
        vs = velocity_set_for(len(domain.dims))
        plan = build_stream_plan(domain, vs, self.lattice_speed, self.edge_condition)
        dims = domain.dims
        N = int(np.prod(dims))
        Q, D = vs.Q, vs.D

        if initial is not None and initial.f.shape == (Q,) + dims:
            state = initial
        else:
            state = init_lattice(domain, self.lattice_speed)

        e = np.ascontiguousarray(vs.e, dtype=float)
        w = np.ascontiguousarray(vs.w, dtype=float)
        if domain.body_force is not None:
            kappa_d = np.ascontiguousarray(domain.body_force.kappa_d_cells, dtype=float)
            kappa_s = np.ascontiguousarray(domain.body_force.kappa_s_cells, dtype=float)
            use_force = True
        else:
            kappa_d = kappa_s = np.zeros(1)
            use_force = False

        f_a = np.ascontiguousarray(state.f.reshape(Q, N), dtype=float).copy()
        f_b = np.empty_like(f_a)
        rho = np.empty(N)
        V = np.empty((D, N))
        V_prev = state.V.reshape(D, N).copy()
        active = ~domain.solid_mask.reshape(-1)
        scale = self.velocity_scale(domain)

        clamped = 0
        residual = float('inf')
        converged = False
        iteration = 0
        start = time.perf_counter()
        for iteration in range(1, max_iters + 1):
            clamped += self.kernel(f_a, f_b, rho, V, plan.table, plan.kind, plan.bc_index,
                                   plan.f_bc, e, w, self.tau, kappa_d, kappa_s,
                                   plan.s_index, use_force)
            f_a, f_b = f_b, f_a

            speed = np.sqrt(np.sum(V * V, axis=0))
            vmax = float(speed.max()) if N else 0.0
            if not np.isfinite(vmax) or vmax > self.divergence_speed:
                raise SolverDivergenceError(iteration, vmax, self.divergence_speed)

            change = np.sqrt(np.sum((V - V_prev) ** 2, axis=0))
            residual = float(change[active].mean()) * scale if active.any() else 0.0
            V_prev[...] = V
            logger.debug(f"LBM iteration {iteration}: residual={residual:.5f} m/s, max|V|={vmax:.4f}")
            if residual < tol:
                converged = True
                break
        elapsed = time.perf_counter() - start

        if clamped:
            logger.warning(f"{clamped} negative populations clamped to zero during solve")
        mlups = N * iteration / elapsed / 1e6 if elapsed > 0 else 0.0
        report = SolveReport(iterations=iteration, converged=converged, residual_mps=residual,
                             mlups=mlups, elapsed_s=elapsed, clamped=clamped, backend=self.backend)
        logger.debug(
            f"LBM {'converged' if converged else 'stopped'} after {iteration} iterations "
            f"(residual {residual:.4f} m/s, {mlups:.1f} MLUPS, backend={self.backend})"
        )

        final = LatticeState(f=f_a.reshape((Q,) + dims), rho=rho.reshape(dims).copy(),
                             V=V.reshape((D,) + dims).copy(), iteration=iteration,
                             clamped=state.clamped + clamped)
        cfg = domain.config
        stvf = Stvf(vectors=normalize_field(final.V, domain.solid_mask),
                    solid_mask=domain.solid_mask.copy(), s0=domain.s0, d_min=cfg.d_min,
                    ds=cfg.ds, dd=cfg.dd, dt=cfg.dt, max_speed=cfg.max_speed)
        return stvf, report, final


def solve(domain: FluidDomainSpec, max_iters: int = 100, tol: float = 0.01,
          config: dict = None) -> Stvf:
    """Convenience wrapper returning only the Stvf."""
    stvf, _, _ = LbmSolver(config).solve(domain, max_iters=max_iters, tol=tol)
    return stvf
