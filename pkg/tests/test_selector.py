import math

import numpy as np
import pytest

from source.fluid.domain import CellClass, DomainConfig, ObstaclePrediction, build_domain
from source.fluid.solver import LbmSolver, Stvf
from source.geometry.frenet import build_reference_path
from source.planner.sampler import ControlSequence, Trajectory
from source.planner.selector import (
    CostBreakdown,
    CostWeights,
    PlannerFault,
    select_best,
    shear_field,
    shear_stress,
    total_cost,
)
from source.vehicle.dynamics import VehicleState


def sample_config():
    return {
        'costs': {
            'c_1': 10.0,
            'c_21': 1.0,
            'c_22': 4.0,
            'c_31': 1.0e-7,
            'c_32': 10.0,
            'c_41': 1.0e-7,
            'c_42': 10.0,
        }
    }


WEIGHTS = CostWeights.from_config(sample_config())


def sheared_stvf(base=15.0, gradient=0.0, dims=(16, 8, 8), ds=4.0, dd=0.8, dt=0.8):
    """Longitudinal field speed base + gradient * d, no lateral motion."""
    d = -1.6 + (np.arange(dims[1]) + 0.5) * dd
    s_dot = base + gradient * d
    vectors = np.zeros((3,) + dims)
    vectors[0] = (s_dot * dt / ds)[None, :, None]
    vectors[2] = 1.0
    vectors /= np.linalg.norm(vectors, axis=0)
    return Stvf(vectors=vectors, solid_mask=np.zeros(dims, dtype=bool), s0=0.0, d_min=-1.6,
                ds=ds, dd=dd, dt=dt)


def one_step_candidate(accel=(1.0, 0.5), inputs=(1000.0, 0.1)):
    traj = Trajectory(
        states=[VehicleState(u=15.0), VehicleState(x=1.5, u=15.1)],
        frenet=[(20.0, 0.0, 15.0, 0.0), (21.5, 0.0, 15.1, 0.0)],
        accels=[accel],
    )
    return traj, ControlSequence(inputs=[inputs], flags=[(False, False)])


class TestCostWeights:
    """Weight validation."""

    def test_from_config(self):
        assert WEIGHTS.c_22 == 4.0
        assert WEIGHTS.c_31 == pytest.approx(1e-7)

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            CostWeights(c_1=-1.0)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            CostWeights(0, 0, 0, 0, 0, 0, 0)


class TestShearStress:
    """Lateral gradient of the field's longitudinal speed."""

    def test_uniform_field_has_no_shear(self):
        assert shear_stress(sheared_stvf(), 30.0, 0.5, 3.0) == pytest.approx(0.0, abs=1e-9)

    def test_linear_profile(self):
        stvf = sheared_stvf(gradient=2.0)
        assert shear_stress(stvf, 30.0, 0.5, 3.0) == pytest.approx(2.0, rel=1e-6)
        assert shear_stress(stvf, 30.0, -1.5, 3.0) == pytest.approx(2.0, rel=1e-6)

    @pytest.mark.slow
    def test_shear_peaks_next_to_parked_car(self):
        cfg = DomainConfig(s_e=96.0, d_e=6.4, t_p=6.4, n_s=48, n_d=16, n_t=16, s_behind=16.0,
                           obstacle_margin=0.0)
        path = build_reference_path([(-20.0, 0.0), (200.0, 0.0)])
        times = np.linspace(0.0, 6.4, 65)
        parked = ObstaclePrediction(times=times, x=np.full_like(times, 40.0),
                                    y=np.zeros_like(times), heading=np.zeros_like(times),
                                    name='OV1')
        domain = build_domain(path, VehicleState(u=15.0), [parked], [], cfg)
        solver = LbmSolver({'lbm': {'backend': 'numpy', 'viscosity': 1.0 / 6.0}})
        stvf, _, _ = solver.solve(domain, max_iters=300)

        h = shear_field(stvf)
        occupied = np.flatnonzero((domain.cell_class[:, 1:-1, :] == CellClass.SOLID).any(axis=(1, 2)))
        i = np.arange(cfg.n_s)
        gap = np.maximum(np.maximum(occupied.min() - i, i - occupied.max()), 0)
        fluid = domain.fluid_mask
        near = fluid & (gap <= 2)[:, None, None]
        far = fluid & (gap >= 10)[:, None, None]
        assert near.any() and far.any()
        assert h[near].mean() > h[far].mean()


class TestTotalCost:
    """Per-term accumulation."""

    def test_hand_computed_terms(self):
        traj, controls = one_step_candidate()
        cost = total_cost(traj, controls, sheared_stvf(), WEIGHTS, dt=0.1,
                          previous_input=(0.0, 0.0))
        assert cost.J1 == pytest.approx(0.0, abs=1e-12)
        assert cost.J2 == pytest.approx(1.0 + 4.0 * 0.25)
        assert cost.J3 == pytest.approx(0.1 + 0.1)
        assert cost.J4 == pytest.approx(10.0 + 10.0)
        assert cost.J == pytest.approx(22.2)
        assert cost.feasible

    def test_first_rate_zero_without_previous_input(self):
        traj, controls = one_step_candidate()
        cost = total_cost(traj, controls, sheared_stvf(), WEIGHTS, dt=0.1)
        assert cost.J4 == 0.0

    def test_shear_term_along_states(self):
        traj, controls = one_step_candidate(accel=(0.0, 0.0), inputs=(0.0, 0.0))
        cost = total_cost(traj, controls, sheared_stvf(gradient=1.0), WEIGHTS, dt=0.1)
        assert cost.J1 == pytest.approx(2 * 10.0 * 1.0, rel=1e-6)
        assert len(cost.shear) == 2

    def test_infeasible_trajectory_costs_infinity(self):
        traj, controls = one_step_candidate()
        traj.feasible = False
        cost = total_cost(traj, controls, sheared_stvf(), WEIGHTS)
        assert math.isinf(cost.J)
        assert not cost.feasible


class TestSelectBest:
    """Argmin over feasible candidates."""

    def test_cheapest_wins(self):
        costs = [CostBreakdown(3.0, 3.0, 0, 0, 0), CostBreakdown(1.0, 1.0, 0, 0, 0)]
        assert select_best(costs) == 1

    def test_tie_goes_to_lower_index(self):
        costs = [CostBreakdown(2.0, 2.0, 0, 0, 0), CostBreakdown(2.0, 2.0, 0, 0, 0)]
        assert select_best(costs) == 0

    def test_infeasible_skipped(self):
        costs = [CostBreakdown.infeasible(), CostBreakdown(5.0, 5.0, 0, 0, 0)]
        assert select_best(costs) == 1

    def test_nan_treated_as_infeasible(self):
        costs = [CostBreakdown(float('nan'), 0, 0, 0, 0), CostBreakdown(5.0, 5.0, 0, 0, 0)]
        assert select_best(costs) == 1

    def test_all_infeasible_is_fault(self):
        with pytest.raises(PlannerFault):
            select_best([CostBreakdown.infeasible()] * 3)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_best([])
