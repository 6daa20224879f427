import numpy as np
import pytest

from source.fluid.solver import Stvf
from source.geometry.frenet import build_reference_path
from source.planner.sampler import (
    PerturbationSchedule,
    RateFilter,
    StreamlineSampler,
    frenet_accels,
    interpolate_field,
    sample_trajectories,
)
from source.vehicle.dynamics import VehicleParams, VehicleState


def sample_config():
    return {
        'sampler': {
            'dt': 0.1,
            'steps': 64,
            'substeps': 10,
            'candidates': 15,
            'centripetal_factor': 1.0,
            'savgol_window': 5,
            'savgol_order': 2,
        }
    }


PATH = build_reference_path([(-20.0, 0.0), (300.0, 0.0)])
PARAMS = VehicleParams.from_config({})


def uniform_stvf(speed=15.0, s0=0.0, dims=(64, 8, 8), ds=4.0, dd=0.8, dt=0.8):
    vec = np.array([speed * dt / ds, 0.0, 1.0])
    vec /= np.linalg.norm(vec)
    vectors = np.broadcast_to(vec.reshape(3, 1, 1, 1), (3,) + dims).copy()
    return Stvf(vectors=vectors, solid_mask=np.zeros(dims, dtype=bool), s0=s0, d_min=-1.6,
                ds=ds, dd=dd, dt=dt)


class TestPerturbationSchedule:
    """Identity-first (gamma, eta) grid."""

    def test_default_grid(self):
        schedule = PerturbationSchedule.grid()
        assert len(schedule) == 15
        assert schedule.pairs[0] == (1.0, 1.0)
        assert len(set(schedule.pairs)) == 15

    def test_truncated(self):
        assert len(PerturbationSchedule.grid(n=4)) == 4

    def test_non_identity_first_rejected(self):
        with pytest.raises(ValueError):
            PerturbationSchedule(pairs=((1.1, 1.0),))

    def test_from_config(self):
        config = {'sampler': {'gammas': [1.0, 1.2], 'etas': [1.0], 'candidates': 2}}
        assert PerturbationSchedule.from_config(config).pairs == ((1.0, 1.0), (1.2, 1.0))


class TestInterpolateField:
    """Field lookup in physical units."""

    def test_uniform_field_speed(self):
        sample = interpolate_field(uniform_stvf(15.0), 50.0, 0.0, 2.0)
        assert sample.s_dot == pytest.approx(15.0)
        assert sample.d_dot == pytest.approx(0.0, abs=1e-12)
        assert not sample.clamped

    def test_outside_query_clamped(self):
        sample = interpolate_field(uniform_stvf(15.0), 500.0, 0.0, 2.0)
        assert sample.clamped
        assert sample.s_dot == pytest.approx(15.0)

    def test_solid_neighbourhood_gives_zero(self):
        stvf = uniform_stvf(15.0)
        stvf.vectors[...] = 0.0
        sample = interpolate_field(stvf, 50.0, 0.0, 2.0)
        assert (sample.s_dot, sample.d_dot) == (0.0, 0.0)

    def test_speed_capped(self):
        stvf = uniform_stvf(15.0)
        stvf.vectors[...] = np.array([1.0, 0.0, 1e-3]).reshape(3, 1, 1, 1)
        assert interpolate_field(stvf, 50.0, 0.0, 2.0).s_dot == pytest.approx(stvf.max_speed)


class TestRateFilter:
    """Causal Savitzky-Golay smoothing."""

    def test_constant_passes_through(self):
        smooth = RateFilter(5, 2)
        assert [smooth(3.0) for _ in range(7)] == pytest.approx([3.0] * 7)

    def test_ramp_reproduced_once_window_fills(self):
        smooth = RateFilter(5, 2)
        out = [smooth(float(k)) for k in range(10)]
        assert out[-1] == pytest.approx(9.0)

    def test_short_window_rejected(self):
        with pytest.raises(ValueError):
            RateFilter(2, 2)


class TestFrenetAccels:
    """Finite-difference rates plus curvature terms."""

    def test_straight_road(self):
        assert frenet_accels(10.0, 0.0, 11.0, 0.5, 0.0, 0.1) == pytest.approx((10.0, 5.0))

    def test_centripetal_term(self):
        _, d_ddot = frenet_accels(20.0, 0.0, 20.0, 0.0, 0.02, 0.1)
        assert d_ddot == pytest.approx(8.0)

    def test_doubled_centripetal_factor(self):
        _, d_ddot = frenet_accels(20.0, 0.0, 20.0, 0.0, 0.02, 0.1, centripetal_factor=2.0)
        assert d_ddot == pytest.approx(16.0)

    def test_nonpositive_dt_rejected(self):
        with pytest.raises(ValueError):
            frenet_accels(1.0, 0.0, 1.0, 0.0, 0.0, 0.0)


class TestRollout:
    """Candidate roll-outs through a uniform field."""

    def test_streamline_at_field_speed_cruises(self):
        sampler = StreamlineSampler(PATH, PARAMS, sample_config())
        traj, controls = sampler.rollout(VehicleState(x=0.0, y=0.0, u=15.0), uniform_stvf(15.0))
        assert traj.feasible
        assert len(traj) == 65
        assert len(controls) == 64
        assert max(abs(F) for F, _ in controls.inputs) < 1e-6
        s_end, d_end, _, _ = traj.frenet[-1]
        assert s_end == pytest.approx(20.0 + 15.0 * 6.4, abs=1e-6)
        assert d_end == pytest.approx(0.0, abs=1e-9)

    def test_faster_candidate_accelerates(self):
        sampler = StreamlineSampler(PATH, PARAMS, sample_config())
        _, controls = sampler.rollout(VehicleState(u=15.0), uniform_stvf(15.0), gamma=1.15)
        assert controls.inputs[0][0] > 0.0

    def test_start_outside_field_infeasible(self):
        sampler = StreamlineSampler(PATH, PARAMS, sample_config())
        traj, _ = sampler.rollout(VehicleState(u=15.0), uniform_stvf(15.0, s0=100.0))
        assert not traj.feasible
        assert 'band' in traj.reason

    def test_one_result_per_pair(self):
        results = sample_trajectories(VehicleState(u=15.0), uniform_stvf(15.0), 4, 0.1, PATH,
                                      PARAMS, config=sample_config())
        assert len(results) == 4
        assert all(traj.feasible for traj, _ in results)

    def test_schedule_too_short(self):
        with pytest.raises(ValueError):
            sample_trajectories(VehicleState(u=15.0), uniform_stvf(15.0), 4, 0.1, PATH, PARAMS,
                                schedule=PerturbationSchedule.grid(n=2))
