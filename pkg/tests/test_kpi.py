from types import SimpleNamespace

import pytest

from source.simulation.kpi import (
    GRAVITY,
    TTC_FLOOR,
    KinematicState,
    compute_kpis,
    compute_ttc,
    kpi_comfort,
    kpi_effort,
    kpi_feasibility,
    kpi_progress,
    kpi_safety,
)


def record(x=0.0, vx=10.0, obstacles=(), a_lon=0.0, a_lat=0.0, F_x=0.0,
           force_saturated=False, steer_saturated=False):
    return SimpleNamespace(
        ev={'x': x, 'y': 0.0}, ev_vx=vx, ev_vy=0.0, obstacles=list(obstacles),
        a_lon=a_lon, a_lat=a_lat, F_x=F_x,
        force_saturated=force_saturated, steer_saturated=steer_saturated,
    )


def parked(x, y=0.0):
    return {'name': 'OV1', 'x': x, 'y': y, 'vx': 0.0, 'vy': 0.0}


class TestTimeToCollision:
    """Constant-velocity closest approach."""

    def test_head_on_approach(self):
        ttc = compute_ttc(KinematicState(0.0, 0.0, 10.0, 0.0), KinematicState(50.0, 0.0, 0.0, 0.0),
                          safe_radius=2.0)
        assert ttc == pytest.approx(4.8)

    def test_diverging_has_no_ttc(self):
        assert compute_ttc(KinematicState(0.0, 0.0, -10.0, 0.0),
                           KinematicState(50.0, 0.0, 0.0, 0.0)) is None

    def test_same_velocity_has_no_ttc(self):
        assert compute_ttc(KinematicState(0.0, 0.0, 10.0, 0.0),
                           KinematicState(20.0, 0.0, 10.0, 0.0)) is None

    def test_passing_wide_has_no_ttc(self):
        assert compute_ttc(KinematicState(0.0, 0.0, 10.0, 0.0),
                           KinematicState(50.0, 10.0, 0.0, 0.0)) is None

    def test_inside_radius_floored(self):
        assert compute_ttc(KinematicState(0.0, 0.0, 0.0, 0.0),
                           KinematicState(1.0, 0.0, 0.0, 0.0)) == TTC_FLOOR


class TestIndicators:
    """KPI aggregation over logged steps."""

    def test_safety_averages_over_obstacles_and_steps(self):
        records = [record(obstacles=[parked(50.0, 0.0)]), record(obstacles=[parked(50.0, 10.0)])]
        assert kpi_safety(records, safe_radius=2.0) == pytest.approx((1.0 / 4.8) / 2.0)

    def test_safety_without_obstacles(self):
        assert kpi_safety([record(), record()]) == 0.0

    def test_comfort_in_g(self):
        records = [record(a_lon=1.0, a_lat=2.0), record(a_lon=-1.0, a_lat=-2.0)]
        assert kpi_comfort(records) == pytest.approx((0.5 + 2.0) / GRAVITY)

    def test_feasibility_counts_both_channels(self):
        records = [record(force_saturated=True), record()]
        assert kpi_feasibility(records) == pytest.approx(0.75)

    def test_effort(self):
        assert kpi_effort([record(F_x=1000.0), record(F_x=-3000.0)]) == pytest.approx(2000.0)

    def test_progress_capped(self):
        assert kpi_progress(250.0, 200.0) == 1.0
        assert kpi_progress(50.0, 200.0) == pytest.approx(0.25)
        assert kpi_progress(-5.0, 200.0) == 0.0
        assert kpi_progress(10.0, 0.0) == 1.0

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            kpi_comfort([])

    def test_compute_kpis_uses_config(self):
        log = SimpleNamespace(records=[record(obstacles=[parked(50.0)], a_lon=2.0, F_x=500.0)],
                              distance_travelled=50.0, intended_distance=100.0)
        kpis = compute_kpis(log, {'kpi': {'safe_radius': 2.0, 'c_lon': 1.0, 'c_lat': 0.0}})
        assert kpis['K_s'] == pytest.approx(1.0 / 4.8)
        assert kpis['K_c'] == pytest.approx(2.0 / GRAVITY)
        assert kpis['K_f'] == 1.0
        assert kpis['mean_abs_F'] == pytest.approx(500.0)
        assert kpis['progress'] == pytest.approx(0.5)
