import math

import numpy as np
import pytest

from source.geometry.frenet import (
    FrenetPose,
    OutOfDomainError,
    PathError,
    body_to_frenet_velocity,
    build_reference_path,
    cart_to_frenet,
    frenet_to_body_accel,
    frenet_to_cart,
)


def straight_path(length=100.0):
    return build_reference_path([(0.0, 0.0), (length, 0.0)], resample_step=0.5)


def arc_path(radius=50.0, sweep_deg=90.0):
    angles = np.linspace(0.0, math.radians(sweep_deg), 400)
    pts = np.column_stack([radius * np.sin(angles), radius * (1.0 - np.cos(angles))])
    return build_reference_path(pts, resample_step=0.5)


class TestBuildReferencePath:
    """Arc-length resampling and validation of route waypoints."""

    def test_straight_path_arc_length(self):
        path = straight_path()
        assert path.s[0] == 0.0
        assert path.total_length == pytest.approx(100.0)
        assert np.all(np.diff(path.s) > 0)
        assert np.allclose(path.theta, 0.0)
        assert np.allclose(path.kappa, 0.0)

    def test_arc_curvature_matches_radius(self):
        path = arc_path(radius=50.0)
        middle = len(path.s) // 2
        assert path.kappa[middle] == pytest.approx(0.02, rel=0.02)
        assert path.theta[-1] == pytest.approx(math.pi / 2, abs=0.01)

    def test_heading_is_continuous(self):
        path = arc_path(radius=20.0, sweep_deg=270.0)
        assert np.max(np.abs(np.diff(path.theta))) < math.pi

    def test_single_waypoint_rejected(self):
        with pytest.raises(PathError):
            build_reference_path([(0.0, 0.0)])

    def test_duplicate_waypoints_rejected(self):
        with pytest.raises(PathError, match="Duplicate"):
            build_reference_path([(0.0, 0.0), (0.0, 0.0), (10.0, 0.0)])

    def test_excess_curvature_rejected(self):
        with pytest.raises(PathError, match="curvature"):
            arc_path(radius=2.0)

    def test_nonpositive_resample_step_rejected(self):
        with pytest.raises(PathError):
            build_reference_path([(0.0, 0.0), (10.0, 0.0)], resample_step=0.0)


class TestCartToFrenet:
    """Projection of Cartesian points onto the path."""

    def test_point_left_of_straight_path(self):
        fp = cart_to_frenet(straight_path(), (10.0, 2.0, 0.0))
        assert fp.s == pytest.approx(10.0, abs=1e-9)
        assert fp.d == pytest.approx(2.0, abs=1e-9)

    def test_point_right_is_negative(self):
        fp = cart_to_frenet(straight_path(), (35.0, -1.5))
        assert fp.d == pytest.approx(-1.5, abs=1e-9)

    def test_point_beyond_end_raises(self):
        with pytest.raises(OutOfDomainError):
            cart_to_frenet(straight_path(), (120.0, 0.0))

    def test_point_before_start_raises(self):
        with pytest.raises(OutOfDomainError):
            cart_to_frenet(straight_path(), (-5.0, 0.0))

    def test_lateral_band_enforced(self):
        with pytest.raises(OutOfDomainError, match="band"):
            cart_to_frenet(straight_path(), (50.0, 25.0), d_max=20.0)

    def test_hint_gives_same_projection(self):
        path = arc_path()
        x, y = 30.0, 12.0
        assert cart_to_frenet(path, (x, y), s_hint=35.0).s == pytest.approx(
            cart_to_frenet(path, (x, y)).s, abs=1e-9)

    def test_frenet_to_cart_inverts_projection_on_arc(self):
        path = arc_path()
        fp = cart_to_frenet(path, (30.0, 12.0))
        x, y, _ = frenet_to_cart(path, fp)
        assert x == pytest.approx(30.0, abs=1e-6)
        assert y == pytest.approx(12.0, abs=1e-6)

    def test_frenet_to_cart_outside_range_raises(self):
        with pytest.raises(OutOfDomainError):
            frenet_to_cart(straight_path(), FrenetPose(s=150.0, d=0.0))


class TestFrameVelocities:
    """Body <-> Frenet rotation by beta = theta - psi."""

    def test_aligned_vehicle(self):
        assert body_to_frenet_velocity(0.0, 20.0, 0.5) == pytest.approx((20.0, 0.5))

    def test_vehicle_pointing_right_of_path_moves_right(self):
        s_dot, d_dot = body_to_frenet_velocity(math.pi / 2, 1.0, 0.0)
        assert s_dot == pytest.approx(0.0, abs=1e-12)
        assert d_dot == pytest.approx(-1.0)

    def test_accel_map_is_inverse_rotation(self):
        beta = 0.3
        s_ddot, d_ddot = body_to_frenet_velocity(beta, 1.2, -0.4)
        u_dot, v_dot = frenet_to_body_accel(beta, s_ddot, d_ddot)
        assert (u_dot, v_dot) == pytest.approx((1.2, -0.4))
