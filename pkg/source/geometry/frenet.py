"""
Route reference path and Cartesian <-> Frenet conversions.

The path is piecewise linear in position with centred finite-difference
heading and curvature. Lateral offset d is positive to the LEFT of the path
tangent, and curvature is positive for left-hand bends.

Usage:
    path = build_reference_path([(0, 0), (100, 0)], resample_step=0.5)
    fp = cart_to_frenet(path, (10.0, 2.0, 0.0))      # FrenetPose(s=10, d=2)
    x, y, heading = frenet_to_cart(path, fp)
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

DEFAULT_RESAMPLE_STEP = 0.5
DEFAULT_MAX_CURVATURE = 0.2
DEFAULT_D_MAX = 20.0
# Search half-width (m) around s_hint before falling back to a global search
HINT_WINDOW = 30.0
_EDGE_TOLERANCE = 1e-9


class PathError(ValueError):
    """Waypoints cannot form a valid reference path."""


class OutOfDomainError(ValueError):
    """Point lies outside the lateral band or beyond the path ends."""


@dataclass(frozen=True, eq=False)
class ReferencePath:
    """Arc-length parameterised route centreline.

    Arrays are parallel; theta is unwrapped so it is continuous along s.
    """
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    theta: np.ndarray
    kappa: np.ndarray

    @property
    def total_length(self) -> float:
        return float(self.s[-1])

    def position_at(self, s: float) -> Tuple[float, float]:
        return float(np.interp(s, self.s, self.x)), float(np.interp(s, self.s, self.y))

    def heading_at(self, s: float) -> float:
        return float(np.interp(s, self.s, self.theta))

    def curvature_at(self, s):
        """Curvature at s; clamps to the end values outside the path."""
        return np.interp(s, self.s, self.kappa)


@dataclass(frozen=True)
class FrenetPose:
    s: float
    d: float
    s_dot: Optional[float] = None
    d_dot: Optional[float] = None
    s_ddot: Optional[float] = None
    d_ddot: Optional[float] = None


def build_reference_path(
    waypoints: Sequence[Sequence[float]],
    resample_step: float = DEFAULT_RESAMPLE_STEP,
    max_curvature: float = DEFAULT_MAX_CURVATURE,
) -> ReferencePath:
    """
    Build a uniformly resampled reference path from route waypoints.

    Args:
        waypoints: Ordered (X, Y) points in metres, at least two
        resample_step: Arc-length spacing of the output samples (m)
        max_curvature: Reject paths whose |kappa| exceeds this (1/m)

    Returns:
        ReferencePath with s[0] = 0 and s[-1] = total length

    Raises:
        PathError: fewer than 2 waypoints, coincident neighbours, or
            curvature beyond max_curvature
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise PathError(f"Need at least 2 (X, Y) waypoints, got shape {pts.shape}")
    if resample_step <= 0:
        raise PathError(f"resample_step must be positive, got {resample_step}")

    seg = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    if np.any(seg <= 1e-9):
        idx = int(np.argmax(seg <= 1e-9))
        raise PathError(f"Duplicate consecutive waypoints at index {idx}: {pts[idx].tolist()}")

    chord = np.concatenate([[0.0], np.cumsum(seg)])
    length = float(chord[-1])
    n = max(int(math.ceil(length / resample_step)), 1)
    s = np.linspace(0.0, length, n + 1)
    x = np.interp(s, chord, pts[:, 0])
    y = np.interp(s, chord, pts[:, 1])

    if len(s) >= 3:
        dx = np.gradient(x, s)
        dy = np.gradient(y, s)
    else:
        dx = np.full_like(s, pts[-1, 0] - pts[0, 0])
        dy = np.full_like(s, pts[-1, 1] - pts[0, 1])
    theta = np.unwrap(np.arctan2(dy, dx))
    kappa = np.gradient(theta, s) if len(s) >= 3 else np.zeros_like(s)

    if not np.all(np.isfinite(kappa)):
        raise PathError("Non-finite curvature along path")
    peak = float(np.max(np.abs(kappa)))
    if peak > max_curvature:
        where = float(s[int(np.argmax(np.abs(kappa)))])
        raise PathError(
            f"Path curvature {peak:.4f} 1/m at s={where:.1f} m exceeds limit {max_curvature}"
        )

    logger.debug(f"Reference path built: length={length:.1f} m, samples={len(s)}")
    return ReferencePath(s=s, x=x, y=y, theta=theta, kappa=kappa)


def _tangent_residual(path: ReferencePath, px: float, py: float, s: float) -> float:
    x, y = path.position_at(s)
    th = path.heading_at(s)
    return (px - x) * math.cos(th) + (py - y) * math.sin(th)


def _nearest_sample(path: ReferencePath, px: float, py: float, s_hint: Optional[float]) -> int:
    if s_hint is not None:
        lo = int(np.searchsorted(path.s, s_hint - HINT_WINDOW, side="left"))
        hi = int(np.searchsorted(path.s, s_hint + HINT_WINDOW, side="right"))
        lo, hi = max(lo, 0), min(max(hi, lo + 1), len(path.s))
    else:
        lo, hi = 0, len(path.s)
    dist2 = (path.x[lo:hi] - px) ** 2 + (path.y[lo:hi] - py) ** 2
    # argmin returns the first minimum, so ties resolve to the smaller s
    return lo + int(np.argmin(dist2))


def cart_to_frenet(
    path: ReferencePath,
    pose: Sequence[float],
    d_max: float = DEFAULT_D_MAX,
    s_hint: Optional[float] = None,
) -> FrenetPose:
    """
    Project a Cartesian point onto the path.

    Args:
        path: Reference path
        pose: (X, Y) or (X, Y, heading); heading is not needed for (s, d)
        d_max: Maximum accepted |d| (m)
        s_hint: Optional approximate s to restrict the nearest-sample search

    Returns:
        FrenetPose with s and signed lateral offset d (positive left)

    Raises:
        OutOfDomainError: point beyond the path ends or farther than d_max
    """
    px, py = float(pose[0]), float(pose[1])
    n = len(path.s)
    k = _nearest_sample(path, px, py, s_hint)

    def g(s: float) -> float:
        return _tangent_residual(path, px, py, s)

    lo, hi = max(k - 1, 0), min(k + 1, n - 1)
    g_lo, g_hi = g(path.s[lo]), g(path.s[hi])
    for _ in range(n):
        if g_lo < 0.0 and lo > 0:
            hi, g_hi = lo, g_lo
            lo -= 1
            g_lo = g(path.s[lo])
        elif g_hi > 0.0 and hi < n - 1:
            lo, g_lo = hi, g_hi
            hi += 1
            g_hi = g(path.s[hi])
        else:
            break

    if g_lo < 0.0:
        if g_lo < -_EDGE_TOLERANCE:
            raise OutOfDomainError(f"Point ({px:.2f}, {py:.2f}) lies before the path start")
        s = float(path.s[lo])
    elif g_hi > 0.0:
        if g_hi > _EDGE_TOLERANCE:
            raise OutOfDomainError(f"Point ({px:.2f}, {py:.2f}) lies beyond the path end")
        s = float(path.s[hi])
    elif g_lo == 0.0:
        s = float(path.s[lo])
    elif g_hi == 0.0:
        s = float(path.s[hi])
    else:
        s = float(brentq(g, path.s[lo], path.s[hi], xtol=1e-12, rtol=1e-14))

    x, y = path.position_at(s)
    th = path.heading_at(s)
    d = -(px - x) * math.sin(th) + (py - y) * math.cos(th)
    if abs(d) > d_max:
        raise OutOfDomainError(f"Lateral offset {d:.2f} m exceeds band {d_max} m")
    return FrenetPose(s=s, d=d)


def frenet_to_cart(path: ReferencePath, fp: FrenetPose) -> Tuple[float, float, float]:
    """
    Map (s, d) back to Cartesian coordinates.

    Returns:
        (X, Y, heading) where heading is the path heading at s
    """
    if fp.s < -_EDGE_TOLERANCE or fp.s > path.total_length + _EDGE_TOLERANCE:
        raise OutOfDomainError(f"s={fp.s:.3f} outside path range [0, {path.total_length:.3f}]")
    x, y = path.position_at(fp.s)
    th = path.heading_at(fp.s)
    return x - fp.d * math.sin(th), y + fp.d * math.cos(th), th


def body_to_frenet_velocity(beta: float, u: float, v: float) -> Tuple[float, float]:
    """Body-frame (u, v) to (s_dot, d_dot) with beta = theta(s) - psi."""
    cb, sb = math.cos(beta), math.sin(beta)
    return u * cb + v * sb, -u * sb + v * cb


def frenet_to_body_accel(beta: float, s_ddot: float, d_ddot: float) -> Tuple[float, float]:
    """(s_ddot, d_ddot) to body-frame (u_dot, v_dot) with beta = theta(s) - psi."""
    cb, sb = math.cos(beta), math.sin(beta)
    return s_ddot * cb - d_ddot * sb, s_ddot * sb + d_ddot * cb
