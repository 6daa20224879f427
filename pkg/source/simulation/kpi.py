"""
Post-run performance indicators.

    K_s  mean inverse time-to-collision over OVs and steps (1/s, lower is safer)
    K_c  mean weighted absolute longitudinal/lateral acceleration (g)
    K_f  fraction of control samples that were not saturated
    |F|  mean absolute longitudinal force (N)
"""

import logging
import math
from typing import NamedTuple, Optional, Sequence

logger = logging.getLogger(__name__)

GRAVITY = 9.81
DEFAULT_SAFE_RADIUS = 2.5
TTC_FLOOR = 1e-4


class KinematicState(NamedTuple):
    """Planar position and velocity of one actor."""
    x: float
    y: float
    vx: float
    vy: float


def compute_ttc(ev: KinematicState, ov: KinematicState,
                safe_radius: float = DEFAULT_SAFE_RADIUS) -> Optional[float]:
    """
    Time until the centre distance shrinks to safe_radius under constant
    velocities, or None when the actors are not on a collision course.

    Actors already within safe_radius get TTC_FLOOR.
    """
    dx, dy = ov.x - ev.x, ov.y - ev.y
    dvx, dvy = ov.vx - ev.vx, ov.vy - ev.vy
    A = dvx * dvx + dvy * dvy
    B = 2.0 * (dvx * dx + dvy * dy)
    C = dx * dx + dy * dy - safe_radius * safe_radius
    if C <= 0.0:
        return TTC_FLOOR
    if A < 1e-12 or B >= 0.0:
        return None
    D = B * B - 4.0 * A * C
    if D < 0.0:
        return None
    return max((-B - math.sqrt(D)) / (2.0 * A), TTC_FLOOR)


def _records(log) -> Sequence:
    records = getattr(log, 'records', log)
    if not records:
        raise ValueError("KPIs need at least one logged step")
    return records


def kpi_safety(log, safe_radius: float = DEFAULT_SAFE_RADIUS) -> float:
    """K_s: inverse TTC summed over OVs and steps, divided by M * T."""
    records = _records(log)
    n_ov = max(len(r.obstacles) for r in records)
    if n_ov == 0:
        return 0.0
    total = 0.0
    for r in records:
        ev = KinematicState(r.ev['x'], r.ev['y'], r.ev_vx, r.ev_vy)
        for ov in r.obstacles:
            ttc = compute_ttc(ev, KinematicState(ov['x'], ov['y'], ov['vx'], ov['vy']), safe_radius)
            if ttc is not None:
                total += 1.0 / ttc
    return total / (n_ov * len(records))


def kpi_comfort(log, c_lon: float = 0.5, c_lat: float = 1.0) -> float:
    """K_c: mean of c_lon |a_lon| + c_lat |a_lat|, in g."""
    records = _records(log)
    total = sum(c_lon * abs(r.a_lon) + c_lat * abs(r.a_lat) for r in records)
    return total / len(records) / GRAVITY


def kpi_feasibility(log) -> float:
    """K_f: unsaturated samples over both input channels."""
    records = _records(log)
    free = sum((not r.force_saturated) + (not r.steer_saturated) for r in records)
    return free / (2.0 * len(records))


def kpi_effort(log) -> float:
    """Mean |F_x| in newtons."""
    records = _records(log)
    return sum(abs(r.F_x) for r in records) / len(records)


def kpi_progress(distance_travelled: float, intended_distance: float) -> float:
    """Distance covered along the route relative to the intended distance, capped at 1."""
    if intended_distance <= 0.0:
        return 1.0
    return min(max(distance_travelled, 0.0) / intended_distance, 1.0)


def compute_kpis(log, config: dict = None) -> dict:
    """All indicators for a run, using the `kpi` config section."""
    kc = (config or {}).get('kpi', {})
    kpis = {
        'K_s': kpi_safety(log, kc.get('safe_radius', DEFAULT_SAFE_RADIUS)),
        'K_c': kpi_comfort(log, kc.get('c_lon', 0.5), kc.get('c_lat', 1.0)),
        'K_f': kpi_feasibility(log),
        'mean_abs_F': kpi_effort(log),
        'progress': kpi_progress(log.distance_travelled, log.intended_distance),
    }
    logger.info(
        f"KPIs: K_s={kpis['K_s']:.4f} 1/s, K_c={kpis['K_c']:.4f} g, K_f={kpis['K_f']:.3f}, "
        f"|F|={kpis['mean_abs_F'] / 1000.0:.2f} kN, progress={kpis['progress']:.3f}"
    )
    return kpis
