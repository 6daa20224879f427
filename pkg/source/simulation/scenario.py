"""
Scenario files: layout, actors and routes for one closed-loop run.

A scenario is a YAML document:

    id: a1
    layout: a                  # a | b | c | d
    nominal_speed: 15.0
    duration: 20.0
    goal_distance: 250.0       # optional
    lane_markings: [1.6]       # lateral offsets on the EV route (m, left positive)
    ego:
      speed: 15.0
      heading: 0.0             # degrees, global frame
      route:
        approach: 40.0         # metres of straight road behind the origin
        segments:
          - straight: 400.0
          - arc: {radius: 15.0, angle: -30.0}   # angle in degrees, left positive
    obstacles:
      - name: OV1
        position: [40.0, 0.0]
        speed: 0.0
        heading: 0.0
        accel_lon: 0.0
        accel_lat: 0.0

The EV starts at the origin. A negative speed drives the actor opposite to
its listed heading. Routes may be given as `segments` or raw `waypoints`;
obstacles without a route drive straight along their heading.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from source.geometry.frenet import ReferencePath, build_reference_path
from source.vehicle.dynamics import VehicleState

logger = logging.getLogger(__name__)

LAYOUTS = {
    'a': 'straight bidirectional road',
    'b': 'highway merge',
    'c': 'T-junction',
    'd': 'four-arm intersection',
}

DEFAULT_APPROACH = 40.0
DEFAULT_ROUTE_LENGTH = 500.0
ARC_PIECE = 0.1


class ScenarioParseError(ValueError):
    """Invalid scenario file; carries the offending field and line."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        what = f"{field}: " if field else ""
        super().__init__(f"{where}{what}{message}")


@dataclass(frozen=True)
class RouteSpec:
    """Route geometry; segments are ('straight', length) or ('arc', radius, angle_deg)."""
    segments: Tuple[Tuple, ...] = ()
    waypoints: Tuple[Tuple[float, float], ...] = ()
    approach: float = 0.0


@dataclass(frozen=True)
class ActorSpec:
    name: str
    position: Tuple[float, float] = (0.0, 0.0)
    speed: float = 0.0
    heading: float = 0.0
    accel_lon: float = 0.0
    accel_lat: float = 0.0
    length: float = 5.0
    width: float = 2.0
    route: Optional[RouteSpec] = None

    @property
    def travel_heading(self) -> float:
        """Heading of travel in radians; negative speeds turn the actor around."""
        heading = math.radians(self.heading)
        return heading + math.pi if self.speed < 0 else heading

    @property
    def travel_speed(self) -> float:
        return abs(self.speed)


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    layout: str
    nominal_speed: float
    duration: float
    ego: ActorSpec
    obstacles: Tuple[ActorSpec, ...] = ()
    lane_markings: Tuple[float, ...] = ()
    goal_distance: Optional[float] = None
    description: str = ""
    source: str = field(default="", compare=False)

    def ev_path(self, resample_step: float = 0.5, max_curvature: float = 0.2) -> ReferencePath:
        return build_reference_path(route_waypoints(self.ego, approach_default=DEFAULT_APPROACH),
                                    resample_step, max_curvature)

    def initial_ev_state(self) -> VehicleState:
        return VehicleState(x=self.ego.position[0], y=self.ego.position[1],
                            psi=self.ego.travel_heading, u=self.ego.travel_speed)


def expand_segments(start: Sequence[float], heading: float, segments: Sequence[Tuple],
                    step: float = 0.5) -> np.ndarray:
    """
    Waypoints for a chain of straight and circular-arc segments.

    Arcs are split into chords no longer than ARC_PIECE so the resampled
    path keeps a smooth curvature profile. The start point is included.
    """
    x, y = float(start[0]), float(start[1])
    theta = heading
    points = [(x, y)]
    for seg in segments:
        if seg[0] == 'straight':
            length = float(seg[1])
            n = max(int(math.ceil(length / step)), 1)
            for _ in range(n):
                x += length / n * math.cos(theta)
                y += length / n * math.sin(theta)
                points.append((x, y))
        elif seg[0] == 'arc':
            radius, angle = float(seg[1]), math.radians(float(seg[2]))
            n = max(int(math.ceil(abs(angle) * radius / ARC_PIECE)), 1)
            dtheta = angle / n
            chord = 2.0 * radius * math.sin(abs(dtheta) / 2.0)
            for _ in range(n):
                mid = theta + dtheta / 2.0
                x += chord * math.cos(mid)
                y += chord * math.sin(mid)
                theta += dtheta
                points.append((x, y))
        else:
            raise ValueError(f"Unknown route segment type: {seg[0]}")
    return np.array(points)


def route_waypoints(actor: ActorSpec, approach_default: float = 0.0) -> np.ndarray:
    """Route polyline of an actor, beginning `approach` metres behind its start."""
    route = actor.route
    heading = actor.travel_heading
    approach = route.approach if route is not None else approach_default
    x0 = actor.position[0] - approach * math.cos(heading)
    y0 = actor.position[1] - approach * math.sin(heading)

    if route is not None and route.waypoints:
        pts = [tuple(actor.position)] + [tuple(p) for p in route.waypoints]
        if math.dist(pts[0], pts[1]) < 1e-9:
            pts = pts[1:]
        pts = np.array(pts, dtype=float)
        if approach > 0:
            pts = np.vstack([[x0, y0], pts])
        return pts

    segments = list(route.segments) if route is not None and route.segments else [
        ('straight', DEFAULT_ROUTE_LENGTH)]
    if approach > 0:
        segments.insert(0, ('straight', approach))
    return expand_segments((x0, y0), heading, segments)


# YAML node helpers: every error names the field path and source line

SCENARIO_KEYS = ('id', 'layout', 'description', 'nominal_speed', 'duration', 'goal_distance',
                 'lane_markings', 'ego', 'obstacles')
ACTOR_KEYS = ('name', 'position', 'speed', 'heading', 'accel_lon', 'accel_lat', 'length',
              'width', 'route')
ROUTE_KEYS = ('approach', 'segments', 'waypoints')


def _line(node: yaml.Node) -> int:
    return node.start_mark.line + 1


def _mapping(node: yaml.Node, where: str, allowed: Sequence[str],
             required: Sequence[str] = ()) -> Dict[str, yaml.Node]:
    if not isinstance(node, yaml.MappingNode):
        raise ScenarioParseError("expected a mapping", where, _line(node))
    items = {}
    for key_node, value_node in node.value:
        key = key_node.value
        path = f"{where}.{key}" if where else key
        if key not in allowed:
            raise ScenarioParseError(f"unknown key (allowed: {', '.join(allowed)})", path,
                                     _line(key_node))
        if key in items:
            raise ScenarioParseError("duplicate key", path, _line(key_node))
        items[key] = value_node
    for key in required:
        if key not in items:
            raise ScenarioParseError("missing required field", f"{where}.{key}" if where else key,
                                     _line(node))
    return items


def _number(node: yaml.Node, where: str) -> float:
    if not isinstance(node, yaml.ScalarNode) or node.tag.endswith((':bool', ':null')):
        raise ScenarioParseError("expected a number", where, _line(node))
    try:
        value = float(node.value)
    except ValueError:
        raise ScenarioParseError(f"malformed number '{node.value}'", where, _line(node)) from None
    if not math.isfinite(value):
        raise ScenarioParseError(f"non-finite number '{node.value}'", where, _line(node))
    return value


def _string(node: yaml.Node, where: str) -> str:
    if not isinstance(node, yaml.ScalarNode):
        raise ScenarioParseError("expected a string", where, _line(node))
    return str(node.value)


def _sequence(node: yaml.Node, where: str) -> List[yaml.Node]:
    if not isinstance(node, yaml.SequenceNode):
        raise ScenarioParseError("expected a list", where, _line(node))
    return list(node.value)


def _pair(node: yaml.Node, where: str) -> Tuple[float, float]:
    items = _sequence(node, where)
    if len(items) != 2:
        raise ScenarioParseError(f"expected [x, y], got {len(items)} values", where, _line(node))
    return _number(items[0], f"{where}[0]"), _number(items[1], f"{where}[1]")


def _positive(value: float, node: yaml.Node, where: str) -> float:
    if value <= 0:
        raise ScenarioParseError(f"must be positive, got {value}", where, _line(node))
    return value


def _parse_route(node: yaml.Node, where: str, default_approach: float = 0.0) -> RouteSpec:
    items = _mapping(node, where, ROUTE_KEYS)
    if 'segments' in items and 'waypoints' in items:
        raise ScenarioParseError("give either segments or waypoints, not both", where, _line(node))
    approach = default_approach
    if 'approach' in items:
        approach = _number(items['approach'], f"{where}.approach")
        if approach < 0:
            raise ScenarioParseError("must be nonnegative", f"{where}.approach",
                                     _line(items['approach']))

    segments = []
    for i, seg_node in enumerate(_sequence(items['segments'], f"{where}.segments")
                                 if 'segments' in items else []):
        seg_where = f"{where}.segments[{i}]"
        seg = _mapping(seg_node, seg_where, ('straight', 'arc'))
        if len(seg) != 1:
            raise ScenarioParseError("segment needs exactly one of straight/arc", seg_where,
                                     _line(seg_node))
        if 'straight' in seg:
            length = _positive(_number(seg['straight'], f"{seg_where}.straight"), seg['straight'],
                               f"{seg_where}.straight")
            segments.append(('straight', length))
        else:
            arc = _mapping(seg['arc'], f"{seg_where}.arc", ('radius', 'angle'), ('radius', 'angle'))
            radius = _positive(_number(arc['radius'], f"{seg_where}.arc.radius"), arc['radius'],
                               f"{seg_where}.arc.radius")
            segments.append(('arc', radius, _number(arc['angle'], f"{seg_where}.arc.angle")))

    waypoints = []
    if 'waypoints' in items:
        nodes = _sequence(items['waypoints'], f"{where}.waypoints")
        if len(nodes) < 1:
            raise ScenarioParseError("needs at least one waypoint", f"{where}.waypoints",
                                     _line(items['waypoints']))
        waypoints = [_pair(n, f"{where}.waypoints[{i}]") for i, n in enumerate(nodes)]

    return RouteSpec(segments=tuple(segments), waypoints=tuple(waypoints), approach=approach)


def _parse_actor(node: yaml.Node, where: str, ego: bool) -> ActorSpec:
    required = ('speed', 'heading') if ego else ('name', 'position', 'speed', 'heading')
    items = _mapping(node, where, ACTOR_KEYS, required)
    values = {
        'name': _string(items['name'], f"{where}.name") if 'name' in items else 'EV',
        'speed': _number(items['speed'], f"{where}.speed"),
        'heading': _number(items['heading'], f"{where}.heading"),
    }
    if 'position' in items:
        values['position'] = _pair(items['position'], f"{where}.position")
        if ego and values['position'] != (0.0, 0.0):
            raise ScenarioParseError("the EV starts at the origin", f"{where}.position",
                                     _line(items['position']))
    for key in ('accel_lon', 'accel_lat'):
        if key in items:
            values[key] = _number(items[key], f"{where}.{key}")
    for key in ('length', 'width'):
        if key in items:
            values[key] = _positive(_number(items[key], f"{where}.{key}"), items[key],
                                    f"{where}.{key}")
    if 'route' in items:
        values['route'] = _parse_route(items['route'], f"{where}.route",
                                       DEFAULT_APPROACH if ego else 0.0)
    elif ego:
        values['route'] = RouteSpec(approach=DEFAULT_APPROACH)
    return ActorSpec(**values)


def loads_scenario(text: str, source: str = "<string>") -> ScenarioSpec:
    """Parse scenario YAML text.

    Raises:
        ScenarioParseError: syntax errors, unknown keys, missing fields,
            malformed numbers or an unknown layout id
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        raise ScenarioParseError(f"invalid YAML: {getattr(e, 'problem', e)}", "",
                                 mark.line + 1 if mark else None) from e
    if root is None:
        raise ScenarioParseError("empty scenario file", "", 1)

    items = _mapping(root, "", SCENARIO_KEYS, ('id', 'layout', 'nominal_speed', 'duration', 'ego'))
    layout = _string(items['layout'], 'layout')
    if layout not in LAYOUTS:
        raise ScenarioParseError(f"unknown layout '{layout}' (expected one of {', '.join(LAYOUTS)})",
                                 'layout', _line(items['layout']))

    nominal = _positive(_number(items['nominal_speed'], 'nominal_speed'), items['nominal_speed'],
                        'nominal_speed')
    duration = _positive(_number(items['duration'], 'duration'), items['duration'], 'duration')
    goal = None
    if 'goal_distance' in items:
        goal = _positive(_number(items['goal_distance'], 'goal_distance'), items['goal_distance'],
                         'goal_distance')

    markings = ()
    if 'lane_markings' in items:
        markings = tuple(_number(n, f"lane_markings[{i}]")
                         for i, n in enumerate(_sequence(items['lane_markings'], 'lane_markings')))

    obstacles = []
    if 'obstacles' in items:
        for i, node in enumerate(_sequence(items['obstacles'], 'obstacles')):
            obstacles.append(_parse_actor(node, f"obstacles[{i}]", ego=False))
    names = [ov.name for ov in obstacles]
    if len(set(names)) != len(names):
        raise ScenarioParseError(f"obstacle names must be unique: {names}", 'obstacles',
                                 _line(items['obstacles']))

    spec = ScenarioSpec(
        scenario_id=_string(items['id'], 'id'),
        layout=layout,
        nominal_speed=nominal,
        duration=duration,
        ego=_parse_actor(items['ego'], 'ego', ego=True),
        obstacles=tuple(obstacles),
        lane_markings=markings,
        goal_distance=goal,
        description=_string(items['description'], 'description') if 'description' in items else "",
        source=source,
    )
    logger.debug(f"Parsed scenario {spec.scenario_id} ({LAYOUTS[layout]}) from {source}: "
                 f"{len(obstacles)} obstacle(s)")
    return spec


def parse_scenario(path: Union[str, Path]) -> ScenarioSpec:
    """Load and validate a scenario file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scenario file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return loads_scenario(f.read(), source=str(path))


def _route_dict(route: RouteSpec) -> dict:
    out = {'approach': route.approach}
    if route.segments:
        out['segments'] = [
            {'straight': seg[1]} if seg[0] == 'straight'
            else {'arc': {'radius': seg[1], 'angle': seg[2]}}
            for seg in route.segments
        ]
    if route.waypoints:
        out['waypoints'] = [list(p) for p in route.waypoints]
    return out


def _actor_dict(actor: ActorSpec, ego: bool) -> dict:
    out = {} if ego else {'name': actor.name, 'position': list(actor.position)}
    out.update({
        'speed': actor.speed,
        'heading': actor.heading,
        'accel_lon': actor.accel_lon,
        'accel_lat': actor.accel_lat,
        'length': actor.length,
        'width': actor.width,
    })
    if actor.route is not None:
        out['route'] = _route_dict(actor.route)
    return out


def serialize_scenario(spec: ScenarioSpec) -> str:
    """Canonical YAML form: fixed key order, every optional value spelled out."""
    doc = {
        'id': spec.scenario_id,
        'layout': spec.layout,
        'description': spec.description,
        'nominal_speed': spec.nominal_speed,
        'duration': spec.duration,
    }
    if spec.goal_distance is not None:
        doc['goal_distance'] = spec.goal_distance
    doc['lane_markings'] = list(spec.lane_markings)
    doc['ego'] = _actor_dict(spec.ego, ego=True)
    doc['obstacles'] = [_actor_dict(ov, ego=False) for ov in spec.obstacles]
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def discover_scenarios(directory: Union[str, Path]) -> List[Path]:
    """Scenario files in a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"Scenario directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.suffix in ('.yaml', '.yml'))
