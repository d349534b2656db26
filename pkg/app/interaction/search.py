"""Hybrid A* over (contact, object pose) producing push primitives."""
from __future__ import annotations

import dataclasses
import heapq
import itertools
import math
import typing as typ

import cv2
import networkx as nx
import numpy as np
import shapely
import shapely.geometry as sg

from .push import ContactError, ContactPoint, StableCone, characteristic_length, footprint_of, sample_contacts, \
    stable_cone
from .. import constants, geometry
from ..config import InteractionConfig
from ..extraction import GridFrame, fill_polygon
from ..logging import logger
from ..model import Point2, Polygon, PolygonClass, Pose2

if typ.TYPE_CHECKING:
    from .affordance import Affordance

# Extra room around the object and the waypoints covered by the connectivity raster
WINDOW_MARGIN = 3.0
# Clearance kept between a pushed object and the obstacles
OBJECT_MARGIN = 0.01
# Distance from the object at which detour nodes are placed, beyond the robot radius
DETOUR_CLEARANCE = 0.05
# Obstacle vertices farther than this from the object are not used for detours
DETOUR_RANGE = 2.0


class PushSearchFailure(Exception):
    """Raised when no push primitive could be found.

    :param reason: One of NO_CONTACT, BUDGET, EXHAUSTED or NOT_PUSHABLE.
    :param expanded: Number of expanded nodes.
    """
    NO_CONTACT = 'no contact'
    BUDGET = 'budget'
    EXHAUSTED = 'exhausted'
    NOT_PUSHABLE = 'not pushable'

    def __init__(self, reason: str, expanded: int = 0):
        super().__init__(f'push search failed: {reason}')
        self.reason = reason
        self.expanded = expanded


@dataclasses.dataclass(frozen=True)
class PushSegment:
    """A constant-twist stable push.

    :param contact: The contact being pushed, in the footprint frame.
    :param v: Pusher forward speed.
    :param omega: Pusher yaw rate.
    :param duration: Duration of the push.
    :param object_start: Footprint pose when the segment starts.
    :param robot_start: Robot pose when the segment starts.
    """
    contact: ContactPoint
    v: float
    omega: float
    duration: float
    object_start: Pose2
    robot_start: Pose2

    @property
    def length(self) -> float:
        """Distance travelled by the contact."""
        return self.v * self.duration

    @property
    def robot_end(self) -> Pose2:
        return geometry.integrate_arc(self.robot_start, self.v, self.omega, self.duration)

    @property
    def object_end(self) -> Pose2:
        return geometry.carry(self.object_start, self.robot_start, self.robot_end)


@dataclasses.dataclass(frozen=True)
class ContactSwitch:
    """A repositioning of the robot around the object between two contacts."""
    source: ContactPoint
    target: ContactPoint
    path: tuple[Point2, ...]

    @property
    def length(self) -> float:
        return sum(a.distance_to(b) for a, b in zip(self.path, self.path[1:]))


PushAction = typ.Union[PushSegment, ContactSwitch]


@dataclasses.dataclass(frozen=True)
class PushPrimitive:
    """A sequence of stable pushes and contact switches moving one object.

    :param object_id: The pushed object.
    :param actions: Pushes and switches, in execution order.
    :param start_pose: Footprint pose before the first action.
    :param result_pose: Footprint pose after the last action.
    :param cost: Manipulation cost J, in meters-equivalent.
    """
    object_id: str
    actions: tuple[PushAction, ...]
    start_pose: Pose2
    result_pose: Pose2
    cost: float

    @property
    def is_empty(self) -> bool:
        return not self.actions

    @property
    def segments(self) -> list[PushSegment]:
        return [a for a in self.actions if isinstance(a, PushSegment)]

    @property
    def switches(self) -> list[ContactSwitch]:
        return [a for a in self.actions if isinstance(a, ContactSwitch)]

    @property
    def push_length(self) -> float:
        return sum(s.length for s in self.segments)

    @property
    def switch_length(self) -> float:
        return sum(s.length for s in self.switches)

    def remaining_push_length(self, action_index: int, elapsed: float = 0.0) -> float:
        """Push length left from the given action on, elapsed seconds of it being already done."""
        total = 0.0
        for i, a in enumerate(self.actions[action_index:]):
            if isinstance(a, PushSegment):
                done = a.v * min(elapsed, a.duration) if i == 0 else 0.0
                total += a.length - done
        return total

    def with_effort(self, effort: float) -> float:
        """Cost of this primitive for another effort multiplier."""
        return self.push_length * effort + self.switch_length


@dataclasses.dataclass(frozen=True)
class SearchState:
    contact: int
    pose: Pose2


def heuristic_polygons(obj: Polygon, background: typ.Sequence[Polygon], effort: float = 1.0) \
        -> tuple[list[Polygon], float]:
    """Regions where an object overlaps the background, and the displacement bound they imply.

    :param obj: The object polygon at its current pose.
    :param background: Background polygons.
    :param effort: Effort multiplier applied to the bound.
    :return: The overlap regions and h; h is the width of the only region, or the width of the
        hull of all region vertices when there are several.
    """
    regions = []
    for b in background:
        if obj.shape.intersects(b.shape):
            regions.extend(geometry.polygon_intersection(obj, b))
    if not regions:
        return [], 0.0
    if len(regions) == 1:
        return regions, geometry.polygon_width(regions[0]) * effort
    points = np.vstack([r.coords for r in regions])
    try:
        hull = geometry.convex_hull([Point2(*p) for p in points])
    except geometry.GeometryError:
        return regions, 0.0
    return regions, geometry.polygon_width(hull) * effort


def detour_graph(keepout: Polygon, ring: np.ndarray, obstacles: typ.Sequence[Polygon],
                 terminals: typ.Sequence[Point2]) -> nx.Graph:
    """Visibility graph for a robot center moving around an object.

    :param keepout: Region the robot center must stay out of around the object.
    :param ring: Candidate nodes surrounding the keepout.
    :param obstacles: Other regions forbidden to the robot center.
    :param terminals: Points that must be nodes, labeled 0, 1, … in the graph.
    :return: The graph; terminal nodes are integers, other nodes are ('n', i) tuples.
    """
    blockers = [keepout] + list(obstacles)
    index = geometry.ObstacleIndex(blockers)
    points = list(terminals)
    names: list = list(range(len(terminals)))
    for i, (x, y) in enumerate(ring):
        p = Point2(float(x), float(y))
        if index.is_free(p):
            points.append(p)
            names.append(('n', i))
    graph = nx.Graph()
    graph.add_nodes_from(names)
    if len(points) < 2:
        return graph
    coords = np.array([p.as_tuple() for p in points])
    a, b = np.triu_indices(len(points), k=1)
    visible = index.visible_mask(coords[a], coords[b])
    for i, j in zip(a[visible], b[visible]):
        graph.add_edge(names[i], names[j], length=points[i].distance_to(points[j]),
                       points=(points[i], points[j]))
    for name, p in zip(names, points):
        graph.nodes[name]['position'] = p
    return graph


def robot_detour(start: Point2, end: Point2, footprint: Polygon, obstacles: typ.Sequence[Polygon],
                 robot_radius: float = constants.ROBOT_RADIUS) -> list[Point2] | None:
    """Shortest collision-free path of the robot center between two points around an object.

    :param start: Start point.
    :param end: End point.
    :param footprint: Physical outline of the object.
    :param obstacles: Other obstacles, already inflated by the robot radius.
    :param robot_radius: The robot radius.
    :return: The path, or None if there is none.
    """
    keepout = Polygon.from_shape(footprint.shape.buffer(max(robot_radius - OBJECT_MARGIN, 0.0)),
                                 PolygonClass.MOVABLE, footprint.id)
    ring = np.asarray(footprint.shape.buffer(robot_radius + DETOUR_CLEARANCE, join_style='mitre')
                      .exterior.coords)[:-1]
    ring = np.vstack([ring] + [o.coords for o in _near(obstacles, footprint.shape, DETOUR_RANGE)])
    graph = detour_graph(keepout, ring, obstacles, [start, end])
    try:
        nodes = nx.dijkstra_path(graph, 0, 1, weight='length')
    except nx.NetworkXNoPath:
        return None
    return [graph.nodes[n]['position'] for n in nodes]


def _near(polygons: typ.Sequence[Polygon], shape, distance: float) -> list[Polygon]:
    return [p for p in polygons if p.shape.distance(shape) <= distance]


def _place(coords: np.ndarray, pose: Pose2) -> np.ndarray:
    c, s = math.cos(pose.psi), math.sin(pose.psi)
    return coords @ np.array([[c, s], [-s, c]]) + np.array([pose.x, pose.y])


class PushProblem:
    """Everything the search needs about one object and one waypoint pair, with its caches."""

    def __init__(self, start_wp: Point2, goal_wp: Point2, movable: Polygon, obstacles: typ.Sequence[Polygon],
                 affordance: Affordance, config: InteractionConfig = InteractionConfig(), arc_length: float = None):
        """Prepares a search.

        :param start_wp: Waypoint on the robot’s side.
        :param goal_wp: Waypoint to connect to.
        :param movable: The object polygon, inflated by the robot radius.
        :param obstacles: Background and other objects, inflated by the robot radius.
        :param affordance: Current affordance of the object.
        :param config: Search settings.
        :param arc_length: Contact travel per push step; defaults to config.arc_length.
        :raise ContactError: If the object footprint cannot be recovered.
        """
        self.config = config
        self.affordance = affordance
        self.object_id = affordance.object_id
        self.start_wp = start_wp
        self.goal_wp = goal_wp
        self.radius = config.robot_radius
        self.arc_length = arc_length or config.arc_length
        self.effort = affordance.effort

        footprint = footprint_of(movable, self.radius)
        c = footprint.centroid
        self.origin = Pose2(c.x, c.y, 0.0)
        self.body = Polygon.from_coords(footprint.coords - np.array(c.as_tuple()), PolygonClass.MOVABLE,
                                        footprint.id)
        self._body_margin = np.asarray(self.body.shape.buffer(OBJECT_MARGIN, join_style='mitre')
                                       .exterior.coords)[:-1]
        self._inflated = movable.coords - np.array(c.as_tuple())
        self._keepout = np.asarray(self.body.shape.buffer(max(self.radius - OBJECT_MARGIN, 0.0))
                                   .exterior.coords)[:-1]
        self._ring = np.asarray(self.body.shape.buffer(self.radius + DETOUR_CLEARANCE, join_style='mitre')
                                .exterior.coords)[:-1]

        self.contacts = sample_contacts(self.body, config.contact_width)
        c_len = characteristic_length(self.body)
        self.cones: list[StableCone] = [stable_cone(self.body, ct, affordance.friction, config.contact_width, c_len)
                                        for ct in self.contacts]

        # Raster window covering the object, both waypoints and room to push
        points = np.vstack([movable.coords, [start_wp.as_tuple(), goal_wp.as_tuple()]])
        lo, hi = points.min(axis=0) - WINDOW_MARGIN, points.max(axis=0) + WINDOW_MARGIN
        center = Point2(*((lo + hi) / 2))
        cells = int(math.ceil(float((hi - lo).max()) / config.position_bin))
        self.frame = GridFrame(center, config.position_bin, cells)
        window = self.frame.box()
        self.obstacles = [o for o in obstacles if o.shape.intersects(window)]
        self._index = geometry.ObstacleIndex(self.obstacles)
        deflated = []
        for o in self.obstacles:
            deflated.extend(geometry.polygon_parts(o.shape.buffer(-self.radius)))
        self._physical = shapely.STRtree(deflated) if deflated else None
        self._detour_obstacles = _near(self.obstacles, movable.shape, DETOUR_RANGE)
        self._detour_vertices = np.vstack([o.coords for o in self._detour_obstacles]) \
            if self._detour_obstacles else np.zeros((0, 2))

        self._background = np.zeros((cells, cells), dtype=np.uint8)
        for o in self.obstacles:
            fill_polygon(self._background, self.frame, o)
        labels = self._labels(self.origin)
        self._start_cells = labels == self._label_at(labels, start_wp)
        self._goal_cells = labels == self._label_at(labels, goal_wp)
        self._initial_labels = labels

        self._connected_cache: dict[tuple, bool] = {}
        self._heuristic_cache: dict[tuple, float] = {}
        self._switch_cache: dict[tuple, tuple[dict, dict]] = {}

    def key(self, state: SearchState) -> tuple[int, int, int, int]:
        pose = state.pose
        bins = int(round(360 / self.config.heading_bin))
        heading = int(round(math.degrees(pose.psi) / self.config.heading_bin)) % bins
        return (state.contact, int(round(pose.x / self.config.position_bin)),
                int(round(pose.y / self.config.position_bin)), heading)

    def pose_key(self, pose: Pose2) -> tuple[int, int, int]:
        return self.key(SearchState(-1, pose))[1:]

    def inflated_at(self, pose: Pose2) -> Polygon:
        return Polygon.from_coords(_place(self._inflated, pose), PolygonClass.MOVABLE, self.object_id)

    def footprint_at(self, pose: Pose2) -> Polygon:
        return Polygon.from_coords(_place(self.body.coords, pose), PolygonClass.MOVABLE, self.object_id)

    def collides(self, pose: Pose2) -> bool:
        """Whether the footprint at pose touches an obstacle."""
        if self._physical is None:
            return False
        shape = sg.Polygon(_place(self._body_margin, pose))
        return len(self._physical.query(shape, predicate='intersects')) > 0

    def robot_free(self, p: Point2) -> bool:
        return self._index.is_free(p)

    def _labels(self, pose: Pose2) -> np.ndarray:
        grid = self._background.copy()
        fill_polygon(grid, self.frame, Polygon.from_coords(_place(self._inflated, pose), PolygonClass.MOVABLE))
        _, labels = cv2.connectedComponents((grid == 0).astype(np.uint8), connectivity=4)
        return labels

    def _label_at(self, labels: np.ndarray, p: Point2) -> int:
        """Label of the cell holding p, or of the closest free cell within two cells."""
        cell = self.frame.to_cell(p)
        if cell is None:
            return -1
        row, col = cell
        if labels[row, col]:
            return int(labels[row, col])
        best, best_d = -1, math.inf
        for dr in range(-2, 3):
            for dc in range(-2, 3):
                r, c = row + dr, col + dc
                if 0 <= r < labels.shape[0] and 0 <= c < labels.shape[1] and labels[r, c]:
                    d = dr * dr + dc * dc
                    if d < best_d:
                        best, best_d = int(labels[r, c]), d
        return best

    def connected(self, pose: Pose2) -> bool:
        """Whether the start and goal regions share a free component with the object at pose."""
        key = self.pose_key(pose)
        if key not in self._connected_cache:
            labels = self._labels(pose)
            start = np.unique(labels[self._start_cells])
            goal = np.unique(labels[self._goal_cells])
            common = np.intersect1d(start[start > 0], goal[goal > 0])
            self._connected_cache[key] = len(common) > 0
        return self._connected_cache[key]

    def heuristic(self, pose: Pose2) -> float:
        key = self.pose_key(pose)
        if key not in self._heuristic_cache:
            self._heuristic_cache[key] = heuristic_polygons(self.inflated_at(pose), self.obstacles, self.effort)[1]
        return self._heuristic_cache[key]

    def reachable_contacts(self) -> list[int]:
        """Contacts with a non-empty cone whose robot pose is free and on the start side."""
        start_labels = set(np.unique(self._initial_labels[self._start_cells]).tolist()) - {0}
        result = []
        for i, (contact, cone) in enumerate(zip(self.contacts, self.cones)):
            if cone.is_empty:
                continue
            pusher = contact.pusher_pose(self.origin, self.radius).position
            if not self.robot_free(pusher):
                continue
            _, n = contact.at(self.origin)
            behind = pusher - n * self.config.position_bin
            if self._label_at(self._initial_labels, behind) in start_labels:
                result.append(i)
        return result

    def switch_paths(self, pose: Pose2, source: int) -> dict[int, tuple[float, tuple[Point2, ...]]]:
        """Robot detours from one contact to every other contact, object held at pose."""
        key = self.pose_key(pose) + (source,)
        if key not in self._switch_cache:
            terminals = [c.pusher_pose(pose, self.radius).position for c in self.contacts]
            keepout = Polygon.from_coords(_place(self._keepout, pose), PolygonClass.MOVABLE, self.object_id)
            ring = np.vstack([_place(self._ring, pose), self._detour_vertices])
            graph = detour_graph(keepout, ring, self._detour_obstacles, terminals)
            lengths, paths = nx.single_source_dijkstra(graph, source, weight='length')
            positions = nx.get_node_attributes(graph, 'position')
            self._switch_cache[key] = (lengths, {n: tuple(positions[m] for m in p) for n, p in paths.items()})
        lengths, paths = self._switch_cache[key]
        return {j: (lengths[j], paths[j]) for j in range(len(self.contacts)) if j != source and j in lengths}


def expand_state(problem: PushProblem, state: SearchState, allow_switch: bool = True) \
        -> list[tuple[SearchState, float, PushAction]]:
    """Successors of a search state with their step costs.

    :param problem: The search context.
    :param state: The state to expand.
    :param allow_switch: Whether contact switches are generated.
    :return: Push successors first, then switch successors.
    """
    config = problem.config
    successors = []
    contact = problem.contacts[state.contact]
    cone = problem.cones[state.contact]
    pusher = contact.pusher_pose(state.pose, problem.radius)
    v = config.push_speed
    dt = problem.arc_length / v
    for kappa in cone.curvatures(config.curvature_samples):
        omega = kappa * v
        # Intermediate poses are checked too
        for fraction in (1 / 3, 2 / 3, 1.0):
            robot_t = geometry.integrate_arc(pusher, v, omega, fraction * dt)
            end = geometry.carry(state.pose, pusher, robot_t)
            if problem.collides(end) or not problem.robot_free(robot_t.position):
                break
        else:
            action = PushSegment(contact, v, omega, dt, state.pose, pusher)
            successors.append((SearchState(state.contact, end), problem.arc_length * problem.effort, action))

    if allow_switch:
        for j, (length, path) in sorted(problem.switch_paths(state.pose, state.contact).items()):
            if problem.cones[j].is_empty:
                continue
            if not problem.robot_free(problem.contacts[j].pusher_pose(state.pose, problem.radius).position):
                continue
            action = ContactSwitch(contact, problem.contacts[j], path)
            successors.append((SearchState(j, state.pose), length, action))
    return successors


@dataclasses.dataclass
class _Node:
    state: SearchState
    g: float
    parent: _Node | None
    action: PushAction | None


def search_primitive(start_wp: Point2, goal_wp: Point2, movable: Polygon, obstacles: typ.Sequence[Polygon],
                     affordance: Affordance, config: InteractionConfig = InteractionConfig(),
                     trace: list[str] = None, use_heuristic: bool = True) -> PushPrimitive:
    """Searches the cheapest push primitive connecting two waypoints of an object.

    :param start_wp: Waypoint the robot comes from.
    :param goal_wp: Waypoint to reach.
    :param movable: The object polygon, inflated by the robot radius.
    :param obstacles: Background polygons and other objects, inflated by the robot radius.
    :param affordance: Current affordance of the object.
    :param config: Search settings.
    :param trace: If given, one line per expanded node is appended to it.
    :param use_heuristic: If false, runs a uniform-cost search.
    :return: The primitive; it is empty if the waypoints are already connected.
    :raise PushSearchFailure: If no primitive was found.
    """
    if not affordance.pushable:
        raise PushSearchFailure(PushSearchFailure.NOT_PUSHABLE)
    try:
        problem = PushProblem(start_wp, goal_wp, movable, obstacles, affordance, config)
    except (ContactError, geometry.GeometryError) as e:
        logger.warning(f'push search on {affordance.object_id!r}: {e}')
        raise PushSearchFailure(PushSearchFailure.NO_CONTACT)
    try:
        return _search(problem, trace, use_heuristic)
    except PushSearchFailure as e:
        if e.reason != PushSearchFailure.BUDGET or not config.retry_half_arc:
            raise
        logger.info(f'push search on {affordance.object_id!r} over budget, retrying at half arc length')
        problem = PushProblem(start_wp, goal_wp, movable, obstacles, affordance, config, config.arc_length / 2)
        return _search(problem, trace, use_heuristic)


def _search(problem: PushProblem, trace: list[str] | None, use_heuristic: bool) -> PushPrimitive:
    if problem.connected(problem.origin):
        return PushPrimitive(problem.object_id, (), problem.origin, problem.origin, 0.0)
    starts = problem.reachable_contacts()
    if not starts:
        raise PushSearchFailure(PushSearchFailure.NO_CONTACT)

    def h(pose: Pose2) -> float:
        return problem.heuristic(pose) if use_heuristic else 0.0

    counter = itertools.count()
    open_set = []
    best_g = {}
    for i in starts:
        state = SearchState(i, problem.origin)
        best_g[problem.key(state)] = 0.0
        h0 = h(problem.origin)
        heapq.heappush(open_set, (h0, h0, next(counter), _Node(state, 0.0, None, None)))

    closed = set()
    expanded = 0
    budget = problem.config.node_budget
    while open_set:
        _, h_node, _, node = heapq.heappop(open_set)
        key = problem.key(node.state)
        if key in closed:
            continue
        closed.add(key)
        if node.parent is not None and problem.connected(node.state.pose):
            return _primitive(problem, node)
        expanded += 1
        if expanded > budget:
            raise PushSearchFailure(PushSearchFailure.BUDGET, expanded - 1)
        if trace is not None:
            p = node.state.pose
            trace.append(f'{expanded} contact={problem.contacts[node.state.contact]} x={p.x:.3f} y={p.y:.3f} '
                         f'psi={math.degrees(p.psi):.1f} g={node.g:.3f} h={h_node:.3f}')
        allow_switch = not isinstance(node.action, ContactSwitch)
        for succ, cost, action in expand_state(problem, node.state, allow_switch):
            succ_key = problem.key(succ)
            if succ_key in closed:
                continue
            g = node.g + cost
            if g >= best_g.get(succ_key, math.inf) - 1e-12:
                continue
            best_g[succ_key] = g
            h_succ = h(succ.pose)
            heapq.heappush(open_set, (g + h_succ, h_succ, next(counter), _Node(succ, g, node, action)))
    raise PushSearchFailure(PushSearchFailure.EXHAUSTED, expanded)


def _primitive(problem: PushProblem, node: _Node) -> PushPrimitive:
    actions = []
    cursor = node
    while cursor.parent is not None:
        actions.append(cursor.action)
        cursor = cursor.parent
    actions.reverse()
    return PushPrimitive(problem.object_id, tuple(actions), problem.origin, node.state.pose, node.g)
