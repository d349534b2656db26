"""Shortest paths over the mixed DV-graph, from the robot to the goal."""
from __future__ import annotations

import dataclasses
import enum
import heapq
import math
import time
import typing as typ

import numpy as np

from . import geometry
from .dvgraph import DVGraph, InteractionEdge, VertexKind
from .logging import logger
from .model import Point2

ROBOT = -1
GOAL = -2


class SegmentKind(enum.Enum):
    VISIBILITY = 'visibility'
    INTERACTION = 'interaction'


@dataclasses.dataclass(frozen=True)
class GlobalPath:
    """A minimum-cost path. Vertex ids are those of the planning snapshot; ROBOT and GOAL mark the
    temporary end vertices.

    :param vertex_ids: Vertices, robot first and goal last.
    :param positions: Vertex positions.
    :param kinds: Kind of each segment; one fewer than vertices.
    :param costs: Cost of each segment.
    :param interactions: The interaction edge of each interaction segment, None for visibility segments.
    :param object_ids: Object of each waypoint vertex, None elsewhere.
    """
    vertex_ids: tuple[int, ...]
    positions: tuple[Point2, ...]
    kinds: tuple[SegmentKind, ...]
    costs: tuple[float, ...]
    interactions: tuple[InteractionEdge | None, ...]
    object_ids: tuple[str | None, ...]

    def __post_init__(self):
        n = len(self.vertex_ids)
        if n < 2 or not (len(self.positions) == n and len(self.kinds) == len(self.costs) == n - 1):
            raise ValueError('inconsistent path')

    @property
    def cost(self) -> float:
        return sum(self.costs)

    @property
    def length(self) -> float:
        """Geometric length of the polyline."""
        return sum(a.distance_to(b) for a, b in zip(self.positions, self.positions[1:]))

    @property
    def segment_count(self) -> int:
        return len(self.kinds)

    @property
    def interaction_count(self) -> int:
        return sum(k == SegmentKind.INTERACTION for k in self.kinds)

    @property
    def pushed_objects(self) -> list[str]:
        return [e.object_id for e in self.interactions if e is not None]

    def __repr__(self):
        return f'GlobalPath{{cost={self.cost:.3f}, vertices={len(self.vertex_ids)}, ' \
               f'interactions={self.interaction_count}}}'


_Link = tuple[int, float, typ.Optional[InteractionEdge]]


class PlanningSnapshot:
    """A read-only graph prepared for repeated queries: adjacency lists and an obstacle index."""

    def __init__(self, graph: DVGraph, connect_radius: float = None):
        """Prepares a snapshot.

        :param graph: The graph; it must not be modified afterwards.
        :param connect_radius: Robot and goal are only linked to vertices this close; unlimited if None.
        """
        self.graph = graph
        self.connect_radius = connect_radius
        self.ids = np.array(graph.vertex_ids, dtype=int)
        self.positions = graph.positions(self.ids.tolist())
        self._polygons = graph.polygons()
        self.index = geometry.ObstacleIndex(self._polygons)
        self.adjacency: dict[int, list[_Link]] = {int(v): [] for v in self.ids}
        for e in graph.visibility_edges():
            self.adjacency[e.a].append((e.b, e.length, None))
            self.adjacency[e.b].append((e.a, e.length, None))
        for e in graph.interaction_edges():
            self.adjacency[e.source].append((e.target, e.cost, e))

    def __len__(self):
        return len(self.ids)

    def links(self, p: Point2, ignore: typ.Collection[int] = ()) -> list[tuple[int, float]]:
        """Vertices visible from p, with their distance."""
        if not len(self.ids):
            return []
        d = np.hypot(self.positions[:, 0] - p.x, self.positions[:, 1] - p.y)
        candidates = np.arange(len(self.ids)) if self.connect_radius is None \
            else np.flatnonzero(d <= self.connect_radius)
        if not len(candidates):
            return []
        starts = np.repeat([p.as_tuple()], len(candidates), axis=0)
        visible = self.index.visible_mask(starts, self.positions[candidates], ignore)
        return [(int(self.ids[k]), float(d[k])) for k in candidates[visible]]

    def enclosing(self, p: Point2) -> list[int]:
        """Indices of the polygons whose interior holds p; they are not obstacles for p’s links."""
        return self.index.containing(p)


def plan(snapshot: DVGraph | PlanningSnapshot, p_robot: Point2, p_goal: Point2, timestamp: float = None) \
        -> GlobalPath | None:
    """Uniform-cost search from the robot to the goal over visibility lengths and interaction costs.

    Robot and goal become temporary vertices linked to every vertex they see. Polygons that contain
    either of them do not block those links. Ties are broken by cost, then hop count, then vertex id.

    :param snapshot: The graph, or a prepared snapshot of it.
    :param p_robot: Robot position.
    :param p_goal: Goal position.
    :param timestamp: Simulation time for the trace log.
    :return: The path, or None if the goal is unreachable in the graph.
    """
    started = time.perf_counter()
    prepared = snapshot if isinstance(snapshot, PlanningSnapshot) else PlanningSnapshot(snapshot)
    ignore = set(prepared.enclosing(p_robot)) | set(prepared.enclosing(p_goal))
    robot_links: list[_Link] = [(v, d, None) for v, d in prepared.links(p_robot, ignore)]
    goal_links = dict(prepared.links(p_goal, ignore))
    if prepared.index.visible_mask(np.array([p_robot.as_tuple()]), np.array([p_goal.as_tuple()]), ignore)[0]:
        robot_links.append((GOAL, p_robot.distance_to(p_goal), None))

    best: dict[int, tuple[float, int]] = {ROBOT: (0.0, 0)}
    parent: dict[int, tuple[int, InteractionEdge | None, float]] = {}
    heap = [(0.0, 0, ROBOT)]
    while heap:
        cost, hops, u = heapq.heappop(heap)
        if (cost, hops) > best[u]:
            continue
        if u == GOAL:
            break
        links = robot_links if u == ROBOT else prepared.adjacency[u]
        if u in goal_links:
            links = links + [(GOAL, goal_links[u], None)]
        for v, w, edge in links:
            candidate = (cost + w, hops + 1)
            if candidate < best.get(v, (math.inf, 0)):
                best[v] = candidate
                parent[v] = (u, edge, w)
                heapq.heappush(heap, (candidate[0], candidate[1], v))

    elapsed = time.perf_counter() - started
    if GOAL not in best:
        logger.info(f'plan t={timestamp}: no path, vertices={len(prepared)}, solve={elapsed * 1000:.2f} ms')
        return None
    path = _unwind(prepared.graph, parent, p_robot, p_goal)
    logger.info(f'plan t={timestamp}: cost={path.cost:.3f}, vertices={len(prepared)}, solve={elapsed * 1000:.2f} ms')
    return path


def _unwind(graph: DVGraph, parent: dict, p_robot: Point2, p_goal: Point2) -> GlobalPath:
    ids, edges, costs = [GOAL], [], []
    while ids[-1] != ROBOT:
        u, edge, w = parent[ids[-1]]
        ids.append(u)
        edges.append(edge)
        costs.append(w)
    ids.reverse()
    edges.reverse()
    costs.reverse()

    def position(vid: int) -> Point2:
        return p_robot if vid == ROBOT else p_goal if vid == GOAL else graph.vertex(vid).position

    def object_id(vid: int) -> str | None:
        if vid < 0:
            return None
        v = graph.vertex(vid)
        return v.object_id if v.kind == VertexKind.TOPO_WAYPOINT else None

    return GlobalPath(
        vertex_ids=tuple(ids),
        positions=tuple(position(v) for v in ids),
        kinds=tuple(SegmentKind.VISIBILITY if e is None else SegmentKind.INTERACTION for e in edges),
        costs=tuple(costs),
        interactions=tuple(edges),
        object_ids=tuple(object_id(v) for v in ids),
    )


def straight_line(p_robot: Point2, p_goal: Point2) -> GlobalPath:
    """Fallback path through unknown space."""
    return GlobalPath((ROBOT, GOAL), (p_robot, p_goal), (SegmentKind.VISIBILITY,), (p_robot.distance_to(p_goal),),
                      (None,), (None, None))
