"""Directed visibility graph: polygon vertices, waypoints, visibility and interaction edges."""
from __future__ import annotations

import dataclasses
import enum
import typing as typ

import networkx as nx
import numpy as np
import shapely

from .. import constants, geometry
from ..config import InteractionConfig
from ..extraction import PolygonSetLocal
from ..interaction import Affordance, PushPrimitive, default_affordance
from ..model import Point2, Polygon, PolygonClass


class FrameMismatchError(ValueError):
    pass


class VertexKind(enum.Enum):
    POLYGON_VERTEX = 'corner'
    TOPO_WAYPOINT = 'waypoint'
    ROBOT = 'robot'
    GOAL = 'goal'


@dataclasses.dataclass(frozen=True)
class DVVertex:
    """A graph vertex.

    :param id: Unique id within its graph.
    :param position: Location.
    :param kind: Vertex kind.
    :param polygon_id: Owning polygon, for polygon vertices.
    :param object_id: Movable object that created a waypoint, or that owns a movable polygon vertex.
    :param component_id: Free-space component of a waypoint.
    :param unobserved_count: Consecutive in-view updates without observation.
    """
    id: int
    position: Point2
    kind: VertexKind
    polygon_id: str | None = None
    object_id: str | None = None
    component_id: int | None = None
    unobserved_count: int = 0

    def __post_init__(self):
        if self.unobserved_count < 0:
            raise ValueError(f'vertex {self.id}: negative unobserved count')
        if self.kind == VertexKind.TOPO_WAYPOINT and self.object_id is None:
            raise ValueError(f'waypoint {self.id} has no object')


@dataclasses.dataclass(frozen=True)
class VisibilityEdge:
    a: int
    b: int
    length: float

    def __post_init__(self):
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, 'a', a)
            object.__setattr__(self, 'b', b)


@dataclasses.dataclass(frozen=True)
class InteractionEdge:
    """A directed manipulation strategy between two waypoints of one object."""
    source: int
    target: int
    object_id: str
    cost: float
    primitive: PushPrimitive

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError('interaction edge loops on itself')
        if self.cost < 0:
            raise ValueError(f'negative interaction cost {self.cost}')


@dataclasses.dataclass(frozen=True)
class SuppressedInteraction:
    """An interaction given up by the executor, remembered by its waypoint positions."""
    object_id: str
    source: Point2
    target: Point2


@dataclasses.dataclass(frozen=True)
class PolygonRecord:
    """A polygon stored as the ordered ids of its vertices."""
    id: str
    kind: PolygonClass
    vertex_ids: tuple[int, ...]
    object_id: str | None = None


class DVGraph:
    """Vertices with undirected visibility edges and directed interaction edges, plus per-object affordances."""

    def __init__(self, frame: str = 'world'):
        self.frame = frame
        self._vertices: dict[int, DVVertex] = {}
        self._polygons: dict[str, PolygonRecord] = {}
        self._visibility = nx.Graph()
        self._interaction = nx.DiGraph()
        self._affordances: dict[str, Affordance] = {}
        self._next_id = 0
        self._suppressed: list[SuppressedInteraction] = []

    def __len__(self):
        return len(self._vertices)

    def __repr__(self):
        return (f'DVGraph{{frame={self.frame}, vertices={len(self._vertices)}, '
                f'visibility={self._visibility.number_of_edges()}, '
                f'interaction={self._interaction.number_of_edges()}}}')

    # Vertices

    def add_vertex(self, position: Point2, kind: VertexKind, polygon_id: str = None, object_id: str = None,
                   component_id: int = None, vertex_id: int = None, unobserved_count: int = 0) -> int:
        """Inserts a vertex.

        :return: Its id.
        """
        vid = self._next_id if vertex_id is None else vertex_id
        if vid in self._vertices:
            raise ValueError(f'duplicate vertex id {vid}')
        self._next_id = max(self._next_id, vid + 1)
        self._vertices[vid] = DVVertex(vid, position, kind, polygon_id, object_id, component_id, unobserved_count)
        self._visibility.add_node(vid)
        self._interaction.add_node(vid)
        return vid

    def vertex(self, vid: int) -> DVVertex:
        return self._vertices[vid]

    def has_vertex(self, vid: int) -> bool:
        return vid in self._vertices

    def vertices(self) -> list[DVVertex]:
        return [self._vertices[i] for i in sorted(self._vertices)]

    @property
    def vertex_ids(self) -> list[int]:
        return sorted(self._vertices)

    def replace_vertex(self, vertex: DVVertex):
        if vertex.id not in self._vertices:
            raise KeyError(vertex.id)
        self._vertices[vertex.id] = vertex

    def remove_vertex(self, vid: int):
        """Removes a vertex with its edges. A polygon left with fewer than 3 vertices is removed too."""
        vertex = self._vertices.pop(vid)
        self._visibility.remove_node(vid)
        self._interaction.remove_node(vid)
        if vertex.polygon_id is not None and vertex.polygon_id in self._polygons:
            record = self._polygons[vertex.polygon_id]
            remaining = tuple(i for i in record.vertex_ids if i != vid)
            if len(remaining) < 3:
                self.remove_polygon(record.id)
            else:
                self._polygons[record.id] = dataclasses.replace(record, vertex_ids=remaining)

    def waypoints(self, object_id: str = None) -> list[DVVertex]:
        return [v for v in self.vertices() if v.kind == VertexKind.TOPO_WAYPOINT
                and (object_id is None or v.object_id == object_id)]

    def positions(self, vertex_ids: typ.Sequence[int] = None) -> np.ndarray:
        ids = self.vertex_ids if vertex_ids is None else vertex_ids
        return np.array([self._vertices[i].position.as_tuple() for i in ids], dtype=float).reshape(-1, 2)

    # Polygons

    def add_polygon(self, polygon: Polygon, object_id: str = None, vertex_ids: typ.Sequence[int] = None) -> list[int]:
        """Stores a polygon, creating its vertices unless existing ones are given.

        :return: The polygon’s vertex ids, in order.
        """
        if polygon.id in self._polygons:
            raise ValueError(f'duplicate polygon id {polygon.id!r}')
        if vertex_ids is None:
            vertex_ids = [self.add_vertex(v, VertexKind.POLYGON_VERTEX, polygon.id, object_id)
                          for v in polygon.vertices]
        else:
            for vid in vertex_ids:
                self._vertices[vid] = dataclasses.replace(self._vertices[vid], polygon_id=polygon.id,
                                                          object_id=object_id)
        self._polygons[polygon.id] = PolygonRecord(polygon.id, polygon.kind, tuple(vertex_ids), object_id)
        return list(vertex_ids)

    def add_polygon_record(self, record: PolygonRecord):
        """Stores a polygon over existing vertices, as is."""
        if record.id in self._polygons:
            raise ValueError(f'duplicate polygon id {record.id!r}')
        missing = [i for i in record.vertex_ids if i not in self._vertices]
        if missing or len(record.vertex_ids) < 3:
            raise ValueError(f'polygon {record.id!r} has unknown or too few vertices')
        self._polygons[record.id] = record

    def polygon_record(self, polygon_id: str) -> PolygonRecord:
        return self._polygons[polygon_id]

    def polygon_records(self) -> list[PolygonRecord]:
        return [self._polygons[k] for k in sorted(self._polygons)]

    def polygon(self, polygon_id: str) -> Polygon:
        """The polygon as placed by the current vertex positions."""
        record = self._polygons[polygon_id]
        return Polygon(tuple(self._vertices[i].position for i in record.vertex_ids), record.kind, record.id)

    def polygons(self, kind: PolygonClass = None) -> list[Polygon]:
        return [self.polygon(r.id) for r in self.polygon_records() if kind is None or r.kind == kind]

    def object_polygon(self, object_id: str) -> Polygon | None:
        for record in self.polygon_records():
            if record.object_id == object_id and record.kind == PolygonClass.MOVABLE:
                return self.polygon(record.id)
        return None

    def remove_polygon(self, polygon_id: str, keep_vertices: bool = False):
        """Removes a polygon and, unless asked otherwise, its vertices."""
        record = self._polygons.pop(polygon_id)
        for vid in record.vertex_ids:
            if vid not in self._vertices:
                continue
            if keep_vertices:
                self._vertices[vid] = dataclasses.replace(self._vertices[vid], polygon_id=None)
            else:
                self._vertices.pop(vid)
                self._visibility.remove_node(vid)
                self._interaction.remove_node(vid)

    def obstacle_index(self) -> geometry.ObstacleIndex:
        return geometry.ObstacleIndex(self.polygons())

    # Visibility edges

    def add_visibility_edge(self, a: int, b: int, length: float = None):
        if a == b:
            return
        if length is None:
            length = self._vertices[a].position.distance_to(self._vertices[b].position)
        self._visibility.add_edge(a, b, length=length)

    def remove_visibility_edge(self, a: int, b: int):
        if self._visibility.has_edge(a, b):
            self._visibility.remove_edge(a, b)

    def has_visibility_edge(self, a: int, b: int) -> bool:
        return self._visibility.has_edge(a, b)

    def visibility_edges(self) -> list[VisibilityEdge]:
        edges = [VisibilityEdge(a, b, d['length']) for a, b, d in self._visibility.edges(data=True)]
        return sorted(edges, key=lambda e: (e.a, e.b))

    def neighbors(self, vid: int) -> list[int]:
        return sorted(self._visibility.neighbors(vid))

    def refresh_edge_lengths(self, vertex_ids: typ.Iterable[int]):
        """Recomputes the length of every visibility edge touching the given vertices."""
        for vid in vertex_ids:
            p = self._vertices[vid].position
            for n in self._visibility.neighbors(vid):
                self._visibility[vid][n]['length'] = p.distance_to(self._vertices[n].position)

    def connect_visible(self, sources: typ.Iterable[int], targets: typ.Iterable[int] = None,
                        index: geometry.ObstacleIndex = None, reduced: bool = False, max_range: float = None) -> int:
        """Adds a visibility edge between every mutually visible source-target pair.

        :param sources: Vertices to connect.
        :param targets: Candidate neighbors; all vertices by default.
        :param index: Blocking polygons; all polygons of this graph by default.
        :param reduced: If true, only keep edges tangent to the polygons at their polygon-vertex ends.
        :param max_range: Pairs farther apart are skipped.
        :return: The number of edges added.
        """
        sources = sorted(set(sources))
        targets = self.vertex_ids if targets is None else sorted(set(targets))
        if not sources or not targets:
            return 0
        index = index or self.obstacle_index()
        src = np.array(sources)
        tgt = np.array(targets)
        si, ti = np.meshgrid(np.arange(len(src)), np.arange(len(tgt)), indexing='ij')
        a, b = src[si.ravel()], tgt[ti.ravel()]
        # Each unordered pair once
        keep = (a != b) & ~(np.isin(b, src) & (b < a))
        a, b = a[keep], b[keep]
        pa, pb = self.positions(a), self.positions(b)
        if max_range is not None:
            near = np.hypot(*(pb - pa).T) <= max_range
            a, b, pa, pb = a[near], b[near], pa[near], pb[near]
        if reduced and len(a):
            tangent = self._tangent_mask(a, pa, pb) & self._tangent_mask(b, pb, pa)
            a, b, pa, pb = a[tangent], b[tangent], pa[tangent], pb[tangent]
        visible = index.visible_mask(pa, pb)
        added = 0
        for i, j in zip(a[visible].tolist(), b[visible].tolist()):
            if not self._visibility.has_edge(i, j):
                self._visibility.add_edge(i, j, length=self._vertices[i].position.distance_to(
                    self._vertices[j].position))
                added += 1
        return added

    def _tangent_mask(self, ids: np.ndarray, here: np.ndarray, there: np.ndarray) -> np.ndarray:
        """For each segment leaving a vertex, whether it is tangent to the vertex’s polygon there."""
        prev_next = self._polygon_neighbors()
        mask = np.ones(len(ids), dtype=bool)
        for k, vid in enumerate(ids.tolist()):
            if vid not in prev_next:
                continue
            prev, nxt, convex = prev_next[vid]
            if not convex:
                mask[k] = False
                continue
            dx, dy = there[k] - here[k]
            s1 = dx * (prev[1] - here[k][1]) - dy * (prev[0] - here[k][0])
            s2 = dx * (nxt[1] - here[k][1]) - dy * (nxt[0] - here[k][0])
            mask[k] = s1 * s2 >= -1e-12
        return mask

    def _polygon_neighbors(self) -> dict[int, tuple[tuple[float, float], tuple[float, float], bool]]:
        result = {}
        for record in self._polygons.values():
            ids = record.vertex_ids
            n = len(ids)
            for k, vid in enumerate(ids):
                p = self._vertices[vid].position
                prev = self._vertices[ids[k - 1]].position
                nxt = self._vertices[ids[(k + 1) % n]].position
                # Counter-clockwise storage: a left turn is a convex corner
                convex = (p - prev).cross(nxt - p) >= -constants.EPSILON
                result[vid] = (prev.as_tuple(), nxt.as_tuple(), convex)
        return result

    def revalidate_edges(self, bounds: tuple[float, float, float, float] = None,
                         index: geometry.ObstacleIndex = None) -> int:
        """Removes visibility edges that became blocked.

        :param bounds: Only edges whose bounding box meets these bounds are checked.
        :param index: Blocking polygons; all polygons of this graph by default.
        :return: The number of removed edges.
        """
        edges = list(self._visibility.edges())
        if not edges:
            return 0
        a = np.array([e[0] for e in edges])
        b = np.array([e[1] for e in edges])
        pa, pb = self.positions(a), self.positions(b)
        if bounds is not None:
            xmin, ymin, xmax, ymax = bounds
            lo, hi = np.minimum(pa, pb), np.maximum(pa, pb)
            meets = (hi[:, 0] >= xmin) & (lo[:, 0] <= xmax) & (hi[:, 1] >= ymin) & (lo[:, 1] <= ymax)
            a, b, pa, pb = a[meets], b[meets], pa[meets], pb[meets]
        index = index or self.obstacle_index()
        blocked = ~index.visible_mask(pa, pb)
        for i, j in zip(a[blocked].tolist(), b[blocked].tolist()):
            self._visibility.remove_edge(i, j)
        return int(blocked.sum())

    # Interaction edges and affordances

    def set_interaction_edge(self, source: int, target: int, object_id: str, cost: float, primitive: PushPrimitive):
        """Installs or replaces the interaction edge from source to target."""
        edge = InteractionEdge(source, target, object_id, cost, primitive)
        if source not in self._vertices or target not in self._vertices:
            raise KeyError(f'unknown waypoint in ({source}, {target})')
        self._interaction.add_edge(source, target, edge=edge)

    def remove_interaction_edge(self, source: int, target: int):
        if self._interaction.has_edge(source, target):
            self._interaction.remove_edge(source, target)

    def interaction_edge(self, source: int, target: int) -> InteractionEdge | None:
        if self._interaction.has_edge(source, target):
            return self._interaction[source][target]['edge']
        return None

    def interaction_edges(self, object_id: str = None) -> list[InteractionEdge]:
        edges = [d['edge'] for _, _, d in self._interaction.edges(data=True)
                 if object_id is None or d['edge'].object_id == object_id]
        return sorted(edges, key=lambda e: (e.source, e.target))

    def out_interactions(self, vid: int) -> list[InteractionEdge]:
        return [self._interaction[vid][t]['edge'] for t in sorted(self._interaction.successors(vid))]

    def remove_object_interactions(self, object_id: str) -> int:
        edges = self.interaction_edges(object_id)
        for e in edges:
            self._interaction.remove_edge(e.source, e.target)
        return len(edges)

    def affordance(self, object_id: str, config: InteractionConfig = InteractionConfig()) -> Affordance:
        return self._affordances.get(object_id) or default_affordance(object_id, config)

    def has_affordance(self, object_id: str) -> bool:
        return object_id in self._affordances

    def affordances(self) -> list[Affordance]:
        return [self._affordances[k] for k in sorted(self._affordances)]

    def set_affordance(self, affordance: Affordance):
        """Stores an affordance and rewrites the cost of every interaction edge of its object.
        A non-pushable object loses all its interaction edges."""
        self._affordances[affordance.object_id] = affordance
        if not affordance.pushable:
            self.remove_object_interactions(affordance.object_id)
            return
        for e in self.interaction_edges(affordance.object_id):
            cost = e.primitive.with_effort(affordance.effort)
            self._interaction.add_edge(e.source, e.target, edge=dataclasses.replace(e, cost=cost))

    def suppress_interaction(self, edge: InteractionEdge):
        """Removes an interaction edge and keeps merges from installing it again."""
        self._suppressed.append(SuppressedInteraction(edge.object_id, self._vertices[edge.source].position,
                                                      self._vertices[edge.target].position))
        self.remove_interaction_edge(edge.source, edge.target)

    def add_suppressed(self, entry: SuppressedInteraction):
        self._suppressed.append(entry)

    @property
    def suppressed(self) -> list[SuppressedInteraction]:
        return list(self._suppressed)

    def is_suppressed(self, object_id: str, source: Point2, target: Point2, radius: float) -> bool:
        return any(s.object_id == object_id and s.source.distance_to(source) <= radius
                   and s.target.distance_to(target) <= radius for s in self._suppressed)

    # Whole graph

    def new_polygon_id(self, prefix: str) -> str:
        i = len(self._polygons)
        while f'{prefix}{i}' in self._polygons:
            i += 1
        return f'{prefix}{i}'

    def snapshot(self) -> DVGraph:
        """An independent copy; vertex, polygon and edge values are immutable and shared."""
        other = DVGraph(self.frame)
        other._vertices = dict(self._vertices)
        other._polygons = dict(self._polygons)
        other._visibility = self._visibility.copy()
        other._interaction = self._interaction.copy()
        other._affordances = dict(self._affordances)
        other._next_id = self._next_id
        other._suppressed = list(self._suppressed)
        return other

    def check_frame(self, other: DVGraph):
        if other.frame != self.frame:
            raise FrameMismatchError(f'frame {other.frame!r} does not match {self.frame!r}')


def build_local_graph(polys: PolygonSetLocal, reduced: bool = False, frame: str = 'world') -> DVGraph:
    """Builds a DV-graph from one frame’s polygons: one vertex per polygon vertex and a visibility
    edge between every mutually visible pair. Movable polygons block visibility like background ones.

    :param polys: Extracted polygons.
    :param reduced: Keep only edges tangent at their polygon-vertex ends.
    :param frame: Frame name of the graph.
    :return: The graph, without waypoints or interaction edges.
    """
    graph = DVGraph(frame)
    for p in polys.background:
        graph.add_polygon(p)
    for oid, p in polys.movable:
        graph.add_polygon(p, oid)
    graph.connect_visible(graph.vertex_ids, reduced=reduced)
    return graph


def build_prior_graph(background: typ.Sequence[Polygon], movables: typ.Sequence[tuple[str, Polygon]] = (),
                      robot_radius: float = constants.ROBOT_RADIUS, simplify_tolerance: float = 0.1,
                      reduced: bool = True, max_range: float = 30.0, frame: str = 'world') -> DVGraph:
    """Builds a DV-graph from known physical polygons, used as a prior map.

    :param background: Wall polygons.
    :param movables: Object ids with their polygons.
    :param robot_radius: Inflation radius.
    :param simplify_tolerance: Tolerance of the simplification after inflation.
    :param reduced: Keep only tangent edges.
    :param max_range: Pairs farther apart are not connected.
    :param frame: Frame name of the graph.
    """
    inflated = [geometry.simplify(geometry.inflate(p, robot_radius), simplify_tolerance) for p in background]
    merged = geometry.polygon_parts(shapely.unary_union([p.shape for p in inflated]), keep_holes=True) \
        if inflated else []
    merged.sort(key=lambda g: (round(g.bounds[0], 6), round(g.bounds[1], 6)))
    graph = DVGraph(frame)
    for i, shape in enumerate(merged):
        graph.add_polygon(Polygon.from_shape(shape, PolygonClass.BACKGROUND, f'bg:{i}'))
    for oid, p in movables:
        inflated_p = geometry.simplify(geometry.inflate(p, robot_radius), simplify_tolerance)
        graph.add_polygon(inflated_p.with_id(f'mov:{oid}', PolygonClass.MOVABLE), oid)
    graph.connect_visible(graph.vertex_ids, reduced=reduced, max_range=max_range)
    return graph
