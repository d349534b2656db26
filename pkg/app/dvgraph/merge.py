"""Merging of a local DV-graph into the global one, with vote-based removal of vanished vertices."""
from __future__ import annotations

import dataclasses
import typing as typ

import numpy as np
import scipy.spatial
import shapely
import shapely.geometry as sg

from .graph import DVGraph, VertexKind
from .. import constants, geometry
from ..config import MappingConfig
from ..logging import logger
from ..model import Point2, Polygon, PolygonClass

# Weight of the new observation in the smoothed position of a matched vertex
SMOOTHING = 0.5
# Vertices this close to the former place of a moved object are reconnected
_VACATED_MARGIN = 3.0


class FieldOfView:
    """Sensor coverage of one frame: within range and not occluded by the currently observed polygons."""

    def __init__(self, origin: Point2, max_range: float, blockers: typ.Sequence[Polygon] = ()):
        self.origin = origin
        self.max_range = max_range
        self._index = geometry.ObstacleIndex(blockers)

    def sees(self, p: Point2) -> bool:
        return bool(self.sees_all(np.array([p.as_tuple()]))[0])

    def sees_all(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        o = np.array(self.origin.as_tuple())
        in_range = np.hypot(*(points - o).T) <= self.max_range
        visible = np.zeros(len(points), dtype=bool)
        if in_range.any():
            starts = np.repeat(o[None, :], int(in_range.sum()), axis=0)
            visible[in_range] = self._index.visible_mask(starts, points[in_range])
        return visible


@dataclasses.dataclass
class _MergeState:
    graph: DVGraph
    config: MappingConfig
    # Local vertex id -> vertex id in the merged graph
    mapping: dict[int, int] = dataclasses.field(default_factory=dict)
    matched: set[int] = dataclasses.field(default_factory=set)
    dirty: set[int] = dataclasses.field(default_factory=set)


def associate(global_graph: DVGraph, local: DVGraph, radius: float) -> dict[int, int]:
    """Greedy nearest-first matching of local polygon vertices to global ones of the same class and object.

    :return: Local vertex id -> global vertex id.
    """
    g_ids = [v.id for v in global_graph.vertices() if v.kind == VertexKind.POLYGON_VERTEX]
    l_ids = [v.id for v in local.vertices() if v.kind == VertexKind.POLYGON_VERTEX]
    if not g_ids or not l_ids:
        return {}
    tree = scipy.spatial.cKDTree(global_graph.positions(g_ids))
    l_pos = local.positions(l_ids)
    candidates = []
    for li, neighbors in zip(l_ids, tree.query_ball_point(l_pos, radius)):
        lv = local.vertex(li)
        for k in neighbors:
            gv = global_graph.vertex(g_ids[k])
            if _signature(global_graph, gv) == _signature(local, lv):
                candidates.append((lv.position.distance_to(gv.position), li, gv.id))
    candidates.sort()
    matches: dict[int, int] = {}
    used: set[int] = set()
    for _, li, gi in candidates:
        if li not in matches and gi not in used:
            matches[li] = gi
            used.add(gi)
    return matches


def _signature(graph: DVGraph, v) -> tuple:
    kind = graph.polygon_record(v.polygon_id).kind if v.polygon_id is not None else None
    return kind, v.object_id


def merge_local_into_global(global_graph: DVGraph, local: DVGraph, fov: FieldOfView = None,
                            config: MappingConfig = MappingConfig(), reduced: bool = True) -> DVGraph:
    """Merges a local DV-graph into a copy of the global one.

    Matched polygon vertices are smoothed towards their new observation. Local background polygons are
    united with the global polygons they touch. Observed movable objects get their polygon, waypoints and
    interaction edges replaced. Unmatched global vertices in view are voted out after
    ``config.voting_threshold`` consecutive updates; vertices out of view are left alone.

    :param global_graph: The global graph; it is not modified.
    :param local: The local graph of the current frame, in the same frame.
    :param fov: Sensor coverage of the frame; no vote is cast without it.
    :param config: Association radius and voting threshold.
    :param reduced: Connect new vertices with tangent edges only.
    :return: The merged graph.
    :raise FrameMismatchError: If the graphs are expressed in different frames.
    """
    global_graph.check_frame(local)
    result = global_graph.snapshot()
    state = _MergeState(result, config)
    matches = associate(global_graph, local, config.association_radius)
    _smooth(state, local, matches)

    observed_objects = sorted({r.object_id for r in local.polygon_records() if r.kind == PolygonClass.MOVABLE})
    for record in local.polygon_records():
        if record.kind == PolygonClass.BACKGROUND:
            _merge_background(state, local, record.id)
    for oid in observed_objects:
        _replace_object(state, local, oid)
    _vote(state, global_graph, local, fov)
    _drop_orphans(state)

    index = result.obstacle_index()
    bounds = _bounds(local)
    if bounds is not None:
        result.revalidate_edges(bounds, index)
    dirty = sorted(v for v in state.dirty if result.has_vertex(v))
    result.refresh_edge_lengths(dirty)
    result.connect_visible(dirty, index=index, reduced=reduced)
    for oid in observed_objects:
        _copy_interactions(state, local, oid)
    return result


def _bounds(local: DVGraph) -> tuple[float, float, float, float] | None:
    if not len(local):
        return None
    pos = local.positions()
    margin = 1.0
    return (pos[:, 0].min() - margin, pos[:, 1].min() - margin,
            pos[:, 0].max() + margin, pos[:, 1].max() + margin)


def _smooth(state: _MergeState, local: DVGraph, matches: dict[int, int]):
    graph = state.graph
    for li, gi in sorted(matches.items()):
        old = graph.vertex(gi)
        new = local.vertex(li).position
        smoothed = old.position * (1 - SMOOTHING) + new * SMOOTHING
        graph.replace_vertex(dataclasses.replace(old, position=smoothed, unobserved_count=0))
        state.mapping[li] = gi
        state.matched.add(gi)
        if smoothed.distance_to(old.position) > constants.EPSILON:
            state.dirty.add(gi)


def _local_shape(state: _MergeState, local: DVGraph, polygon_id: str) -> sg.Polygon:
    """The local polygon with matched vertices snapped onto their merged positions."""
    record = local.polygon_record(polygon_id)
    coords = []
    for li in record.vertex_ids:
        gi = state.mapping.get(li)
        p = state.graph.vertex(gi).position if gi is not None else local.vertex(li).position
        coords.append(p.as_tuple())
    shape = sg.Polygon(coords)
    return shape if shape.is_valid else shapely.make_valid(shape)


def _merge_background(state: _MergeState, local: DVGraph, polygon_id: str):
    graph = state.graph
    shape = _local_shape(state, local, polygon_id)
    if shape.is_empty:
        return
    touching = [r for r in graph.polygon_records() if r.kind == PolygonClass.BACKGROUND
                and graph.polygon(r.id).shape.dwithin(shape, constants.EPSILON)]
    if len(touching) == 1:
        kept = graph.polygon(touching[0].id).shape.buffer(constants.EPSILON, join_style='mitre')
        if kept.covers(shape):
            return
    united = shapely.unary_union([shape] + [graph.polygon(r.id).shape for r in touching])
    # Existing vertices are reused when the union keeps their exact coordinates
    by_coords: dict[tuple[float, float], int] = {}
    for r in touching:
        for vid in r.vertex_ids:
            by_coords.setdefault(graph.vertex(vid).position.as_tuple(), vid)
    for li in local.polygon_record(polygon_id).vertex_ids:
        gi = state.mapping.get(li)
        if gi is not None:
            by_coords.setdefault(graph.vertex(gi).position.as_tuple(), gi)
    for r in touching:
        graph.remove_polygon(r.id, keep_vertices=True)
    reused: set[int] = set()
    for part in geometry.polygon_parts(united, keep_holes=True):
        try:
            polygon = Polygon.from_shape(part, PolygonClass.BACKGROUND, graph.new_polygon_id('bg:'))
        except ValueError:
            continue
        ids = []
        for v in polygon.vertices:
            vid = by_coords.get(v.as_tuple())
            if vid is None or vid in reused or not graph.has_vertex(vid):
                vid = graph.add_vertex(v, VertexKind.POLYGON_VERTEX)
                state.dirty.add(vid)
            reused.add(vid)
            ids.append(vid)
        graph.add_polygon(polygon, vertex_ids=ids)
    for vid in set(by_coords.values()) - reused:
        if graph.has_vertex(vid) and graph.vertex(vid).polygon_id is None:
            _remove(state, vid)
    for li in local.polygon_record(polygon_id).vertex_ids:
        gi = state.mapping.get(li)
        if gi is not None and gi not in reused:
            state.mapping.pop(li)


def _replace_object(state: _MergeState, local: DVGraph, object_id: str):
    """Replaces the polygon, waypoints and interaction edges of an observed object by the local ones."""
    graph = state.graph
    old = [r for r in graph.polygon_records() if r.object_id == object_id and r.kind == PolygonClass.MOVABLE]
    old_shapes = [graph.polygon(r.id) for r in old]
    old_vertices = {vid for r in old for vid in r.vertex_ids}
    for r in old:
        graph.remove_polygon(r.id, keep_vertices=True)
    graph.remove_object_interactions(object_id)
    reused: set[int] = set()
    new_shapes = []
    for record in local.polygon_records():
        if record.object_id != object_id or record.kind != PolygonClass.MOVABLE:
            continue
        ids = []
        for li in record.vertex_ids:
            gi = state.mapping.get(li)
            if gi is None or gi not in old_vertices or gi in reused:
                gi = graph.add_vertex(local.vertex(li).position, VertexKind.POLYGON_VERTEX)
                state.dirty.add(gi)
                state.mapping[li] = gi
            reused.add(gi)
            ids.append(gi)
        polygon = local.polygon(record.id)
        if record.id in {r.id for r in graph.polygon_records()}:
            polygon = polygon.with_id(graph.new_polygon_id(f'mov:{object_id}#'))
        graph.add_polygon(polygon, object_id, ids)
        new_shapes.append(polygon)
    for vid in old_vertices - reused:
        if graph.has_vertex(vid):
            _remove(state, vid)
    _replace_waypoints(state, local, object_id)
    if _moved(old_shapes, new_shapes, state.config.association_radius):
        _touch_around(state, old_shapes)
    if local.has_affordance(object_id) and not graph.has_affordance(object_id):
        graph.set_affordance(local.affordance(object_id))


def _replace_waypoints(state: _MergeState, local: DVGraph, object_id: str):
    """Moves the old waypoints of an object onto the nearest new ones, keeping their ids."""
    graph = state.graph
    old = {w.id: w for w in graph.waypoints(object_id)}
    for w in local.waypoints(object_id):
        near = [(o.position.distance_to(w.position), o.id) for o in old.values()
                if o.position.distance_to(w.position) <= state.config.association_radius]
        if near:
            _, vid = min(near)
            previous = old.pop(vid)
            graph.replace_vertex(dataclasses.replace(previous, position=w.position, component_id=w.component_id))
            if previous.position.distance_to(w.position) > constants.EPSILON:
                state.dirty.add(vid)
        else:
            vid = graph.add_vertex(w.position, VertexKind.TOPO_WAYPOINT, object_id=object_id,
                                   component_id=w.component_id)
            state.dirty.add(vid)
        state.mapping[w.id] = vid
    for vid in sorted(old):
        _remove(state, vid)


def _moved(old: list[Polygon], new: list[Polygon], radius: float) -> bool:
    if len(old) != len(new):
        return True
    return any(geometry.hausdorff(a, b) > radius for a, b in zip(old, new))


def _touch_around(state: _MergeState, shapes: list[Polygon]):
    """Marks the vertices around a vacated place for reconnection."""
    if not shapes:
        return
    area = shapely.unary_union([s.shape for s in shapes]).buffer(_VACATED_MARGIN)
    for v in state.graph.vertices():
        if area.contains(sg.Point(v.position.as_tuple())):
            state.dirty.add(v.id)


def _copy_interactions(state: _MergeState, local: DVGraph, object_id: str):
    graph = state.graph
    if graph.has_affordance(object_id) and not graph.affordance(object_id).pushable:
        return
    for e in local.interaction_edges(object_id):
        s, t = state.mapping.get(e.source), state.mapping.get(e.target)
        if s is None or t is None or not graph.has_vertex(s) or not graph.has_vertex(t):
            continue
        if graph.is_suppressed(object_id, graph.vertex(s).position, graph.vertex(t).position,
                               state.config.association_radius):
            continue
        graph.set_interaction_edge(s, t, object_id, e.cost, e.primitive)


def _vote(state: _MergeState, global_graph: DVGraph, local: DVGraph, fov: FieldOfView | None):
    graph = state.graph
    candidates = [v for v in graph.vertices() if v.kind == VertexKind.POLYGON_VERTEX
                  and v.id not in state.matched and global_graph.has_vertex(v.id) and v.polygon_id is not None]
    if not candidates:
        return
    observed = {kind: shapely.unary_union([local.polygon(r.id).shape.exterior for r in local.polygon_records()
                                           if r.kind == kind]) for kind in PolygonClass}
    points = np.array([v.position.as_tuple() for v in candidates])
    in_view = fov.sees_all(points) if fov is not None else np.zeros(len(candidates), dtype=bool)
    for v, seen in zip(candidates, in_view.tolist()):
        if not graph.has_vertex(v.id):
            continue
        v = graph.vertex(v.id)
        kind = graph.polygon_record(v.polygon_id).kind
        boundary = observed[kind]
        if not boundary.is_empty and boundary.dwithin(sg.Point(v.position.as_tuple()), state.config.association_radius):
            graph.replace_vertex(dataclasses.replace(v, unobserved_count=0))
        elif seen:
            count = v.unobserved_count + 1
            if count >= state.config.voting_threshold:
                logger.info(f'vertex {v.id} of {v.polygon_id} voted out')
                _remove(state, v.id)
            else:
                graph.replace_vertex(dataclasses.replace(v, unobserved_count=count))


def _remove(state: _MergeState, vid: int):
    graph = state.graph
    state.dirty.update(graph.neighbors(vid))
    state.dirty.discard(vid)
    graph.remove_vertex(vid)


def _drop_orphans(state: _MergeState):
    """Removes the waypoints and interactions of objects whose polygon is gone."""
    graph = state.graph
    alive = {r.object_id for r in graph.polygon_records() if r.kind == PolygonClass.MOVABLE}
    for w in graph.waypoints():
        if w.object_id not in alive:
            _remove(state, w.id)
    for e in graph.interaction_edges():
        if e.object_id not in alive:
            graph.remove_interaction_edge(e.source, e.target)
    for v in graph.vertices():
        if v.kind == VertexKind.POLYGON_VERTEX and v.polygon_id is None:
            _remove(state, v.id)
