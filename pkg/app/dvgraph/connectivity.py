"""Splitting of the local free space by a blocking movable object, and topological waypoints."""
from __future__ import annotations

import dataclasses
import functools
import typing as typ

import cv2
import numpy as np
import scipy.ndimage
import shapely
import shapely.geometry as sg

from .. import constants, geometry
from ..config import MappingConfig
from ..extraction import GridFrame, PolygonSetLocal, fill_polygon
from ..logging import logger
from ..model import Point2, Polygon

# Minimal distance between two intersection points for them to be distinct
_MERGE_DISTANCE = 1e-4


@dataclasses.dataclass(frozen=True)
class TopoWaypoint:
    """A representative free point of one component, placed outside a free gap of the object boundary.

    :param position: The waypoint.
    :param object_id: The object whose placement splits the free space.
    :param component_id: The component holding the waypoint.
    :param gap: The two intersection points bounding the gap.
    :param boundary_point: Where the gap normal leaves the object boundary.
    :param offset: Distance from boundary_point to position.
    """
    position: Point2
    object_id: str
    component_id: int
    gap: tuple[Point2, Point2]
    boundary_point: Point2
    offset: float


@dataclasses.dataclass(frozen=True, eq=False)
class FreeComponent:
    """One locally connected part of the free space around a movable object.

    :param id: Index among the components of the analysis.
    :param object_id: The analysed object.
    :param frame: The grid frame of the mask.
    :param mask: Free cells of the component.
    :param region: Vector free region, holes included.
    :param waypoint: Its waypoint, None if none could be placed.
    """
    id: int
    object_id: str
    frame: GridFrame
    mask: np.ndarray
    region: sg.Polygon | None
    waypoint: TopoWaypoint | None = None

    @functools.cached_property
    def cell_count(self) -> int:
        return int(self.mask.sum())

    def contains(self, p: Point2) -> bool:
        cell = self.frame.to_cell(p)
        return cell is not None and bool(self.mask[cell])


def free_labels(polys: PolygonSetLocal, object_id: str) -> tuple[np.ndarray, np.ndarray]:
    """Flood fill of the free cells with the background and one movable object as obstacles.

    :return: The 4-connected label image and the object mask.
    """
    frame = polys.frame
    occupied = np.zeros((frame.cells, frame.cells), dtype=np.uint8)
    for p in polys.background:
        fill_polygon(occupied, frame, p)
    movable = np.zeros_like(occupied)
    fill_polygon(movable, frame, polys.movable_polygon(object_id))
    labels, _ = scipy.ndimage.label(~(occupied | movable).astype(bool))
    return labels, movable.astype(bool)


def intersection_points(movable: Polygon, background: typ.Sequence[Polygon]) -> list[Point2]:
    """Points where the object boundary crosses background boundaries, ordered along the object boundary.
    Shared boundary stretches contribute their end points.
    """
    ring = movable.shape.exterior
    found: list[sg.Point] = []
    for b in background:
        if not ring.intersects(b.shape.exterior):
            continue
        hit = ring.intersection(b.shape.exterior)
        for part in getattr(hit, 'geoms', [hit]):
            if isinstance(part, sg.Point):
                found.append(part)
            elif isinstance(part, sg.LineString) and not part.is_empty:
                coords = list(part.coords)
                found.extend([sg.Point(coords[0]), sg.Point(coords[-1])])
    found.sort(key=ring.project)
    points: list[Point2] = []
    for pt in found:
        p = Point2(pt.x, pt.y)
        if all(p.distance_to(q) > _MERGE_DISTANCE for q in points):
            points.append(p)
    return points


def _free_gaps(movable: Polygon, points: list[Point2], blocked) -> list[tuple[Point2, Point2]]:
    """Consecutive intersection point pairs whose object boundary stretch lies in free space."""
    ring = movable.shape.exterior
    length = ring.length
    gaps = []
    n = len(points)
    for i in range(n):
        a, b = points[i], points[(i + 1) % n]
        sa, sb = ring.project(sg.Point(a.as_tuple())), ring.project(sg.Point(b.as_tuple()))
        if sb <= sa:
            sb += length
        middle = ring.interpolate(((sa + sb) / 2) % length)
        if not blocked.contains(middle):
            gaps.append((a, b))
    return gaps


def _boundary_hit(movable: Polygon, origin: Point2, direction: Point2) -> Point2:
    starts = movable.coords
    ends = np.roll(starts, -1, axis=0)
    hits, _ = geometry.raycast(origin, np.array([direction.as_tuple()]), starts, ends, np.inf)
    if np.isfinite(hits[0]):
        return origin + direction * float(hits[0])
    return origin


def connectivity_analysis(polys: PolygonSetLocal, object_id: str, config: MappingConfig = MappingConfig()) \
        -> list[FreeComponent]:
    """Splits the local free space around a movable object into components and places one waypoint per
    component, beyond the free gaps between the object and the background.

    :param polys: Polygons of the current frame.
    :param object_id: The object to analyse.
    :param config: Grid settings; waypoint_offset is the maximal waypoint distance from the object.
    :return: The components touching the object. A single component, without waypoint, if the object
        does not split the free space.
    :raise KeyError: If the object is not in polys.
    """
    movable = polys.movable_polygon(object_id)
    if movable is None:
        raise KeyError(object_id)
    frame = polys.frame
    labels, mask = free_labels(polys, object_id)
    ring = cv2.dilate(mask.astype(np.uint8), np.ones((3, 3), dtype=np.uint8)).astype(bool)
    adjacent = sorted(set(np.unique(labels[ring]).tolist()) - {0})
    if len(adjacent) <= 1:
        label = adjacent[0] if adjacent else 0
        return [FreeComponent(0, object_id, frame, labels == label if label else labels > 0, None)]

    regions = _free_regions(polys)
    blocked = shapely.unary_union([p.shape for p in polys.background])
    others = [p for p in polys.polygons() if p.id != movable.id]
    points = intersection_points(movable, polys.background)
    waypoints: dict[int, TopoWaypoint] = {}
    for a, b in _free_gaps(movable, points, blocked):
        placed = _place_waypoint(movable, a, b, others, labels, frame, config.waypoint_offset)
        if placed is None:
            logger.warning(f'no waypoint for the gap {a} {b} of {object_id!r}')
            continue
        position, label, boundary_point, offset = placed
        if label in adjacent and label not in waypoints:
            waypoints[label] = TopoWaypoint(position, object_id, adjacent.index(label), (a, b), boundary_point, offset)

    components = []
    for i, label in enumerate(adjacent):
        component_mask = labels == label
        waypoint = waypoints.get(label)
        if waypoint is None:
            logger.warning(f'component {i} of {object_id!r} has no waypoint')
        region = _region_of(regions, component_mask, frame, waypoint)
        components.append(FreeComponent(i, object_id, frame, component_mask, region, waypoint))
    return components


def _place_waypoint(movable: Polygon, a: Point2, b: Point2, others: list[Polygon], labels: np.ndarray,
                    frame: GridFrame, max_offset: float) -> tuple[Point2, int, Point2, float] | None:
    d = b - a
    if d.norm < constants.EPSILON:
        return None
    normal = Point2(d.y, -d.x).normalized()
    middle = (a + b) * 0.5
    boundary_point = _boundary_hit(movable, middle, normal)
    here = sg.Point(boundary_point.as_tuple())
    d_obs = min((o.shape.distance(here) for o in others), default=max_offset * 2)
    offset = min(max_offset, d_obs / 2)
    for attempt in (offset, offset / 2):
        position = boundary_point + normal * attempt
        if any(o.contains(position) for o in others) or movable.contains(position):
            continue
        label = _label_near(labels, frame, position)
        if label:
            return position, label, boundary_point, attempt
    return None


def _label_near(labels: np.ndarray, frame: GridFrame, p: Point2) -> int:
    """Label of the cell under p, or of a free neighbor when that cell is occupied."""
    cell = frame.to_cell(p)
    if cell is None:
        return 0
    row, col = cell
    if labels[row, col]:
        return int(labels[row, col])
    best, best_d = 0, np.inf
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            r, c = row + dr, col + dc
            if 0 <= r < labels.shape[0] and 0 <= c < labels.shape[1] and labels[r, c]:
                dist = frame.cell_center(r, c).distance_to(p)
                if dist < best_d:
                    best, best_d = int(labels[r, c]), dist
    return best


def _free_regions(polys: PolygonSetLocal) -> list[sg.Polygon]:
    free = polys.frame.box().difference(shapely.unary_union([p.shape for p in polys.polygons()]))
    parts = [g for g in getattr(free, 'geoms', [free]) if isinstance(g, sg.Polygon) and not g.is_empty]
    for part in parts:
        shapely.prepare(part)
    return parts


def _region_of(regions: list[sg.Polygon], mask: np.ndarray, frame: GridFrame,
               waypoint: TopoWaypoint | None) -> sg.Polygon | None:
    if waypoint is not None:
        here = sg.Point(waypoint.position.as_tuple())
        for r in regions:
            if r.covers(here):
                return r
    rows, cols = np.nonzero(mask)
    if not len(rows):
        return None
    centers = frame.pixels_to_world(np.stack([cols, rows], axis=1).astype(float))
    best, best_count = None, 0
    for r in regions:
        count = int(shapely.contains_xy(r, centers[:, 0], centers[:, 1]).sum())
        if count > best_count:
            best, best_count = r, count
    return best


def region_vertices(region: sg.Polygon) -> list[Point2]:
    """Vertices of a free region, outer ring and holes."""
    rings = [region.exterior, *region.interiors]
    return [Point2(x, y) for ring in rings for x, y in list(ring.coords)[:-1]]


def verify_topo_visibility(waypoint: TopoWaypoint, component: FreeComponent) -> int:
    """Counts the vertices of a component visible from its waypoint through the component’s free space.

    :param waypoint: A waypoint inside the component.
    :param component: The component.
    :return: The number of visible component vertices.
    """
    if component.region is None:
        return 0
    room = component.region.buffer(constants.EPSILON, join_style='mitre')
    shapely.prepare(room)
    origin = waypoint.position.as_tuple()
    vertices = region_vertices(component.region)
    if not vertices:
        return 0
    segments = shapely.linestrings([[origin, v.as_tuple()] for v in vertices])
    return int(shapely.covers(room, segments).sum())
