"""2D geometry kernel: visibility, width, offsetting, clipping, hulls, rays and arcs."""
from __future__ import annotations

import math
import typing as typ

import numpy as np
import scipy.spatial
import shapely
import shapely.geometry as sg

from . import constants
from .model import Point2, Polygon, PolygonClass, Pose2


class GeometryError(ValueError):
    pass


def segment_visible(a: Point2, b: Point2, obstacles: typ.Iterable[Polygon]) -> bool:
    """Tells whether the open segment (a, b) avoids every obstacle interior.
    Touching a boundary, including running along an edge or grazing a vertex, keeps visibility.

    :param a: First endpoint.
    :param b: Second endpoint.
    :param obstacles: Blocking polygons.
    :return: True if visible; always True when a == b.
    """
    if a.distance_to(b) < constants.EPSILON:
        return True
    line = sg.LineString([a.as_tuple(), b.as_tuple()])
    return not any(not o.core.is_empty and o.core.intersects(line) for o in obstacles)


class ObstacleIndex:
    """Spatial index over a set of blocking polygons, for batched visibility queries."""

    def __init__(self, obstacles: typ.Sequence[Polygon]):
        self._obstacles = [o for o in obstacles if not o.core.is_empty]
        self._tree = shapely.STRtree([o.core for o in self._obstacles]) if self._obstacles else None

    @property
    def obstacles(self) -> list[Polygon]:
        return list(self._obstacles)

    def __len__(self):
        return len(self._obstacles)

    def visible_mask(self, starts: np.ndarray, ends: np.ndarray, ignore: typ.Collection[int] = ()) -> np.ndarray:
        """Batched segment_visible.

        :param starts: (n, 2) array of first endpoints.
        :param ends: (n, 2) array of second endpoints.
        :param ignore: Indices of obstacles that must not block.
        :return: Boolean array of length n.
        """
        starts = np.asarray(starts, dtype=float).reshape(-1, 2)
        ends = np.asarray(ends, dtype=float).reshape(-1, 2)
        visible = np.ones(len(starts), dtype=bool)
        if self._tree is None or len(starts) == 0:
            return visible
        lines = shapely.linestrings(np.stack([starts, ends], axis=1))
        hits = self._tree.query(lines, predicate='intersects')
        if ignore:
            keep = ~np.isin(hits[1], np.fromiter(ignore, dtype=int))
            hits = hits[:, keep]
        visible[hits[0]] = False
        degenerate = np.hypot(*(ends - starts).T) < constants.EPSILON
        visible[degenerate] = True
        return visible

    def containing(self, p: Point2) -> list[int]:
        """Indices of the obstacles whose interior contains p."""
        if self._tree is None:
            return []
        return [int(i) for i in self._tree.query(sg.Point(p.x, p.y), predicate='within')]

    def is_free(self, p: Point2) -> bool:
        return not self.containing(p)


def polygon_width(p: Polygon) -> float:
    """Minimum distance between two parallel supporting lines, by rotating calipers on the hull.

    :param p: A polygon.
    :return: The width; 0 for collinear input.
    """
    try:
        hull = _hull_coords(p.coords)
    except GeometryError:
        return 0.0
    return caliper_width(hull)


def caliper_width(hull: np.ndarray) -> float:
    """Rotating-calipers width of a convex CCW vertex array."""
    h = len(hull)
    if h < 3:
        return 0.0

    def height(edge: int, k: int) -> float:
        a, b = hull[edge], hull[(edge + 1) % h]
        ex, ey = b[0] - a[0], b[1] - a[1]
        return (ex * (hull[k][1] - a[1]) - ey * (hull[k][0] - a[0])) / math.hypot(ex, ey)

    best = math.inf
    j = 1
    for i in range(h):
        steps = 0
        while steps < h and height(i, (j + 1) % h) > height(i, j):
            j = (j + 1) % h
            steps += 1
        best = min(best, height(i, j))
    return max(best, 0.0)


def convex_hull(points: typ.Sequence[Point2], kind: PolygonClass = PolygonClass.BACKGROUND,
                ident: str = 'hull') -> Polygon:
    """Counter-clockwise convex hull of a point set.

    :raise GeometryError: On fewer than 3 points or collinear input.
    """
    coords = np.array([p.as_tuple() for p in points], dtype=float)
    hull = _hull_coords(coords)
    return Polygon.from_coords(hull, kind, ident)


def _hull_coords(coords: np.ndarray) -> np.ndarray:
    if len(coords) < 3:
        raise GeometryError(f'convex hull needs 3 points, got {len(coords)}')
    try:
        hull = scipy.spatial.ConvexHull(coords)
    except scipy.spatial.QhullError as e:
        raise GeometryError(f'degenerate point set: {str(e).splitlines()[0]}')
    # For 2D input Qhull lists hull vertices counter-clockwise
    return coords[hull.vertices]


def inflate(p: Polygon, r: float, sagitta: float = constants.CHORD_SAGITTA) -> Polygon:
    """Outward offset of a polygon by r: its Minkowski sum with a regular polygon circumscribing
    the disk of radius r (see offset_disk). The output contains the exact offset, stays within
    sagitta of it, and grows monotonically with r.

    :param p: Polygon to offset.
    :param r: Offset distance.
    :param sagitta: Maximal deviation from the exact offset.
    :raise GeometryError: If r < 0.
    """
    if r < 0:
        raise GeometryError(f'negative offset {r}')
    if r == 0:
        return p
    sides, inradius = offset_disk(r, sagitta)
    # Edge normals at multiples of 2*pi/sides, so axis-aligned edges move by exactly the inradius
    angles = (np.arange(sides) + 0.5) * (2 * math.pi / sides)
    disk = inradius / math.cos(math.pi / sides) * np.column_stack([np.cos(angles), np.sin(angles)])
    coords = p.coords
    sweeps = [sg.MultiPoint(np.vstack([a + disk, b + disk])).convex_hull
              for a, b in zip(coords, np.roll(coords, -1, axis=0))]
    shape = shapely.unary_union([p.shape, *sweeps])
    return Polygon.from_shape(_largest_part(shape), p.kind, p.id)


def offset_disk(r: float, sagitta: float = constants.CHORD_SAGITTA) -> tuple[int, float]:
    """Side count and inradius of the regular polygon standing in for the disk of radius r.

    Side counts double along a fixed ladder starting at 8, and the inradius never drops below the
    circumradius used just before a doubling, so the polygons for growing r are nested.
    """
    # Headroom for the flat stretch after each doubling
    budget = 0.75 * sagitta
    sides, floor = 8, 0.0
    while r * (1 / math.cos(math.pi / sides) - 1) > budget:
        limit = budget / (1 / math.cos(math.pi / sides) - 1)
        floor = limit + budget
        sides *= 2
    return sides, max(r, floor)


def polygon_intersection(a: Polygon, b: Polygon) -> list[Polygon]:
    """Intersection of two polygons as a list of simple polygons, snapped on the tolerance grid.

    :return: The polygons covering a ∩ b; empty if they only touch or are disjoint.
    """
    sa = shapely.set_precision(a.shape, constants.EPSILON)
    sb = shapely.set_precision(b.shape, constants.EPSILON)
    region = sa.intersection(sb)
    return [Polygon.from_shape(part, a.kind, f'{a.id}&{b.id}#{i}')
            for i, part in enumerate(polygon_parts(region))]


def polygon_parts(geometry, keep_holes: bool = False) -> list[sg.Polygon]:
    """Non-degenerate polygonal parts of any shapely geometry.

    :param geometry: Any shapely geometry.
    :param keep_holes: If true, parts enclosing holes of at least HOLE_MIN_AREA are cut into simple
        pieces around them instead of being filled.
    :return: Simple polygons.
    """
    if geometry is None or geometry.is_empty:
        return []
    if isinstance(geometry, sg.Polygon):
        parts = [geometry]
    elif hasattr(geometry, 'geoms'):
        parts = [g for sub in geometry.geoms for g in polygon_parts(sub, keep_holes)]
    else:
        parts = []
    parts = [g for g in parts if g.area > constants.EPSILON ** 2]
    if keep_holes:
        return [piece for g in parts for piece in split_holes(g)]
    return [sg.Polygon(g.exterior) for g in parts]


def split_holes(shape: sg.Polygon, overlap: float = constants.HOLE_CUT_OVERLAP) -> list[sg.Polygon]:
    """Cuts a polygon with holes into simple polygons whose union is the polygon.

    Each significant hole is cut by a vertical line; the two sides overlap by 2 · overlap along the cut
    so that no segment can slip between them. Holes smaller than HOLE_MIN_AREA or too narrow to cut
    are filled.

    :param shape: The polygon.
    :param overlap: Half width of the overlap strip.
    :return: Hole-free polygons.
    """
    holes = [sg.Polygon(ring) for ring in shape.interiors]
    holes = [h for h in holes if h.area >= constants.HOLE_MIN_AREA and h.bounds[2] - h.bounds[0] > 4 * overlap]
    if not holes:
        return [sg.Polygon(shape.exterior)]
    hole = holes[0]
    x0, _, x1, _ = hole.bounds
    # Whole-meter cuts keep pieces stable while the hole grows
    cut = round(hole.centroid.x)
    if not x0 + 2 * overlap < cut < x1 - 2 * overlap:
        cut = (x0 + x1) / 2
    minx, miny, maxx, maxy = shape.bounds
    pieces = []
    sides = (sg.box(minx - 1, miny - 1, cut + overlap, maxy + 1), sg.box(cut - overlap, miny - 1, maxx + 1, maxy + 1))
    for side in sides:
        pieces.extend(polygon_parts(shape.intersection(side), keep_holes=True))
    return pieces


def _largest_part(geometry) -> sg.Polygon:
    parts = polygon_parts(geometry)
    if not parts:
        raise GeometryError('empty geometry')
    return max(parts, key=lambda g: g.area)


def simplify(p: Polygon, tolerance: float) -> Polygon:
    """Douglas-Peucker simplification that keeps the polygon valid."""
    shape = p.shape.simplify(tolerance, preserve_topology=True)
    try:
        return Polygon.from_shape(_largest_part(shape), p.kind, p.id)
    except (GeometryError, ValueError):
        return p


def hausdorff(a: Polygon, b: Polygon) -> float:
    """Hausdorff distance between the two boundaries."""
    return a.shape.exterior.hausdorff_distance(b.shape.exterior)


def integrate_arc(pose: Pose2, v: float, omega: float, dt: float) -> Pose2:
    """Exact unicycle motion for a constant twist.

    :param pose: Starting pose.
    :param v: Forward speed.
    :param omega: Yaw rate.
    :param dt: Duration.
    :return: The reached pose.
    """
    if abs(omega) < 1e-12:
        return Pose2(pose.x + v * dt * math.cos(pose.psi), pose.y + v * dt * math.sin(pose.psi), pose.psi)
    radius = v / omega
    psi = pose.psi + omega * dt
    return Pose2(pose.x + radius * (math.sin(psi) - math.sin(pose.psi)),
                 pose.y + radius * (math.cos(pose.psi) - math.cos(psi)),
                 psi)


def carry(body_pose: Pose2, carrier_before: Pose2, carrier_after: Pose2) -> Pose2:
    """Moves a pose rigidly attached to a carrier that went from one pose to another."""
    return carrier_after.compose(body_pose.relative_to(carrier_before))


def raycast(origin: Point2, directions: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray,
            max_range: float, chunk: int = 256) -> tuple[np.ndarray, np.ndarray]:
    """Casts rays against segments.

    :param origin: Common ray origin.
    :param directions: (k, 2) unit ray directions.
    :param seg_a: (m, 2) segment starts.
    :param seg_b: (m, 2) segment ends.
    :param max_range: Hits farther than this are ignored.
    :param chunk: Number of rays processed at once.
    :return: Two arrays of length k: the hit distance (inf if none) and the index of the hit segment (-1 if none).
    """
    k = len(directions)
    ranges = np.full(k, np.inf)
    indices = np.full(k, -1, dtype=int)
    if len(seg_a) == 0 or k == 0:
        return ranges, indices
    o = np.array(origin.as_tuple())
    e = seg_b - seg_a
    w = seg_a - o
    w_cross_e = w[:, 0] * e[:, 1] - w[:, 1] * e[:, 0]
    for start in range(0, k, chunk):
        d = directions[start:start + chunk]
        denom = d[:, 0, None] * e[None, :, 1] - d[:, 1, None] * e[None, :, 0]
        with np.errstate(divide='ignore', invalid='ignore'):
            t = w_cross_e[None, :] / denom
            s = (w[None, :, 0] * d[:, 1, None] - w[None, :, 1] * d[:, 0, None]) / denom
        valid = ((np.abs(denom) > 1e-12) & (t > constants.EPSILON) & (t <= max_range)
                 & (s >= -constants.EPSILON) & (s <= 1 + constants.EPSILON))
        t = np.where(valid, t, np.inf)
        best = np.argmin(t, axis=1)
        best_t = t[np.arange(len(d)), best]
        hit = np.isfinite(best_t)
        ranges[start:start + chunk] = best_t
        indices[start:start + chunk] = np.where(hit, best, -1)
    return ranges, indices


def polygon_edges(polygons: typ.Sequence[Polygon]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattens polygon boundaries into segment arrays.

    :return: Starts, ends and the index of the owning polygon for every edge.
    """
    if not polygons:
        return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
    starts, ends, owners = [], [], []
    for i, p in enumerate(polygons):
        c = p.coords
        starts.append(c)
        ends.append(np.roll(c, -1, axis=0))
        owners.append(np.full(len(c), i))
    return np.vstack(starts), np.vstack(ends), np.concatenate(owners)


def distance_to_boundary(p: Point2, polygon: Polygon) -> float:
    return polygon.shape.exterior.distance(sg.Point(p.x, p.y))
