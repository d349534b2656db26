import math

import numpy as np
import pytest
import shapely
import shapely.geometry as sg

from app import constants, geometry
from app.model import Point2, Polygon, PolygonClass, Pose2, normalize_angle

from conftest import rect, square


def _brute_width(points: np.ndarray) -> float:
    """Minimum projection extent over every edge normal of the hull and a dense angle sweep."""
    angles = np.linspace(0, math.pi, 3600, endpoint=False)
    hull = geometry.convex_hull([Point2(*p) for p in points])
    coords = hull.coords
    edges = np.roll(coords, -1, axis=0) - coords
    angles = np.concatenate([angles, np.arctan2(edges[:, 1], edges[:, 0]) + math.pi / 2])
    normals = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    projections = coords @ normals.T
    return float(np.min(projections.max(axis=0) - projections.min(axis=0)))


def _star(rng: np.random.Generator, cx: float = 0.0, cy: float = 0.0, extent: float = 2.0) -> Polygon:
    """Random simple polygon, star-shaped around (cx, cy)."""
    n = int(rng.integers(3, 10))
    angles = np.sort(rng.uniform(0, 2 * math.pi, n))
    if np.min(np.diff(np.append(angles, angles[0] + 2 * math.pi))) < 0.05:
        angles = np.linspace(0, 2 * math.pi, n, endpoint=False) + rng.uniform(0, 1)
    radii = rng.uniform(0.3, 1.0, n) * extent
    return Polygon.from_coords(np.column_stack([cx + radii * np.cos(angles), cy + radii * np.sin(angles)]))


def test_normalize_angle_range():
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)


def test_pose_compose_and_relative_are_inverse():
    base = Pose2(1, 2, 0.7)
    other = Pose2(-3, 0.5, -2.0)
    back = base.compose(other.relative_to(base))
    assert back.x == pytest.approx(other.x)
    assert back.y == pytest.approx(other.y)
    assert back.psi == pytest.approx(other.psi)


def test_polygon_is_counter_clockwise():
    p = Polygon.from_coords([(0, 0), (0, 1), (1, 1), (1, 0)])
    assert p.shape.exterior.is_ccw
    assert p.area == pytest.approx(1)


def test_polygon_rejects_degenerate_input():
    with pytest.raises(ValueError):
        Polygon.from_coords([(0, 0), (1, 1)])


def test_visibility_blocked_by_interior():
    wall = rect(1, -1, 2, 1)
    assert not geometry.segment_visible(Point2(0, 0), Point2(3, 0), [wall])
    assert geometry.segment_visible(Point2(0, 2), Point2(3, 2), [wall])


def test_visibility_survives_grazing():
    wall = rect(1, -1, 2, 1)
    # Along an edge and through a vertex
    assert geometry.segment_visible(Point2(0, 1), Point2(3, 1), [wall])
    assert geometry.segment_visible(Point2(0, 0), Point2(2, 2), [rect(1, -1, 2, 1)])
    assert geometry.segment_visible(Point2(5, 5), Point2(5, 5), [wall])


def test_obstacle_index_matches_single_queries():
    rng = np.random.default_rng(3)
    obstacles = [square(*rng.uniform(-5, 5, 2), rng.uniform(0.2, 1.0), f'o{i}', PolygonClass.BACKGROUND)
                 for i in range(12)]
    index = geometry.ObstacleIndex(obstacles)
    starts = rng.uniform(-6, 6, (200, 2))
    ends = rng.uniform(-6, 6, (200, 2))
    mask = index.visible_mask(starts, ends)
    expected = [geometry.segment_visible(Point2(*a), Point2(*b), obstacles) for a, b in zip(starts, ends)]
    assert mask.tolist() == expected


def test_obstacle_index_containment():
    index = geometry.ObstacleIndex([rect(0, 0, 1, 1), rect(2, 0, 3, 1)])
    assert index.containing(Point2(2.5, 0.5)) == [1]
    assert index.is_free(Point2(1.5, 0.5))


@pytest.mark.parametrize('coords, expected', [
    ([(0, 0), (4, 0), (4, 1), (0, 1)], 1.0),
    ([(0, 0), (2, 0), (1, math.sqrt(3))], math.sqrt(3)),
])
def test_width_of_known_shapes(coords, expected):
    assert geometry.polygon_width(Polygon.from_coords(coords)) == pytest.approx(expected)


def test_width_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        points = rng.uniform(-5, 5, (rng.integers(3, 12), 2))
        try:
            hull = geometry.convex_hull([Point2(*p) for p in points])
        except geometry.GeometryError:
            continue
        assert geometry.polygon_width(hull) == pytest.approx(_brute_width(points), abs=1e-9, rel=1e-9)


def test_convex_hull_needs_three_points():
    with pytest.raises(geometry.GeometryError):
        geometry.convex_hull([Point2(0, 0), Point2(1, 1)])
    with pytest.raises(geometry.GeometryError):
        geometry.convex_hull([Point2(0, 0), Point2(1, 1), Point2(2, 2)])


def test_inflate_contains_exact_offset():
    p = Polygon.from_coords([(0, 0), (2, 0), (1, 1.5)])
    inflated = geometry.inflate(p, 0.3)
    exact = p.shape.buffer(0.3, quad_segs=64)
    assert inflated.shape.buffer(1e-9).contains(exact)
    assert inflated.shape.hausdorff_distance(exact) <= constants.CHORD_SAGITTA + 1e-9


def test_inflate_by_zero_is_identity():
    p = square(0, 0, 1)
    assert geometry.inflate(p, 0) is p


def test_inflate_rejects_negative_offset():
    with pytest.raises(geometry.GeometryError):
        geometry.inflate(square(0, 0, 1), -0.1)


def test_visibility_is_symmetric():
    rng = np.random.default_rng(1)
    for _ in range(300):
        obstacles = [_star(rng, *rng.uniform(-4, 4, 2), extent=1.5) for _ in range(3)]
        a, b = (Point2(*rng.uniform(-5, 5, 2)) for _ in range(2))
        assert geometry.segment_visible(a, b, obstacles) == geometry.segment_visible(b, a, obstacles)


def test_width_scales_and_equals_hull_width():
    rng = np.random.default_rng(2)
    for _ in range(300):
        p = _star(rng)
        width = geometry.polygon_width(p)
        assert width == pytest.approx(geometry.polygon_width(geometry.convex_hull(p.vertices)), rel=1e-9)
        s = float(rng.uniform(0.1, 10))
        scaled = Polygon.from_coords(p.coords * s)
        assert geometry.polygon_width(scaled) == pytest.approx(s * width, rel=1e-9)


@pytest.mark.parametrize('r1, r2', [(0.1, 0.3), (0.18, 0.19), (0.181, 0.183), (0.5, 0.5001), (0.05, 1.2)])
def test_inflate_grows_with_offset(r1, r2):
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = _star(rng)
        small = geometry.inflate(p, r1)
        large = geometry.inflate(p, r2).shape.buffer(1e-9)
        # Vertices of the smaller offset are its outermost points
        assert all(large.covers(sg.Point(x, y)) for x, y in small.coords)
        xmin, ymin, xmax, ymax = small.shape.bounds
        xs, ys = rng.uniform(xmin, xmax, 500), rng.uniform(ymin, ymax, 500)
        inside = shapely.contains_xy(small.shape, xs, ys)
        assert shapely.contains_xy(large, xs[inside], ys[inside]).all()


def test_offset_disk_never_shrinks():
    radii = np.linspace(0.001, 3.0, 3000)
    disks = [geometry.offset_disk(r) for r in radii]
    for (r, (sides, inradius)), (n_next, rho_next) in zip(zip(radii, disks), disks[1:]):
        assert inradius >= r
        assert inradius / math.cos(math.pi / sides) - r <= constants.CHORD_SAGITTA
        circumradius = inradius / math.cos(math.pi / sides)
        assert n_next % sides == 0
        assert rho_next >= (circumradius if n_next > sides else inradius) - 1e-12


def test_intersection_area_is_commutative():
    rng = np.random.default_rng(4)
    for _ in range(300):
        a, b = _star(rng), _star(rng, *rng.uniform(-2, 2, 2))
        ab = sum(p.area for p in geometry.polygon_intersection(a, b))
        ba = sum(p.area for p in geometry.polygon_intersection(b, a))
        assert ab == pytest.approx(ba, abs=1e-9)


def test_intersection_of_overlapping_squares():
    parts = geometry.polygon_intersection(square(0, 0, 1), square(1, 1, 1))
    assert len(parts) == 1
    assert parts[0].area == pytest.approx(1)
    assert geometry.polygon_intersection(square(0, 0, 1), square(2, 0, 1)) == []


def test_split_holes_keeps_union_without_holes():
    ring = sg.box(0, 0, 10, 10).difference(sg.box(3, 3, 7, 7))
    pieces = geometry.split_holes(ring)
    assert len(pieces) >= 2
    assert all(not p.interiors for p in pieces)
    union = shapely.unary_union(pieces)
    assert union.symmetric_difference(ring).area == pytest.approx(0, abs=1e-9)


def test_split_holes_fills_small_holes():
    shape = sg.box(0, 0, 10, 10).difference(sg.box(5, 5, 5.1, 5.1))
    pieces = geometry.split_holes(shape)
    assert len(pieces) == 1
    assert pieces[0].area == pytest.approx(100)


def test_simplify_stays_close():
    circle = Polygon.from_shape(sg.Point(0, 0).buffer(2, quad_segs=32), PolygonClass.BACKGROUND, 'c')
    simple = geometry.simplify(circle, 0.05)
    assert len(simple) < len(circle)
    assert geometry.hausdorff(circle, simple) <= 0.05 + 1e-9


def test_integrate_arc_straight_and_turning():
    straight = geometry.integrate_arc(Pose2(0, 0, math.pi / 2), 1.0, 0.0, 2.0)
    assert straight.as_tuple() == pytest.approx((0, 2, math.pi / 2))
    half_circle = geometry.integrate_arc(Pose2(0, 0, 0), 1.0, 1.0, math.pi)
    assert half_circle.x == pytest.approx(0, abs=1e-12)
    assert half_circle.y == pytest.approx(2)
    assert half_circle.psi == pytest.approx(math.pi)


def test_carry_keeps_relative_pose():
    body = Pose2(1, 0, 0)
    moved = geometry.carry(body, Pose2(0, 0, 0), Pose2(0, 0, math.pi / 2))
    assert moved.as_tuple() == pytest.approx((0, 1, math.pi / 2))


def test_raycast_hits_nearest_segment():
    starts, ends, owners = geometry.polygon_edges([rect(2, -1, 3, 1), rect(5, -1, 6, 1)])
    directions = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    ranges, indices = geometry.raycast(Point2(0, 0), directions, starts, ends, max_range=10)
    assert ranges[0] == pytest.approx(2)
    assert owners[indices[0]] == 0
    assert math.isinf(ranges[1]) and indices[1] == -1
    assert math.isinf(ranges[2])


def test_raycast_respects_max_range():
    starts, ends, _ = geometry.polygon_edges([rect(5, -1, 6, 1)])
    ranges, _ = geometry.raycast(Point2(0, 0), np.array([[1.0, 0.0]]), starts, ends, max_range=4)
    assert math.isinf(ranges[0])


def test_distance_to_boundary():
    assert geometry.distance_to_boundary(Point2(0, 0), square(0, 0, 1)) == pytest.approx(1)
