import numpy as np
import pytest
import shapely

from app.config import MappingConfig
from app.extraction import GridFrame, dump_grid, dump_polygons, extract, rasterize_and_inflate
from app.model import Point2, PolygonClass, Pose2
from app.world import RobotTruth, World

from conftest import box, enclosure


@pytest.fixture
def room_scan():
    world = World(enclosure(10, 8), [box('box0', 7, 4)], RobotTruth(pose=Pose2(4, 4, 0)))
    return world.scan()


def test_grid_frame_is_centered():
    frame = GridFrame.centered(Point2(1.01, 2.01), MappingConfig())
    assert frame.cells == 400
    assert frame.bounds == pytest.approx((-28.99, -27.99, 31.01, 32.01))
    assert frame.to_cell(Point2(1.02, 2.02)) == (200, 200)
    assert frame.to_cell(Point2(100, 2)) is None


def test_points_are_dilated_by_the_robot_radius(room_scan):
    grid = rasterize_and_inflate(room_scan)
    frame = grid.frame
    assert grid.shape == (frame.cells, frame.cells)
    # A wall hit and a cell one robot radius away are both occupied
    row, col = frame.to_cell(Point2(0.05, 4.0))
    assert grid.background[row, col]
    row, col = frame.to_cell(Point2(0.05 + 0.15, 4.0))
    assert grid.background[row, col]
    row, col = frame.to_cell(Point2(1.0, 4.0))
    assert not grid.background[row, col]
    assert set(grid.movable) == {'box0'}


def test_room_enclosure_keeps_the_robot_free(room_scan):
    _, polys = extract(room_scan)
    robot = Point2(4, 4)
    assert polys.background
    assert not any(p.contains(robot) for p in polys.polygons())
    assert all(p.kind == PolygonClass.BACKGROUND and p.id.startswith('bg:') for p in polys.background)


def test_polygons_cover_the_occupied_cells(room_scan):
    grid, polys = extract(room_scan)
    frame = grid.frame
    union = shapely.unary_union([p.shape for p in polys.background]).buffer(1e-6)
    rows, cols = np.nonzero(grid.background)
    centers = frame.pixels_to_world(np.stack([cols, rows], axis=1).astype(float))
    assert shapely.covers(union, shapely.points(centers)).all()


def test_movable_polygon_is_labeled(room_scan):
    _, polys = extract(room_scan)
    assert polys.movable_ids == ['box0']
    polygon = polys.movable_polygon('box0')
    assert polygon.id == 'mov:box0'
    assert polygon.kind == PolygonClass.MOVABLE
    hits = room_scan.coords(PolygonClass.MOVABLE, 'box0')
    assert shapely.covers(polygon.shape.buffer(0.15), shapely.points(hits)).all()
    assert polys.movable_polygon('missing') is None


def test_movable_polygons_do_not_overlap():
    world = World([], [box('a', 3, -0.5), box('b', 3, 0.5)], RobotTruth(pose=Pose2(0, 0, 0)))
    _, polys = extract(world.scan())
    assert polys.movable_ids == ['a', 'b']
    a, b = (p.shape for _, p in polys.movable)
    assert a.intersection(b).area == pytest.approx(0, abs=1e-9)


def test_empty_scan_gives_no_polygons():
    world = World([], [], RobotTruth())
    grid, polys = extract(world.scan())
    assert not grid.occupied().any()
    assert polys.polygons() == []


def test_extraction_is_deterministic(room_scan):
    first_grid, first = extract(room_scan)
    second_grid, second = extract(room_scan)
    assert dump_polygons(first) == dump_polygons(second)
    assert dump_grid(first_grid) == dump_grid(second_grid)
    assert dump_grid(first_grid).startswith('grid origin=4.0,4.0 resolution=0.15 cells=400\nlayer background\n')