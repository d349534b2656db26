import pathlib

import pytest

from app import constants, geometry
from app.config import MappingConfig
from app.extraction import GridFrame, PolygonSetLocal
from app.model import Point2, Polygon, PolygonClass, Pose2
from app.world import MovableObjectTruth, RobotTruth, Scenario, Task

WALL = 0.3


def rect(x0: float, y0: float, x1: float, y1: float, ident: str = '',
         kind: PolygonClass = PolygonClass.BACKGROUND) -> Polygon:
    return Polygon.from_coords([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], kind, ident)


def square(cx: float, cy: float, half: float, ident: str = '', kind: PolygonClass = PolygonClass.MOVABLE) -> Polygon:
    return rect(cx - half, cy - half, cx + half, cy + half, ident, kind)


def box(ident: str, cx: float, cy: float, half: float = 0.4, mass: float = 1.5,
        ground_friction: float = 0.3) -> MovableObjectTruth:
    return MovableObjectTruth(ident, square(0, 0, half, ident), Pose2(cx, cy, 0.0), mass, ground_friction, 0.5)


def enclosure(width: float, height: float) -> list[Polygon]:
    return [
        rect(-WALL, -WALL, width + WALL, 0, 'wall:s'),
        rect(-WALL, height, width + WALL, height + WALL, 'wall:n'),
        rect(-WALL, 0, 0, height, 'wall:w'),
        rect(width, 0, width + WALL, height, 'wall:e'),
    ]


def make_scenario(background, movables=(), tasks=(), name='test', bounds=None) -> Scenario:
    background = tuple(background)
    if bounds is None:
        xs = [v.x for p in background for v in p.vertices] or [0.0]
        ys = [v.y for p in background for v in p.vertices] or [0.0]
        bounds = (min(xs), min(ys), max(xs), max(ys))
    return Scenario(name, 'Custom', bounds, background, tuple(movables), RobotTruth(), tuple(tasks), 0)


def corridor_polys(gap: float = 1.2, half: float = 0.4, radius: float = constants.ROBOT_RADIUS,
                   origin: Point2 = Point2(0, 0)) -> PolygonSetLocal:
    """A wall along y = 0 with a doorway at the origin, blocked by a square object. Polygons are inflated."""
    frame = GridFrame.centered(origin, MappingConfig(local_size=20.0))
    walls = [rect(-8, -0.15, -gap / 2, 0.15, 'bg:0'), rect(gap / 2, -0.15, 8, 0.15, 'bg:1')]
    walls = [geometry.inflate(w, radius) for w in walls]
    movable = geometry.inflate(square(0, 0, half, 'mov:box'), radius)
    return PolygonSetLocal(frame, tuple(walls), (('box', movable),))


@pytest.fixture
def empty_room() -> Scenario:
    return make_scenario(enclosure(10, 8), tasks=[Task(Pose2(2, 2, 0), Point2(8, 6))], name='empty-room')


@pytest.fixture
def blocked_door() -> Scenario:
    """Two rooms joined by a single doorway that a light box blocks."""
    walls = enclosure(12, 12)
    # Partition at x = 6 with the door at y = 6
    walls += [rect(5.85, 0, 6.15, 5.4, 'part:0'), rect(5.85, 6.6, 6.15, 12, 'part:1')]
    return make_scenario(walls, [box('box0', 6, 6, half=0.55)], [Task(Pose2(3, 6, 0), Point2(9, 6))],
                         name='blocked-door')


@pytest.fixture
def heavy_door() -> Scenario:
    """Two rooms joined by a near doorway, jammed by an immovable box, and a far open one."""
    walls = enclosure(12, 12)
    walls += [rect(5.85, 0, 6.15, 5.4, 'part:0'), rect(5.85, 6.6, 6.15, 10.2, 'part:1'),
              rect(5.85, 11.4, 6.15, 12, 'part:2')]
    heavy = box('box0', 6, 6, half=0.55, mass=100, ground_friction=1.0)
    return make_scenario(walls, [heavy], [Task(Pose2(3, 6, 0), Point2(9, 6))], name='heavy-door')


@pytest.fixture
def tmp_config(tmp_path: pathlib.Path) -> pathlib.Path:
    return tmp_path / 'config.ini'
