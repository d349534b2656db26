"""Procedural benchmark worlds: partitioned rooms, rooms with doorway-blocking boxes, offices and tunnels."""
from __future__ import annotations

import enum
import math
import typing as typ

import networkx as nx
import numpy as np
import shapely
import shapely.geometry as sg

from .. import constants
from ..logging import logger
from ..model import Point2, Polygon, PolygonClass, Pose2
from ..world import MovableObjectTruth, RobotTruth, Scenario, Task
from .baselines import push_through_gain

# Distance kept between task endpoints and any obstacle
ENDPOINT_CLEARANCE = 0.6
BOX_SIZE = 0.8
# Largest inward pull of a tunnel rock vertex, as a fraction of its extent
ROCK_ROUGHNESS = 0.08
_MAX_SAMPLES = 10_000


class ScenarioClass(enum.Enum):
    ROOM = 'Room'
    ROOM_WITH_OBJECTS = 'RoomWithObjects'
    OFFICE = 'Office'
    TUNNEL = 'Tunnel'

    @property
    def path_threshold(self) -> float:
        """Minimal start to goal distance of the class’ tasks."""
        match self:
            case ScenarioClass.TUNNEL:
                return constants.TUNNEL_PATH_THRESHOLD
            case ScenarioClass.OFFICE:
                return constants.OFFICE_PATH_THRESHOLD
            case _:
                return constants.ROOM_PATH_THRESHOLD


def generate_scenario(kind: ScenarioClass | str, seed: int, tasks: int = constants.TASKS_PER_SCENARIO) -> Scenario:
    """Generates a world and its tasks. Equal arguments give equal scenarios.

    :param kind: The scenario class or its name.
    :param seed: Seed of the generator.
    :param tasks: Number of tasks.
    :return: The scenario.
    :raise ValueError: If the class is unknown.
    """
    kind = ScenarioClass(kind)
    rng = np.random.default_rng(seed)
    match kind:
        case ScenarioClass.ROOM:
            bounds, background, movables, area = _room(rng)
        case ScenarioClass.ROOM_WITH_OBJECTS:
            bounds, background, movables, area = _room_with_objects(rng)
        case ScenarioClass.OFFICE:
            bounds, background, movables, area = _office(rng)
        case _:
            bounds, background, movables, area = _tunnel(rng)
    obstacles = list(background) + [o.polygon() for o in movables]
    task_list = _sample_tasks(rng, area, obstacles, kind.path_threshold, tasks)
    scenario = Scenario(
        name=f'{kind.value}-{seed}',
        kind=kind.value,
        bounds=bounds,
        background=tuple(background),
        movables=tuple(movables),
        robot=RobotTruth(),
        tasks=tuple(task_list),
        seed=seed,
    )
    if kind == ScenarioClass.ROOM_WITH_OBJECTS and task_list:
        if not any(push_through_gain(scenario, i) > 0 for i in range(len(task_list))):
            logger.warning(f'{scenario.name}: no task where pushing beats the detour')
    return scenario


def _rect(x0: float, y0: float, x1: float, y1: float, ident: str) -> Polygon:
    return Polygon.from_coords([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], PolygonClass.BACKGROUND, ident)


def _enclosure(width: float, height: float) -> list[Polygon]:
    t = constants.WALL_THICKNESS
    return [
        _rect(-t, -t, width + t, 0, 'wall:south'),
        _rect(-t, height, width + t, height + t, 'wall:north'),
        _rect(-t, 0, 0, height, 'wall:west'),
        _rect(width, 0, width + t, height, 'wall:east'),
    ]


def _wall_with_doors(at: float, lo: float, hi: float, doors: typ.Iterable[float], vertical: bool,
                     prefix: str) -> list[Polygon]:
    """Splits a straight wall around doorways.

    :param at: x of a vertical wall or y of a horizontal one, at its center line.
    :param lo: Start of the wall along its direction.
    :param hi: End of the wall along its direction.
    :param doors: Doorway centers along the wall.
    :param vertical: Whether the wall runs along y.
    :param prefix: Prefix of the polygon ids.
    """
    half_t = constants.WALL_THICKNESS / 2
    half_door = constants.DOORWAY_WIDTH / 2
    cuts = [lo]
    for c in sorted(doors):
        cuts += [c - half_door, c + half_door]
    cuts.append(hi)
    walls = []
    for k in range(0, len(cuts), 2):
        a, b = cuts[k], cuts[k + 1]
        if b - a < 0.05:
            continue
        ident = f'{prefix}:{len(walls)}'
        if vertical:
            walls.append(_rect(at - half_t, a, at + half_t, b, ident))
        else:
            walls.append(_rect(a, at - half_t, b, at + half_t, ident))
    return walls


def _box(ident: str, center: Point2, rng: np.random.Generator) -> MovableObjectTruth:
    half = BOX_SIZE / 2
    shape = Polygon.from_coords([(-half, -half), (half, -half), (half, half), (-half, half)], PolygonClass.MOVABLE,
                                ident)
    return MovableObjectTruth(ident, shape, Pose2(center.x, center.y, 0.0), mass=_round(rng.uniform(1.0, 2.0)),
                              ground_friction=0.3, surface_friction=0.5)


def _round(x: float) -> float:
    return round(float(x), 3)


def _room(rng: np.random.Generator):
    size = 32.0
    upper = _round(rng.uniform(18, 28))
    lower = _round(rng.uniform(4, upper - 8))
    split = _round(rng.uniform(12, 20))
    door = _round(rng.uniform(19, 29))
    background = _enclosure(size, size) + \
        _wall_with_doors(size / 2, 0, size, [lower, upper], True, 'partition:v') + \
        _wall_with_doors(split, size / 2, size, [door], False, 'partition:h')
    t = constants.WALL_THICKNESS
    return (-t, -t, size + t, size + t), background, [], ((0, 0, size / 2, size), (size / 2, 0, size, size))


def _room_with_objects(rng: np.random.Generator):
    size = 32.0
    far = 1.5 if rng.random() < 0.5 else size - 1.5
    n = int(rng.integers(3, 7))
    centers = [_round(c + rng.uniform(-0.5, 0.5)) for c in np.linspace(9, 23, n)]
    background = _enclosure(size, size) + _wall_with_doors(size / 2, 0, size, [far] + centers, True, 'partition')
    movables = [_box(f'box{k}', Point2(size / 2, c), rng) for k, c in enumerate(centers)]
    t = constants.WALL_THICKNESS
    # Endpoints stay on the side of the rooms away from the open door
    y_lo, y_hi = (8.0, 30.0) if far < size / 2 else (2.0, 24.0)
    return (-t, -t, size + t, size + t), background, movables, ((1, y_lo, 9, y_hi), (23, y_lo, 31, y_hi))


def _office(rng: np.random.Generator):
    cols, rows, cell = 5, 4, 20.0
    width, height = cols * cell, rows * cell
    doors: dict[tuple, float] = {}
    graph = nx.Graph()
    for c in range(cols):
        for r in range(rows):
            if c + 1 < cols:
                key = ('v', c + 1, r)
                doors[key] = _round(r * cell + rng.uniform(3, cell - 3))
                graph.add_edge((c, r), (c + 1, r), weight=float(rng.random()), door=key)
            if r + 1 < rows:
                key = ('h', r + 1, c)
                doors[key] = _round(c * cell + rng.uniform(3, cell - 3))
                graph.add_edge((c, r), (c, r + 1), weight=float(rng.random()), door=key)
    tree = nx.minimum_spanning_tree(graph)
    open_doors = {d['door'] for _, _, d in tree.edges(data=True)}

    background = _enclosure(width, height)
    movables = []
    for k in range(1, cols):
        background += _wall_with_doors(k * cell, 0, height, [doors['v', k, r] for r in range(rows)], True,
                                       f'office:v{k}')
    for k in range(1, rows):
        background += _wall_with_doors(k * cell, 0, width, [doors['h', k, c] for c in range(cols)], False,
                                       f'office:h{k}')
    for key in sorted(doors):
        if key in open_doors:
            continue
        axis, k, j = key
        center = Point2(k * cell, doors[key]) if axis == 'v' else Point2(doors[key], k * cell)
        movables.append(_box(f'box{len(movables)}', center, rng))
    t = constants.WALL_THICKNESS
    areas = tuple((c * cell + 3, r * cell + 3, (c + 1) * cell - 3, (r + 1) * cell - 3)
                  for c in range(cols) for r in range(rows))
    return (-t, -t, width + t, height + t), background, movables, areas


def _tunnel(rng: np.random.Generator):
    cols, rows, pitch, corridor = 11, 9, 30.0, 4.0
    width, height = cols * pitch, rows * pitch
    background = _enclosure(width, height)
    for c in range(cols):
        for r in range(rows):
            center = Point2((c + 0.5) * pitch, (r + 0.5) * pitch)
            a = (pitch - corridor) / 2 - rng.uniform(0, 1.5)
            b = (pitch - corridor) / 2 - rng.uniform(0, 1.5)
            background.append(_rock(center, a, b, int(rng.integers(16, 21)), rng, f'rock:{c}:{r}'))
    t = constants.WALL_THICKNESS
    # Corridor crossings only
    areas = tuple((c * pitch, r * pitch, c * pitch, r * pitch) for c in range(1, cols) for r in range(1, rows))
    return (-t, -t, width + t, height + t), background, [], areas


def _rock(center: Point2, a: float, b: float, n: int, rng: np.random.Generator, ident: str) -> Polygon:
    """Rough block sampled on a superellipse, with each vertex pulled inward so corridors keep their width."""
    angles = np.sort(rng.uniform(0, constants.TWO_PI, n))
    c, s = np.cos(angles), np.sin(angles)
    # Star-shaped around the center, so the polygon stays simple
    scale = rng.uniform(1 - ROCK_ROUGHNESS, 1.0, n)
    xs = center.x + scale * a * np.sign(c) * np.abs(c) ** 0.5
    ys = center.y + scale * b * np.sign(s) * np.abs(s) ** 0.5
    return Polygon.from_coords([(_round(x), _round(y)) for x, y in zip(xs, ys)], PolygonClass.BACKGROUND, ident)


def _sample_tasks(rng: np.random.Generator, areas: typ.Sequence[tuple[float, float, float, float]],
                  obstacles: list[Polygon], threshold: float, count: int) -> list[Task]:
    """Draws start and goal pairs in distinct areas, in free space and at least threshold apart."""
    tree = shapely.STRtree([o.shape for o in obstacles])
    clearance = constants.ROBOT_RADIUS + ENDPOINT_CLEARANCE

    def draw(area) -> Point2:
        x0, y0, x1, y1 = area
        return Point2(_round(rng.uniform(x0, x1)), _round(rng.uniform(y0, y1)))

    def free(p: Point2) -> bool:
        return not len(tree.query(sg.Point(p.x, p.y), predicate='dwithin', distance=clearance))

    tasks = []
    for _ in range(_MAX_SAMPLES):
        if len(tasks) == count:
            break
        i, j = rng.choice(len(areas), size=2, replace=len(areas) < 2)
        start, goal = draw(areas[i]), draw(areas[j])
        if start.distance_to(goal) < threshold or not free(start) or not free(goal):
            continue
        psi = _round(rng.uniform(-math.pi, math.pi))
        tasks.append(Task(Pose2(start.x, start.y, psi), goal))
    if len(tasks) < count:
        logger.warning(f'only {len(tasks)} of {count} tasks could be placed')
    return tasks
