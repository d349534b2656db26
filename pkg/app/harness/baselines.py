"""Dense-grid baseline: occupancy rasterization and 8-connected A*, also used as the shortest-path oracle."""
from __future__ import annotations

import dataclasses
import heapq
import math
import time
import typing as typ

import cv2
import numpy as np
import skimage.morphology

from .. import constants
from ..model import Point2, Polygon
from ..world import Scenario

_SQRT2 = math.sqrt(2)
# Extra cost charged to a push-through route when checking that it beats the detour
PUSH_ALLOWANCE = 3.0
_MOVES = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, _SQRT2), (1, -1, _SQRT2), (-1, 1, _SQRT2), (-1, -1, _SQRT2))


@dataclasses.dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """A world-aligned boolean grid. Rows grow along y, columns along x.

    :param occupied: Cell occupancy.
    :param lower_left: World position of the lower-left corner of cell (0, 0).
    :param resolution: Cell size.
    """
    occupied: np.ndarray
    lower_left: Point2
    resolution: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape

    def to_cell(self, p: Point2) -> tuple[int, int] | None:
        row = math.floor((p.y - self.lower_left.y) / self.resolution)
        col = math.floor((p.x - self.lower_left.x) / self.resolution)
        rows, cols = self.shape
        if 0 <= row < rows and 0 <= col < cols:
            return row, col
        return None

    def cell_center(self, row: int, col: int) -> Point2:
        return Point2(self.lower_left.x + (col + 0.5) * self.resolution,
                      self.lower_left.y + (row + 0.5) * self.resolution)

    def is_free(self, cell: tuple[int, int]) -> bool:
        return not self.occupied[cell]


def occupancy(polygons: typ.Iterable[Polygon], bounds: tuple[float, float, float, float],
              resolution: float = constants.GRID_RESOLUTION, inflation: float = 0.0) -> OccupancyGrid:
    """Rasterizes polygons, optionally dilated by a disk.

    :param polygons: Obstacles.
    :param bounds: (xmin, ymin, xmax, ymax) of the grid.
    :param resolution: Cell size.
    :param inflation: Dilation radius; no dilation if 0.
    :return: The grid.
    """
    x0, y0, x1, y1 = bounds
    cols = math.ceil(round((x1 - x0) / resolution, 6))
    rows = math.ceil(round((y1 - y0) / resolution, 6))
    grid = np.zeros((rows, cols), dtype=np.uint8)
    for p in polygons:
        pixels = np.round((p.coords - (x0, y0)) / resolution - 0.5).astype(np.int32)
        cv2.fillPoly(grid, [pixels.reshape(-1, 1, 2)], 1)
    radius = math.ceil(round(inflation / resolution, 6))
    if radius > 0:
        grid = cv2.dilate(grid, skimage.morphology.disk(radius).astype(np.uint8))
    return OccupancyGrid(grid.astype(bool), Point2(x0, y0), resolution)


def grid_astar(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]] | None:
    """8-connected A* with the octile heuristic. Diagonal moves may not cut occupied corners.

    :param grid: The grid.
    :param start: Start cell.
    :param goal: Goal cell.
    :return: Cells from start to goal, or None if the goal cannot be reached.
    """
    occupied = grid.occupied
    rows, cols = occupied.shape
    if occupied[start] or occupied[goal]:
        return None

    def h(cell: tuple[int, int]) -> float:
        dr, dc = abs(cell[0] - goal[0]), abs(cell[1] - goal[1])
        return max(dr, dc) + (_SQRT2 - 1) * min(dr, dc)

    best = {start: 0.0}
    parent = {start: None}
    heap = [(h(start), 0.0, start)]
    while heap:
        _, g, cell = heapq.heappop(heap)
        if cell == goal:
            path = [cell]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return path[::-1]
        if g > best[cell]:
            continue
        r, c = cell
        for dr, dc, w in _MOVES:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or occupied[nr, nc]:
                continue
            if dr and dc and (occupied[r, nc] or occupied[nr, c]):
                continue
            candidate = g + w
            if candidate < best.get((nr, nc), math.inf):
                best[nr, nc] = candidate
                parent[nr, nc] = cell
                heapq.heappush(heap, (candidate + h((nr, nc)), candidate, (nr, nc)))
    return None


def cells_length(cells: typ.Sequence[tuple[int, int]], resolution: float) -> float:
    return sum(math.hypot(a[0] - b[0], a[1] - b[1]) for a, b in zip(cells, cells[1:])) * resolution


def prune(grid: OccupancyGrid, cells: typ.Sequence[tuple[int, int]]) -> list[Point2]:
    """Keeps the cells where the path turns, as world points."""
    if len(cells) < 3:
        return [grid.cell_center(*c) for c in cells]
    kept = [cells[0]]
    for prev, cell, nxt in zip(cells, cells[1:], cells[2:]):
        if (cell[0] - prev[0], cell[1] - prev[1]) != (nxt[0] - cell[0], nxt[1] - cell[1]):
            kept.append(cell)
    kept.append(cells[-1])
    return [grid.cell_center(*c) for c in kept]


@dataclasses.dataclass(frozen=True)
class GridPlan:
    waypoints: list[Point2]
    length: float
    solve_time: float


def plan_on_grid(grid: OccupancyGrid, start: Point2, goal: Point2) -> GridPlan | None:
    """Timed A* between two world points.

    :return: The pruned path, or None if either point is outside the grid or no path exists.
    """
    s, g = grid.to_cell(start), grid.to_cell(goal)
    if s is None or g is None:
        return None
    started = time.perf_counter()
    cells = grid_astar(grid, s, g)
    elapsed = time.perf_counter() - started
    if cells is None:
        return None
    waypoints = prune(grid, cells)[1:-1] + [goal]
    return GridPlan(waypoints, cells_length(cells, grid.resolution), elapsed)


def shortest_length(scenario: Scenario, task_index: int, resolution: float = constants.GRID_RESOLUTION,
                    with_movables: bool = False, inflation: float = 0.0) -> float | None:
    """Length of the shortest grid path of a task, walls only unless with_movables is set.

    :return: The length, or None if the goal is unreachable.
    """
    polygons = list(scenario.background)
    if with_movables:
        polygons += [o.polygon() for o in scenario.movables]
    grid = occupancy(polygons, scenario.bounds, resolution, inflation)
    task = scenario.tasks[task_index]
    result = plan_on_grid(grid, task.start.position, task.goal)
    return result.length if result is not None else None


def push_through_gain(scenario: Scenario, task_index: int, resolution: float = 0.3) -> float:
    """How much longer the collision-free detour is than pushing through, PUSH_ALLOWANCE included.

    :return: The gain; positive when pushing is cheaper, infinite if no detour exists.
    """
    radius = scenario.robot.radius
    through = shortest_length(scenario, task_index, resolution, inflation=radius)
    if through is None:
        return -math.inf
    detour = shortest_length(scenario, task_index, resolution, with_movables=True, inflation=radius)
    if detour is None:
        return math.inf
    return detour - (through + PUSH_ALLOWANCE)
