"""Polygon extraction front-end: labeled scan -> local grid -> classed simple polygons."""
from __future__ import annotations

import dataclasses
import math
import typing as typ

import cv2
import numpy as np
import shapely
import shapely.geometry as sg
import skimage.morphology

from . import constants, geometry
from .config import MappingConfig
from .logging import logger
from .model import Point2, Polygon, PolygonClass
from .world import ScanFrame


@dataclasses.dataclass(frozen=True)
class GridFrame:
    """Placement of a square robot-centered grid. Rows grow along y, columns along x."""
    origin: Point2
    resolution: float
    cells: int

    @property
    def size(self) -> float:
        return self.cells * self.resolution

    @property
    def lower_left(self) -> Point2:
        half = self.size / 2
        return Point2(self.origin.x - half, self.origin.y - half)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        ll = self.lower_left
        return ll.x, ll.y, ll.x + self.size, ll.y + self.size

    def box(self) -> sg.Polygon:
        return sg.box(*self.bounds)

    def to_cell(self, p: Point2) -> tuple[int, int] | None:
        """Row and column of the cell holding p, or None outside the grid."""
        ll = self.lower_left
        col = math.floor((p.x - ll.x) / self.resolution)
        row = math.floor((p.y - ll.y) / self.resolution)
        if 0 <= row < self.cells and 0 <= col < self.cells:
            return row, col
        return None

    def to_cells(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized to_cell. Returns rows, columns and an inside mask."""
        ll = self.lower_left
        cols = np.floor((coords[:, 0] - ll.x) / self.resolution).astype(int)
        rows = np.floor((coords[:, 1] - ll.y) / self.resolution).astype(int)
        inside = (rows >= 0) & (rows < self.cells) & (cols >= 0) & (cols < self.cells)
        return rows, cols, inside

    def cell_center(self, row: int, col: int) -> Point2:
        ll = self.lower_left
        return Point2(ll.x + (col + 0.5) * self.resolution, ll.y + (row + 0.5) * self.resolution)

    def pixels_to_world(self, pixels: np.ndarray) -> np.ndarray:
        """Maps (col, row) pixel coordinates to world coordinates of cell centers."""
        ll = self.lower_left
        return np.stack([ll.x + (pixels[:, 0] + 0.5) * self.resolution,
                         ll.y + (pixels[:, 1] + 0.5) * self.resolution], axis=1)

    def world_to_pixels(self, coords: np.ndarray) -> np.ndarray:
        """Inverse of pixels_to_world, unrounded."""
        ll = self.lower_left
        return np.stack([(coords[:, 0] - ll.x) / self.resolution - 0.5,
                         (coords[:, 1] - ll.y) / self.resolution - 0.5], axis=1)

    @classmethod
    def centered(cls, origin: Point2, config: MappingConfig = MappingConfig()) -> GridFrame:
        return cls(origin, config.resolution, config.cells)


@dataclasses.dataclass(frozen=True, eq=False)
class LocalGrid:
    """Binary occupancy layers around the robot: one for the background, one per movable object."""
    frame: GridFrame
    background: np.ndarray
    movable: dict[str, np.ndarray]

    @property
    def origin(self) -> Point2:
        return self.frame.origin

    @property
    def shape(self) -> tuple[int, int]:
        return self.background.shape

    def occupied(self) -> np.ndarray:
        """Union of all layers."""
        grid = self.background.copy()
        for layer in self.movable.values():
            grid |= layer
        return grid


@dataclasses.dataclass(frozen=True)
class PolygonSetLocal:
    """Classed polygons extracted from one frame."""
    frame: GridFrame
    background: tuple[Polygon, ...] = ()
    movable: tuple[tuple[str, Polygon], ...] = ()

    def movable_polygon(self, object_id: str) -> Polygon | None:
        for oid, p in self.movable:
            if oid == object_id:
                return p
        return None

    @property
    def movable_ids(self) -> list[str]:
        return [oid for oid, _ in self.movable]

    def polygons(self) -> list[Polygon]:
        return list(self.background) + [p for _, p in self.movable]


def rasterize_and_inflate(scan: ScanFrame, config: MappingConfig = MappingConfig()) -> LocalGrid:
    """Registers scan points on a robot-centered grid and dilates them by the robot radius.

    :param scan: A labeled scan.
    :param config: Grid settings, robot radius included.
    :return: The local grid.
    """
    frame = GridFrame.centered(scan.origin.position, config)
    kernel = skimage.morphology.disk(config.dilation_cells).astype(np.uint8)

    def layer(coords: np.ndarray) -> np.ndarray:
        grid = np.zeros((frame.cells, frame.cells), dtype=np.uint8)
        if len(coords):
            rows, cols, inside = frame.to_cells(coords)
            grid[rows[inside], cols[inside]] = 1
            if config.dilation_cells > 0:
                grid = cv2.dilate(grid, kernel)
        return grid.astype(bool)

    background = layer(scan.coords(PolygonClass.BACKGROUND))
    movable = {}
    for oid in scan.object_ids:
        grid = layer(scan.coords(PolygonClass.MOVABLE, oid))
        if grid.any():
            movable[oid] = grid
    return LocalGrid(frame, background, movable)


def rasterize_polygons(polys: PolygonSetLocal, frame: GridFrame = None) -> LocalGrid:
    """Fills polygons into a grid without dilation; a cell is set when its center is covered."""
    frame = frame or polys.frame

    def layer(polygons: typ.Iterable[Polygon]) -> np.ndarray:
        grid = np.zeros((frame.cells, frame.cells), dtype=np.uint8)
        for p in polygons:
            fill_polygon(grid, frame, p)
        return grid.astype(bool)

    return LocalGrid(frame, layer(polys.background), {oid: layer([p]) for oid, p in polys.movable})


def fill_polygon(grid: np.ndarray, frame: GridFrame, polygon: Polygon | sg.Polygon, value: int = 1):
    """Sets the cells of grid whose centers lie inside polygon."""
    coords = polygon.coords if isinstance(polygon, Polygon) else np.asarray(polygon.exterior.coords)
    pixels = frame.world_to_pixels(coords)
    # fillPoly works on fixed-point pixel coordinates
    shift = 8
    points = np.round(pixels * (1 << shift)).astype(np.int32)
    cv2.fillPoly(grid, [points], value, lineType=cv2.LINE_8, shift=shift)


def extract_contours(grid: LocalGrid, config: MappingConfig = MappingConfig()) -> PolygonSetLocal:
    """Traces outer contours per class and object, simplifies them and separates same-class overlaps.

    :param grid: The local grid.
    :param config: Simplification settings.
    :return: The local polygon set.
    """
    frame = grid.frame
    background = _trace(grid.background, frame, config)
    background = _merge_overlapping(background, frame)
    background = tuple(p.with_id(f'bg:{i}', PolygonClass.BACKGROUND) for i, p in enumerate(background))

    movable = []
    taken = sg.GeometryCollection()
    for oid in sorted(grid.movable):
        shapes = _trace(grid.movable[oid], frame, config)
        if not shapes:
            continue
        if len(shapes) == 1:
            shape = shapes[0]
        else:
            # Occlusion can split one rigid object into several blobs
            shape = shapely.unary_union(shapes).convex_hull
        shape = shape.difference(taken) if not taken.is_empty else shape
        parts = geometry.polygon_parts(shape)
        if not parts:
            logger.warning(f'movable object {oid!r} vanished during overlap resolution')
            continue
        shape = max(parts, key=lambda g: g.area)
        taken = shapely.unary_union([taken, shape]) if not taken.is_empty else shape
        movable.append((oid, Polygon.from_shape(shape, PolygonClass.MOVABLE, f'mov:{oid}')))
    return PolygonSetLocal(frame, background, tuple(movable))


def _trace(layer: np.ndarray, frame: GridFrame, config: MappingConfig) -> list[sg.Polygon]:
    """Outer contours of every blob of a binary layer, as conservative simplified polygons."""
    mask = layer.astype(np.uint8)
    count, labels, stats, _ = cv2.connectedComponentsWithStats(mask, connectivity=8)
    box = frame.box()
    shapes = []
    for label in range(1, count):
        if stats[label, cv2.CC_STAT_AREA] < config.min_blob_cells:
            continue
        x, y, w, h = (int(stats[label, k]) for k in
                      (cv2.CC_STAT_LEFT, cv2.CC_STAT_TOP, cv2.CC_STAT_WIDTH, cv2.CC_STAT_HEIGHT))
        # Work on a padded crop so contours along the grid border close cleanly
        crop = np.zeros((h + 2, w + 2), dtype=np.uint8)
        crop[1:-1, 1:-1] = labels[y:y + h, x:x + w] == label
        contours, hierarchy = cv2.findContours(crop, cv2.RETR_CCOMP, cv2.CHAIN_APPROX_NONE)
        if not contours:
            continue
        outer = [i for i in range(len(contours)) if hierarchy[0, i, 3] < 0]
        k = max(outer, key=lambda i: len(contours[i]))
        offset = np.array([x - 1, y - 1])
        raw = contours[k].reshape(-1, 2).astype(float) + offset
        approx = cv2.approxPolyDP(contours[k], config.simplify_tolerance, True).reshape(-1, 2).astype(float)
        shape = _polygon_or_box(frame.pixels_to_world(approx + offset), frame.pixels_to_world(raw), frame)
        shape = _make_conservative(shape, frame.pixels_to_world(raw))
        # Free space enclosed by the blob, such as a room seen all around, stays free
        holes = [_hole(contours[i], offset, frame, config) for i in range(len(contours)) if hierarchy[0, i, 3] == k]
        holes = [h for h in holes if h.area >= constants.HOLE_MIN_AREA]
        if holes:
            shape = shape.difference(shapely.unary_union(holes))
        shape = shape.intersection(box)
        shapes.extend(geometry.polygon_parts(shape, keep_holes=True))
    return shapes


def _hole(contour: np.ndarray, offset: np.ndarray, frame: GridFrame, config: MappingConfig) -> sg.Polygon:
    """A simplified inner contour, shrunk until no traced cell lies inside it."""
    raw = frame.pixels_to_world(contour.reshape(-1, 2).astype(float) + offset)
    approx = cv2.approxPolyDP(contour, config.simplify_tolerance, True).reshape(-1, 2).astype(float)
    if len(approx) < 3:
        return sg.Polygon()
    hole = shapely.make_valid(sg.Polygon(frame.pixels_to_world(approx + offset)))
    parts = geometry.polygon_parts(hole)
    if not parts:
        return sg.Polygon()
    hole = max(parts, key=lambda g: g.area)
    # Inner contours run through occupied cell centers, which must stay occupied
    hole = hole.buffer(-frame.resolution / 2, join_style='mitre')
    points = shapely.points(raw)
    inside = shapely.contains_properly(hole, points)
    if inside.any():
        gap = float(shapely.distance(hole.exterior, points[inside]).max())
        hole = hole.buffer(-(gap + constants.EPSILON), join_style='mitre')
    return hole if isinstance(hole, sg.Polygon) else sg.Polygon()


def _polygon_or_box(coords: np.ndarray, raw: np.ndarray, frame: GridFrame) -> sg.Polygon:
    shape = sg.Polygon(coords) if len(coords) >= 3 else sg.Polygon()
    if not shape.is_valid:
        shape = shapely.make_valid(shape)
        parts = geometry.polygon_parts(shape)
        shape = shapely.unary_union(parts) if parts else sg.Polygon()
        if not isinstance(shape, sg.Polygon):
            shape = shape.convex_hull
    if shape.is_empty or shape.area < constants.EPSILON:
        # Thin blobs: the cell-center box, padded by half a cell along degenerate axes
        (x0, y0), (x1, y1) = raw.min(axis=0), raw.max(axis=0)
        half = frame.resolution / 2
        if x1 - x0 < half:
            x0, x1 = x0 - half, x1 + half
        if y1 - y0 < half:
            y0, y1 = y0 - half, y1 + half
        shape = sg.box(x0, y0, x1, y1)
    return shape


def _make_conservative(shape: sg.Polygon, raw: np.ndarray) -> sg.Polygon:
    """Grows a simplified contour just enough to cover every raw contour point again."""
    points = shapely.points(raw)
    outside = ~shapely.covers(shape, points)
    if not outside.any():
        return shape
    gap = float(shapely.distance(shape, points[outside]).max())
    return shape.buffer(gap + constants.EPSILON, join_style='mitre', mitre_limit=2.0)


def _merge_overlapping(shapes: list[sg.Polygon], frame: GridFrame) -> list[Polygon]:
    if not shapes:
        return []
    merged = geometry.polygon_parts(shapely.unary_union(shapes), keep_holes=True)
    merged.sort(key=lambda g: (round(g.bounds[0], 6), round(g.bounds[1], 6), -g.area))
    return [Polygon.from_shape(g, PolygonClass.BACKGROUND, '') for g in merged]


def dump_grid(grid: LocalGrid) -> str:
    """Text dump of a grid: one line per non-empty row, listing inclusive column runs."""
    f = grid.frame
    lines = [f'grid origin={f.origin.x!r},{f.origin.y!r} resolution={f.resolution!r} cells={f.cells}']
    layers = [('background', grid.background)] + [(f'movable {oid}', grid.movable[oid])
                                                  for oid in sorted(grid.movable)]
    for name, layer in layers:
        lines.append(f'layer {name}')
        for row in np.flatnonzero(layer.any(axis=1)):
            lines.append(f'{row}: ' + ' '.join(f'{a}-{b}' for a, b in _runs(layer[row])))
    return '\n'.join(lines) + '\n'


def _runs(row: np.ndarray) -> list[tuple[int, int]]:
    padded = np.concatenate([[False], row.astype(bool), [False]])
    changes = np.flatnonzero(padded[1:] != padded[:-1])
    return [(int(a), int(b) - 1) for a, b in zip(changes[::2], changes[1::2])]


def dump_polygons(polys: PolygonSetLocal) -> str:
    """Text dump of a polygon set, one polygon per line, coordinates rounded to micrometers."""
    lines = []
    for p in polys.background:
        lines.append(f'background {p.id}: ' + ' '.join(f'{v.x:.6f},{v.y:.6f}' for v in p.vertices))
    for oid, p in polys.movable:
        lines.append(f'movable {oid}: ' + ' '.join(f'{v.x:.6f},{v.y:.6f}' for v in p.vertices))
    return '\n'.join(lines) + '\n'


def extract(scan: ScanFrame, config: MappingConfig = MappingConfig()) -> tuple[LocalGrid, PolygonSetLocal]:
    """Convenience pipeline: rasterize_and_inflate then extract_contours."""
    grid = rasterize_and_inflate(scan, config)
    return grid, extract_contours(grid, config)
