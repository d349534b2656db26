"""Value types shared by every module: points, poses and classed polygons."""
from __future__ import annotations

import dataclasses
import enum
import functools
import math
import typing as typ

import numpy as np
import shapely
import shapely.geometry as sg

from . import constants


def normalize_angle(angle: float) -> float:
    """Wraps an angle into (−π, π]."""
    a = math.fmod(angle, constants.TWO_PI)
    if a <= -math.pi:
        a += constants.TWO_PI
    elif a > math.pi:
        a -= constants.TWO_PI
    return a


@dataclasses.dataclass(frozen=True)
class Point2:
    """A point or vector of the plane, in meters."""
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f'non-finite point ({self.x}, {self.y})')

    def __add__(self, other: Point2) -> Point2:
        return Point2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: Point2) -> Point2:
        return Point2(self.x - other.x, self.y - other.y)

    def __mul__(self, k: float) -> Point2:
        return Point2(self.x * k, self.y * k)

    __rmul__ = __mul__

    def __neg__(self) -> Point2:
        return Point2(-self.x, -self.y)

    def dot(self, other: Point2) -> float:
        return self.x * other.x + self.y * other.y

    def cross(self, other: Point2) -> float:
        return self.x * other.y - self.y * other.x

    @property
    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def normalized(self) -> Point2:
        n = self.norm
        if n < constants.EPSILON:
            raise ValueError('cannot normalize a null vector')
        return Point2(self.x / n, self.y / n)

    def distance_to(self, other: Point2) -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def as_tuple(self) -> tuple[float, float]:
        return self.x, self.y

    @classmethod
    def from_angle(cls, angle: float) -> Point2:
        """Unit vector pointing at the given angle."""
        return cls(math.cos(angle), math.sin(angle))


@dataclasses.dataclass(frozen=True)
class Pose2:
    """A planar pose. The heading is always normalized to (−π, π]."""
    x: float
    y: float
    psi: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.psi)):
            raise ValueError(f'non-finite pose ({self.x}, {self.y}, {self.psi})')
        object.__setattr__(self, 'psi', normalize_angle(self.psi))

    @property
    def position(self) -> Point2:
        return Point2(self.x, self.y)

    @property
    def heading(self) -> Point2:
        """Unit vector along the heading."""
        return Point2.from_angle(self.psi)

    def transform(self, p: Point2) -> Point2:
        """Maps a point from this pose’s frame into the parent frame."""
        c, s = math.cos(self.psi), math.sin(self.psi)
        return Point2(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)

    def rotate(self, v: Point2) -> Point2:
        """Rotates a vector by this pose’s heading."""
        c, s = math.cos(self.psi), math.sin(self.psi)
        return Point2(c * v.x - s * v.y, s * v.x + c * v.y)

    def inverse_transform(self, p: Point2) -> Point2:
        """Maps a point from the parent frame into this pose’s frame."""
        c, s = math.cos(self.psi), math.sin(self.psi)
        dx, dy = p.x - self.x, p.y - self.y
        return Point2(c * dx + s * dy, -s * dx + c * dy)

    def compose(self, other: Pose2) -> Pose2:
        """Returns this ∘ other, other being expressed in this pose’s frame."""
        p = self.transform(other.position)
        return Pose2(p.x, p.y, self.psi + other.psi)

    def relative_to(self, base: Pose2) -> Pose2:
        """Expresses this pose in the frame of base."""
        p = base.inverse_transform(self.position)
        return Pose2(p.x, p.y, self.psi - base.psi)

    def as_tuple(self) -> tuple[float, float, float]:
        return self.x, self.y, self.psi


class PolygonClass(enum.Enum):
    BACKGROUND = 'background'
    MOVABLE = 'movable'


@dataclasses.dataclass(frozen=True)
class Polygon:
    """A classed simple polygon. Vertices are stored counter-clockwise;
    clockwise input is reversed on construction.
    """
    vertices: tuple[Point2, ...]
    kind: PolygonClass
    id: str

    def __post_init__(self):
        vertices = tuple(self.vertices)
        if len(vertices) >= 2 and vertices[0] == vertices[-1]:
            vertices = vertices[:-1]
        if len(vertices) < 3:
            raise ValueError(f'polygon {self.id!r} has fewer than 3 vertices')
        if _signed_area(vertices) < 0:
            vertices = vertices[::-1]
        object.__setattr__(self, 'vertices', vertices)

    @classmethod
    def from_coords(cls, coords: typ.Iterable[typ.Sequence[float]], kind: PolygonClass = PolygonClass.BACKGROUND,
                    ident: str = '') -> Polygon:
        """Builds a polygon from (x, y) pairs."""
        return cls(tuple(Point2(float(x), float(y)) for x, y in coords), kind, ident)

    @classmethod
    def from_shape(cls, shape: sg.Polygon, kind: PolygonClass, ident: str) -> Polygon:
        """Builds a polygon from the exterior ring of a shapely polygon."""
        return cls.from_coords(list(shape.exterior.coords)[:-1], kind, ident)

    def __len__(self):
        return len(self.vertices)

    @functools.cached_property
    def coords(self) -> np.ndarray:
        """Vertices as an (n, 2) array."""
        return np.array([v.as_tuple() for v in self.vertices], dtype=float)

    @functools.cached_property
    def shape(self) -> sg.Polygon:
        """The shapely counterpart of this polygon."""
        poly = sg.Polygon(self.coords)
        if not poly.is_valid:
            poly = shapely.make_valid(poly)
            if not isinstance(poly, sg.Polygon):
                parts = [g for g in getattr(poly, 'geoms', []) if isinstance(g, sg.Polygon)]
                poly = max(parts, key=lambda g: g.area) if parts else sg.Polygon(self.coords).convex_hull
        shapely.prepare(poly)
        return poly

    @functools.cached_property
    def core(self):
        """The interior shrunk by the global tolerance, used for grazing-tolerant predicates."""
        core = self.shape.buffer(-constants.EPSILON, join_style='mitre')
        shapely.prepare(core)
        return core

    @property
    def area(self) -> float:
        return abs(_signed_area(self.vertices))

    @property
    def centroid(self) -> Point2:
        c = self.shape.centroid
        return Point2(c.x, c.y)

    @property
    def is_simple(self) -> bool:
        return sg.Polygon(self.coords).is_valid

    def edge(self, i: int) -> tuple[Point2, Point2]:
        """Returns the i-th edge, from vertex i to vertex i+1."""
        n = len(self.vertices)
        return self.vertices[i % n], self.vertices[(i + 1) % n]

    def edges(self) -> typ.Iterator[tuple[Point2, Point2]]:
        for i in range(len(self.vertices)):
            yield self.edge(i)

    def transformed(self, pose: Pose2, ident: str = None) -> Polygon:
        """Maps this polygon, expressed in the frame of pose, into the parent frame."""
        return Polygon(tuple(pose.transform(v) for v in self.vertices), self.kind,
                       self.id if ident is None else ident)

    def with_id(self, ident: str, kind: PolygonClass = None) -> Polygon:
        return Polygon(self.vertices, kind or self.kind, ident)

    def contains(self, p: Point2) -> bool:
        """Whether p lies strictly inside, beyond the global tolerance."""
        return self.core.contains(sg.Point(p.x, p.y))

    def __repr__(self):
        return f'Polygon{{id={self.id}, kind={self.kind.value}, vertices={len(self.vertices)}}}'


def _signed_area(vertices: typ.Sequence[Point2]) -> float:
    s = 0.0
    n = len(vertices)
    for i in range(n):
        a, b = vertices[i], vertices[(i + 1) % n]
        s += a.x * b.y - b.x * a.y
    return s / 2
