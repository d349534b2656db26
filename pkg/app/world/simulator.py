"""Deterministic quasi-static ground-truth simulator."""
from __future__ import annotations

import dataclasses
import math
import typing as typ

import numpy as np
import shapely.geometry as sg

from .. import constants, geometry
from ..config import SensorConfig
from ..logging import logger
from ..model import Point2, Polygon, PolygonClass, Pose2


class WorldError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class MovableObjectTruth:
    """A rigid movable object. Its shape is expressed in the body frame."""
    id: str
    shape: Polygon
    pose: Pose2
    mass: float
    ground_friction: float
    surface_friction: float

    def __post_init__(self):
        if self.mass <= 0:
            raise WorldError(f'object {self.id!r}: mass must be positive, got {self.mass}')
        for name in ('ground_friction', 'surface_friction'):
            value = getattr(self, name)
            if not 0 < value <= 5:
                raise WorldError(f'object {self.id!r}: {name} must be in (0, 5], got {value}')

    @property
    def resistance(self) -> float:
        """Quasi-static resistive force, in newtons."""
        return self.ground_friction * self.mass * constants.GRAVITY

    def polygon(self) -> Polygon:
        """The shape in the world frame."""
        return self.shape.transformed(self.pose, self.id)


@dataclasses.dataclass(frozen=True)
class RobotTruth:
    """A differential-drive disk robot with a flat pusher of width contact_width."""
    pose: Pose2 = Pose2(0, 0, 0)
    radius: float = constants.ROBOT_RADIUS
    max_push_force: float = constants.ROBOT_MAX_PUSH_FORCE
    max_speed: float = constants.ROBOT_MAX_SPEED
    max_yaw_rate: float = constants.ROBOT_MAX_YAW_RATE
    contact_width: float = constants.CONTACT_WIDTH

    def __post_init__(self):
        for name in ('radius', 'max_push_force', 'max_speed', 'max_yaw_rate', 'contact_width'):
            if getattr(self, name) <= 0:
                raise WorldError(f'robot {name} must be positive')


@dataclasses.dataclass(frozen=True)
class ScanPoint:
    point: Point2
    kind: PolygonClass
    object_id: str | None = None


@dataclasses.dataclass(frozen=True)
class ScanFrame:
    """A class-labeled range scan, in world coordinates."""
    timestamp: float
    origin: Pose2
    points: tuple[ScanPoint, ...]

    def __len__(self):
        return len(self.points)

    def coords(self, kind: PolygonClass = None, object_id: str = None) -> np.ndarray:
        """Selected points as an (n, 2) array."""
        selected = [p.point.as_tuple() for p in self.points
                    if (kind is None or p.kind == kind) and (object_id is None or p.object_id == object_id)]
        return np.array(selected, dtype=float).reshape(-1, 2)

    @property
    def object_ids(self) -> list[str]:
        return sorted({p.object_id for p in self.points if p.kind == PolygonClass.MOVABLE})


@dataclasses.dataclass(frozen=True)
class ForceReading:
    timestamp: float
    magnitude: float
    in_contact: bool

    def __post_init__(self):
        if self.magnitude < 0:
            raise WorldError('negative force magnitude')
        if not self.in_contact and self.magnitude != 0:
            raise WorldError('force reported without contact')

    @classmethod
    def none(cls, timestamp: float) -> ForceReading:
        return cls(timestamp, 0.0, False)


class PushOutcome(typ.NamedTuple):
    pose: Pose2
    force: ForceReading
    moved: bool


class World:
    """Single-threaded mutable world state: walls, movable objects and the robot."""

    def __init__(self, background: typ.Sequence[Polygon], objects: typ.Sequence[MovableObjectTruth],
                 robot: RobotTruth, sensor: SensorConfig = SensorConfig(), seed: int = 0):
        """Creates a world.

        :param background: Static wall polygons, world frame.
        :param objects: Movable objects.
        :param robot: Robot description and initial pose.
        :param sensor: Range sensor settings.
        :param seed: Seed of the range noise generator.
        """
        self._background = [p.with_id(p.id, PolygonClass.BACKGROUND) for p in background]
        self._objects = {o.id: o for o in objects}
        if len(self._objects) != len(objects):
            raise WorldError('duplicate object ids')
        self._robot = robot
        self._sensor = sensor
        self._rng = np.random.default_rng(seed)
        self._time = 0.0
        self._push_work = {o.id: 0.0 for o in objects}
        self._last_force = ForceReading.none(0.0)

    @classmethod
    def from_scenario(cls, scenario, task_index: int = 0, sensor: SensorConfig = SensorConfig()) -> World:
        """Builds the world of a scenario with the robot at the start of the given task."""
        robot = scenario.robot
        if scenario.tasks:
            robot = dataclasses.replace(robot, pose=scenario.tasks[task_index].start)
        return cls(scenario.background, scenario.movables, robot, sensor, scenario.seed)

    @property
    def time(self) -> float:
        return self._time

    def advance_time(self, dt: float):
        self._time += dt

    @property
    def robot(self) -> RobotTruth:
        return self._robot

    @property
    def robot_pose(self) -> Pose2:
        return self._robot.pose

    @property
    def background(self) -> list[Polygon]:
        return list(self._background)

    @property
    def object_ids(self) -> list[str]:
        return sorted(self._objects)

    def object(self, object_id: str) -> MovableObjectTruth:
        try:
            return self._objects[object_id]
        except KeyError:
            raise WorldError(f'unknown object {object_id!r}')

    def object_polygon(self, object_id: str) -> Polygon:
        return self.object(object_id).polygon()

    def movable_polygons(self) -> list[Polygon]:
        return [self._objects[i].polygon() for i in sorted(self._objects)]

    def push_work(self, object_id: str) -> float:
        """Cumulative force times contact travel spent on an object."""
        return self._push_work[object_id]

    @property
    def last_force(self) -> ForceReading:
        return self._last_force

    def place_robot(self, pose: Pose2):
        self._robot = dataclasses.replace(self._robot, pose=pose)

    def set_object_pose(self, object_id: str, pose: Pose2):
        self._objects[object_id] = dataclasses.replace(self.object(object_id), pose=pose)

    def remove_object(self, object_id: str):
        self.object(object_id)
        del self._objects[object_id]

    def scan(self, robot_pose: Pose2 = None, config: SensorConfig = None) -> ScanFrame:
        """Casts a full revolution of rays from the robot.

        :param robot_pose: Sensor pose; defaults to the robot’s current pose.
        :param config: Sensor settings; defaults to the world’s.
        :return: The labeled scan.
        """
        pose = robot_pose or self._robot.pose
        config = config or self._sensor
        polygons = self._background + self.movable_polygons()
        starts, ends, owners = geometry.polygon_edges(polygons)
        # Skip edges that cannot be reached
        if len(starts):
            near = _segment_distances(pose.position, starts, ends) <= config.max_range
            starts, ends, owners = starts[near], ends[near], owners[near]
        n = config.rays
        angles = pose.psi + np.arange(n) * math.radians(config.angular_resolution)
        directions = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        ranges, hits = geometry.raycast(pose.position, directions, starts, ends, config.max_range)
        if config.noise_sigma > 0:
            ranges = ranges + self._rng.normal(0.0, config.noise_sigma, size=n)
        points = []
        for k in np.flatnonzero(hits >= 0):
            r = float(ranges[k])
            if not 0 < r <= config.max_range:
                continue
            owner = polygons[owners[hits[k]]]
            p = Point2(pose.x + r * float(directions[k, 0]), pose.y + r * float(directions[k, 1]))
            if owner.kind == PolygonClass.MOVABLE:
                points.append(ScanPoint(p, PolygonClass.MOVABLE, owner.id))
            else:
                points.append(ScanPoint(p, PolygonClass.BACKGROUND))
        return ScanFrame(self._time, pose, tuple(points))

    def step_push(self, object_id: str, contact_point: Point2, v: float, omega: float, dt: float) -> PushOutcome:
        """Pushes an object through a sticking contact for dt seconds.
        The pusher faces the inward normal of the touched edge; robot and object move together
        along the pusher’s arc.

        :param object_id: Pushed object.
        :param contact_point: Contact location on the object’s boundary.
        :param v: Pusher forward speed.
        :param omega: Pusher yaw rate.
        :param dt: Duration.
        :return: The new object pose, the force reading and whether the object moved.
        :raise WorldError: If the contact point is not on the object’s boundary.
        """
        obj = self.object(object_id)
        polygon = obj.polygon()
        if geometry.distance_to_boundary(contact_point, polygon) > constants.EPSILON * 10:
            raise WorldError(f'contact point {contact_point} is not on the boundary of {object_id!r}')
        normal = _inward_normal(polygon, contact_point)
        radius = self._robot.radius
        pusher = Pose2(contact_point.x - normal.x * radius, contact_point.y - normal.y * radius,
                       math.atan2(normal.y, normal.x))

        if obj.resistance > self._robot.max_push_force:
            self._last_force = ForceReading(self._time, self._robot.max_push_force, True)
            return PushOutcome(obj.pose, self._last_force, False)
        if dt == 0:
            self._last_force = ForceReading(self._time, obj.resistance, True)
            return PushOutcome(obj.pose, self._last_force, True)

        def state(t: float) -> tuple[Pose2, Pose2]:
            robot_t = geometry.integrate_arc(pusher, v, omega, t)
            return robot_t, geometry.carry(obj.pose, pusher, robot_t)

        def blocked(t: float) -> bool:
            robot_t, object_t = state(t)
            return self._push_blocked(object_id, object_t, robot_t)

        speed = math.hypot(v, omega * radius)
        t = self._time_of_impact(blocked, dt, speed)
        if t < dt:
            logger.info(f'push of {object_id!r} halted by contact after {t:.3f}s')
        robot_t, object_t = state(t)
        force = obj.resistance
        if t == 0:
            # Jammed against an obstacle: the pusher saturates
            force = self._robot.max_push_force
        self._objects[object_id] = dataclasses.replace(obj, pose=object_t)
        self._robot = dataclasses.replace(self._robot, pose=robot_t)
        self._push_work[object_id] += force * speed * t
        self._last_force = ForceReading(self._time, force, True)
        return PushOutcome(object_t, self._last_force, True)

    def step_drive(self, v: float, omega: float, dt: float) -> Pose2:
        """Drives the robot along an exact arc, stopping at the first collision.

        :raise WorldError: If v or omega exceed the robot’s limits.
        """
        if abs(v) > self._robot.max_speed + 1e-9:
            raise WorldError(f'speed {v} exceeds limit {self._robot.max_speed}')
        if abs(omega) > self._robot.max_yaw_rate + 1e-9:
            raise WorldError(f'yaw rate {omega} exceeds limit {self._robot.max_yaw_rate}')
        start = self._robot.pose
        self._last_force = ForceReading.none(self._time)
        if dt <= 0:
            return start
        obstacles = self._background + self.movable_polygons()
        radius = self._robot.radius
        # Overlaps present at the start may shrink but never grow
        allowed = np.maximum(_penetrations(start.position, radius, obstacles), 0.0) + constants.EPSILON

        def blocked(t: float) -> bool:
            p = geometry.integrate_arc(start, v, omega, t).position
            return bool(np.any(_penetrations(p, radius, obstacles) > allowed))

        t = self._time_of_impact(blocked, dt, abs(v))
        pose = geometry.integrate_arc(start, v, omega, t)
        self._robot = dataclasses.replace(self._robot, pose=pose)
        return pose

    def robot_clearance(self) -> float:
        """Distance from the robot’s center to the closest obstacle, minus its radius."""
        p = sg.Point(self._robot.pose.x, self._robot.pose.y)
        obstacles = self._background + self.movable_polygons()
        if not obstacles:
            return math.inf
        return min(o.shape.distance(p) for o in obstacles) - self._robot.radius

    def _push_blocked(self, object_id: str, object_pose: Pose2, robot_pose: Pose2) -> bool:
        moved = self._objects[object_id].shape.transformed(object_pose).shape
        others = [o.polygon() for i, o in self._objects.items() if i != object_id]
        if any(not p.core.is_empty and p.core.intersects(moved) for p in self._background + others):
            return True
        return _disk_hits(robot_pose.position, self._robot.radius, self._background + others)

    def _time_of_impact(self, blocked: typ.Callable[[float], bool], dt: float, speed: float) -> float:
        """Last collision-free instant in [0, dt], to TIME_OF_IMPACT_TOLERANCE."""
        # Sample finely enough not to tunnel through thin walls
        step = dt if speed <= 0 else min(dt, 0.5 * self._robot.radius / speed)
        lo = 0.0
        while lo < dt:
            hi = min(dt, lo + step)
            if blocked(hi):
                while hi - lo > constants.TIME_OF_IMPACT_TOLERANCE:
                    mid = (lo + hi) / 2
                    if blocked(mid):
                        hi = mid
                    else:
                        lo = mid
                return lo
            lo = hi
        return dt


def _disk_hits(p: Point2, radius: float, obstacles: typ.Iterable[Polygon]) -> bool:
    point = sg.Point(p.x, p.y)
    return any(o.shape.distance(point) < radius - constants.EPSILON for o in obstacles)


def _penetrations(p: Point2, radius: float, obstacles: typ.Sequence[Polygon]) -> np.ndarray:
    """How deep a disk at p reaches into each obstacle; negative values are clearances."""
    point = sg.Point(p.x, p.y)
    depths = []
    for o in obstacles:
        d = o.shape.exterior.distance(point)
        depths.append(radius + d if o.shape.contains(point) else radius - d)
    return np.array(depths, dtype=float)


def _inward_normal(polygon: Polygon, p: Point2) -> Point2:
    """Inward unit normal of the edge closest to p."""
    point = sg.Point(p.x, p.y)
    best, best_d = None, math.inf
    for a, b in polygon.edges():
        d = sg.LineString([a.as_tuple(), b.as_tuple()]).distance(point)
        if d < best_d - constants.EPSILON:
            best, best_d = (a, b), d
    a, b = best
    e = (b - a).normalized()
    # Left of a counter-clockwise edge is inside
    return Point2(-e.y, e.x)


def _segment_distances(p: Point2, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    o = np.array(p.as_tuple())
    e = ends - starts
    length2 = np.maximum((e ** 2).sum(axis=1), 1e-18)
    t = np.clip(((o - starts) * e).sum(axis=1) / length2, 0, 1)
    closest = starts + t[:, None] * e
    return np.hypot(*(closest - o).T)
