"""Quasi-static stable pushing: contact sampling and the admissible curvature interval of a line contact."""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import shapely

from .. import constants
from ..model import Point2, Polygon, PolygonClass, Pose2

# Largest curvature a push may command, in rad/m
MAX_CURVATURE = 10.0
CONTACT_FRACTIONS = (0.25, 0.5, 0.75)


class ContactError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class ContactPoint:
    """A push contact on an object footprint, expressed in the footprint’s frame.

    :param edge: Index of the touched edge.
    :param t: Position along the edge, 0 at its first vertex and 1 at its last.
    :param point: The contact location.
    :param normal: Inward unit normal of the edge, the direction of the push.
    """
    edge: int
    t: float
    point: Point2
    normal: Point2

    def __post_init__(self):
        if not 0 <= self.t <= 1:
            raise ContactError(f'contact parameter {self.t} outside [0, 1]')

    def at(self, pose: Pose2) -> tuple[Point2, Point2]:
        """Contact location and push direction once the footprint is placed at pose."""
        return pose.transform(self.point), pose.rotate(self.normal)

    def pusher_pose(self, pose: Pose2, radius: float) -> Pose2:
        """Pose of a disk robot of the given radius touching the contact and facing the push direction."""
        p, n = self.at(pose)
        return Pose2(p.x - n.x * radius, p.y - n.y * radius, math.atan2(n.y, n.x))

    def __str__(self):
        return f'{self.edge}@{self.t:g}'


@dataclasses.dataclass(frozen=True)
class StableCone:
    """Curvatures ω/v of the pusher for which a contact keeps sticking."""
    contact: ContactPoint
    kappa_min: float
    kappa_max: float

    @property
    def is_empty(self) -> bool:
        return self.kappa_min > self.kappa_max

    def contains(self, v: float, omega: float) -> bool:
        if v <= 0 or self.is_empty:
            return False
        kappa = omega / v
        return self.kappa_min - 1e-9 <= kappa <= self.kappa_max + 1e-9

    def curvatures(self, samples: int) -> list[float]:
        """Evenly spread curvatures spanning the cone, extremities included."""
        if self.is_empty:
            return []
        if samples <= 1 or self.kappa_max - self.kappa_min < 1e-12:
            return [(self.kappa_min + self.kappa_max) / 2]
        return [float(k) for k in np.linspace(self.kappa_min, self.kappa_max, samples)]


def footprint_of(movable: Polygon, robot_radius: float) -> Polygon:
    """Recovers the physical outline of an object from its polygon inflated by the robot radius.

    :raise ContactError: If nothing remains after deflation.
    """
    shape = movable.shape.buffer(-robot_radius)
    parts = [g for g in getattr(shape, 'geoms', [shape]) if not g.is_empty and g.geom_type == 'Polygon']
    if not parts:
        raise ContactError(f'object {movable.id!r} is thinner than the robot')
    largest = max(parts, key=lambda g: g.area)
    return Polygon.from_shape(largest, PolygonClass.MOVABLE, movable.id)


def sample_contacts(body: Polygon, contact_width: float = constants.CONTACT_WIDTH,
                    fractions: tuple[float, ...] = CONTACT_FRACTIONS) -> list[ContactPoint]:
    """Contact points at the given fractions of every edge long enough to hold a line contact.

    :param body: The object footprint.
    :param contact_width: Width of the robot’s pusher.
    :param fractions: Positions sampled along each edge.
    :return: The contacts, by edge then fraction.
    """
    contacts = []
    for i, (a, b) in enumerate(body.edges()):
        length = a.distance_to(b)
        if length < contact_width - constants.EPSILON:
            continue
        e = (b - a) * (1 / length)
        normal = Point2(-e.y, e.x)
        half = contact_width / 2
        for t in fractions:
            s = t * length
            if s - half < -constants.EPSILON or s + half > length + constants.EPSILON:
                continue
            contacts.append(ContactPoint(i, t, a + e * s, normal))
    return contacts


def characteristic_length(body: Polygon, samples: int = 40) -> float:
    """Mean distance from the centroid over the footprint’s area, the moment arm of the
    support friction under uniform pressure."""
    xmin, ymin, xmax, ymax = body.shape.bounds
    xs, ys = np.meshgrid(np.linspace(xmin, xmax, samples), np.linspace(ymin, ymax, samples))
    xs, ys = xs.ravel(), ys.ravel()
    inside = shapely.contains_xy(body.shape, xs, ys)
    c = body.centroid
    if inside.sum() < 10:
        return float(np.hypot(*(body.coords - np.array(c.as_tuple())).T).mean())
    return float(np.hypot(xs[inside] - c.x, ys[inside] - c.y).mean())


def pusher_frame_offset(body: Polygon, contact: ContactPoint) -> Point2:
    """Centroid of the object in the frame of the pusher, x along the push and y along the edge."""
    d = body.centroid - contact.point
    n = contact.normal
    return Point2(d.dot(n), d.dot(Point2(-n.y, n.x)))


def is_sticking(offset: Point2, c: float, k: float, width: float, kappa: float) -> bool:
    """Direct check of the sticking conditions for one curvature.

    :param offset: Centroid in the pusher frame.
    :param c: Characteristic length of the support.
    :param k: Robot to object friction coefficient.
    :param width: Contact width.
    :param kappa: Pusher curvature ω/v.
    """
    dx, dy = offset.x, offset.y
    fx = 1 - kappa * dy
    fy = kappa * dx
    moment = kappa * (c * c + dx * dx + dy * dy) - dy
    return fx > 0 and abs(fy) <= k * fx + 1e-12 and abs(moment) <= width / 2 * fx + 1e-12


def stable_cone(body: Polygon, contact: ContactPoint, k: float, contact_width: float = constants.CONTACT_WIDTH,
                c: float = None) -> StableCone:
    """Interval of pusher curvatures keeping a line contact sticking.

    The support friction follows an ellipsoidal limit surface around the centroid. A curvature is
    kept when the resulting contact force stays inside the friction cone of half-angle atan(k) and
    its line of action crosses the contact segment.

    :param body: The object footprint.
    :param contact: A contact on body.
    :param k: Robot to object friction coefficient.
    :param contact_width: Width of the line contact.
    :param c: Characteristic length; computed from body if omitted.
    :return: The cone; it may be empty.
    :raise ContactError: If k is not positive or the edge is shorter than the contact.
    """
    if k <= 0:
        raise ContactError(f'friction coefficient must be positive, got {k}')
    a, b = body.edge(contact.edge)
    if a.distance_to(b) < contact_width - constants.EPSILON:
        raise ContactError(f'edge {contact.edge} is shorter than the contact width {contact_width}')
    if c is None:
        c = characteristic_length(body)
    d = pusher_frame_offset(body, contact)
    dx, dy = d.x, d.y
    half = contact_width / 2
    spread = c * c + dx * dx + dy * dy
    # Each row (a, b) stands for a·κ <= b
    constraints = [
        (dy, 1 - 1e-9),
        (dx + k * dy, k),
        (-dx + k * dy, k),
        (spread + half * dy, half + dy),
        (-spread + half * dy, half - dy),
    ]
    lo, hi = -MAX_CURVATURE, MAX_CURVATURE
    for coef, bound in constraints:
        if abs(coef) < 1e-12:
            if bound < 0:
                return StableCone(contact, 1.0, -1.0)
        elif coef > 0:
            hi = min(hi, bound / coef)
        else:
            lo = max(lo, bound / coef)
    return StableCone(contact, lo, hi)
