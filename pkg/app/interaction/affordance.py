"""Per-object physical estimates and the manipulation cost function built on them."""
from __future__ import annotations

import dataclasses
import typing as typ

from .search import PushPrimitive, PushSearchFailure, search_primitive
from .. import constants
from ..config import InteractionConfig
from ..logging import logger
from ..model import Point2, Polygon

if typ.TYPE_CHECKING:
    from ..dvgraph import DVGraph


@dataclasses.dataclass(frozen=True)
class Affordance:
    """Estimated interaction properties of a movable object.

    :param object_id: The object.
    :param pushable: False once the object resisted the maximal push effort.
    :param friction: Robot to object friction coefficient k.
    :param effort: Effort multiplier u_x applied to push path lengths.
    :param resistance: Last measured resistive force, in newtons.
    """
    object_id: str
    pushable: bool = True
    friction: float = constants.DEFAULT_FRICTION
    effort: float = constants.DEFAULT_EFFORT
    resistance: float = constants.NOMINAL_FORCE

    def __post_init__(self):
        if self.effort <= 0:
            raise ValueError(f'effort multiplier must be positive, got {self.effort}')
        if self.friction <= 0:
            raise ValueError(f'friction coefficient must be positive, got {self.friction}')


def default_affordance(object_id: str, config: InteractionConfig = InteractionConfig()) -> Affordance:
    """Initial assumption for an object seen for the first time."""
    return Affordance(object_id, True, config.default_friction, config.default_effort, config.nominal_force)


def gamma(start_wp: Point2, goal_wp: Point2, movable: Polygon, obstacles: typ.Sequence[Polygon],
          affordance: Affordance, config: InteractionConfig = InteractionConfig(),
          graph: DVGraph = None, edge: tuple[int, int] = None) -> tuple[float, PushPrimitive, Affordance]:
    """Estimates the cost and strategy of moving an object so that two waypoints get connected.

    :param start_wp: Waypoint on the robot’s side.
    :param goal_wp: Waypoint to connect to.
    :param movable: The object polygon, inflated by the robot radius.
    :param obstacles: Background and other objects, inflated by the robot radius.
    :param affordance: The object’s current affordance.
    :param config: Search settings.
    :param graph: If given with edge, the interaction edge is installed in this graph,
        or removed from it on failure.
    :param edge: Source and target waypoint vertex ids.
    :return: The cost J, the primitive and the affordance it was computed with.
    :raise PushSearchFailure: If no primitive exists.
    """
    try:
        primitive = search_primitive(start_wp, goal_wp, movable, obstacles, affordance, config)
    except PushSearchFailure as e:
        if graph is not None and edge is not None:
            graph.remove_interaction_edge(*edge)
        logger.warning(f'no push strategy for {affordance.object_id!r} between {start_wp} and {goal_wp}: {e.reason}')
        raise
    if graph is not None and edge is not None:
        graph.set_interaction_edge(edge[0], edge[1], affordance.object_id, primitive.cost, primitive)
    return primitive.cost, primitive, affordance
