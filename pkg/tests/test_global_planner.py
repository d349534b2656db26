import itertools

import networkx as nx
import numpy as np
import pytest

from app import geometry
from app.dvgraph import DVGraph, VertexKind
from app.global_planner import GOAL, ROBOT, PlanningSnapshot, SegmentKind, plan, straight_line
from app.interaction import PushPrimitive
from app.model import Point2, Pose2

from conftest import rect

WALL = rect(4.9, -100, 5.1, 100, 'wall')


def _primitive(cost: float) -> PushPrimitive:
    return PushPrimitive('box', (), Pose2(0, 0, 0), Pose2(0, 0, 0), cost)


def _random_case(rng: np.random.Generator) -> tuple[DVGraph, nx.DiGraph, Point2, Point2]:
    graph = DVGraph()
    graph.add_polygon(WALL)
    for _ in range(rng.integers(4, 20)):
        x = rng.uniform(0, 4.8) if rng.random() < 0.5 else rng.uniform(5.2, 10)
        graph.add_vertex(Point2(x, rng.uniform(-5, 5)), VertexKind.POLYGON_VERTEX)
    ids = graph.vertex_ids
    pairs = list(itertools.combinations(ids, 2))
    visibility = {}
    for k in rng.choice(len(pairs), size=min(len(pairs), int(rng.integers(3, 40))), replace=False):
        a, b = pairs[k]
        d = graph.vertex(a).position.distance_to(graph.vertex(b).position)
        visibility[a, b] = d * rng.uniform(1.0, 1.5)
    interactions = {}
    for _ in range(rng.integers(0, 6)):
        s, t = (int(v) for v in rng.choice(ids, size=2, replace=False))
        interactions[s, t] = rng.uniform(0.5, 10)

    oracle = nx.DiGraph()

    def link(u, v, w):
        if not oracle.has_edge(u, v) or oracle[u][v]['weight'] > w:
            oracle.add_edge(u, v, weight=w)

    for (a, b), w in visibility.items():
        graph.add_visibility_edge(a, b, w)
        link(a, b, w)
        link(b, a, w)
    for (s, t), w in interactions.items():
        graph.set_interaction_edge(s, t, 'box', w, _primitive(w))
        link(s, t, w)

    robot = Point2(rng.uniform(0, 4.8), rng.uniform(-5, 5))
    goal = Point2(rng.uniform(5.2, 10), rng.uniform(-5, 5))
    for v in graph.vertices():
        if geometry.segment_visible(robot, v.position, [WALL]):
            link(ROBOT, v.id, robot.distance_to(v.position))
        if geometry.segment_visible(v.position, goal, [WALL]):
            link(v.id, GOAL, v.position.distance_to(goal))
    return graph, oracle, robot, goal


def _check_against_oracle(rng: np.random.Generator) -> bool:
    graph, oracle, robot, goal = _random_case(rng)
    path = plan(graph, robot, goal)
    try:
        expected = nx.dijkstra_path_length(oracle, ROBOT, GOAL)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        assert path is None
        return False
    assert path is not None
    assert path.cost == pytest.approx(expected, abs=1e-9)
    assert path.vertex_ids[0] == ROBOT and path.vertex_ids[-1] == GOAL
    assert path.positions[0] == robot and path.positions[-1] == goal
    return True


def test_plan_matches_dijkstra():
    rng = np.random.default_rng(1)
    assert sum(_check_against_oracle(rng) for _ in range(50)) > 0


@pytest.mark.slow
def test_plan_matches_dijkstra_randomized():
    rng = np.random.default_rng(2)
    assert sum(_check_against_oracle(rng) for _ in range(1000)) > 100


def _gap_graph(interaction_cost: float = None) -> DVGraph:
    """A wall along x = 5 with a gap between y = -10 and y = 10, and optionally a push through it at y = 0."""
    graph = DVGraph()
    graph.add_polygon(rect(4.9, -100, 5.1, -10, 'wall:s'))
    graph.add_polygon(rect(4.9, 10, 5.1, 100, 'wall:n'))
    graph.add_polygon(rect(4.9, -1, 5.1, 1, 'door'))
    graph.connect_visible(graph.vertex_ids)
    if interaction_cost is not None:
        s = graph.add_vertex(Point2(4.5, 0), VertexKind.TOPO_WAYPOINT, object_id='box', component_id=0)
        t = graph.add_vertex(Point2(5.5, 0), VertexKind.TOPO_WAYPOINT, object_id='box', component_id=1)
        graph.set_interaction_edge(s, t, 'box', interaction_cost, _primitive(interaction_cost))
    return graph


def test_open_path_is_shortest():
    path = plan(_gap_graph(), Point2(0, 0), Point2(10, 0))
    assert path is not None
    assert path.interaction_count == 0
    assert path.pushed_objects == []
    assert all(k == SegmentKind.VISIBILITY for k in path.kinds)
    assert path.cost == pytest.approx(path.length)
    # Around a corner of the door block
    assert path.length == pytest.approx(2 * np.hypot(4.9, 1) + 0.2)


def test_cheap_push_is_preferred():
    path = plan(_gap_graph(interaction_cost=0.5), Point2(0, 0), Point2(10, 0))
    assert path.interaction_count == 1
    assert path.pushed_objects == ['box']
    assert path.cost == pytest.approx(4.5 + 0.5 + 4.5)
    assert path.object_ids[1:3] == ('box', 'box')


def test_expensive_push_is_avoided():
    path = plan(_gap_graph(interaction_cost=50.0), Point2(0, 0), Point2(10, 0))
    assert path.interaction_count == 0


def test_unreachable_goal():
    graph = DVGraph()
    graph.add_polygon(WALL)
    assert plan(graph, Point2(0, 0), Point2(10, 0)) is None


def test_direct_line_of_sight():
    path = plan(DVGraph(), Point2(0, 0), Point2(3, 4))
    assert path.vertex_ids == (ROBOT, GOAL)
    assert path.cost == pytest.approx(5)


def test_connect_radius_limits_links():
    snapshot = PlanningSnapshot(_gap_graph(), connect_radius=1.0)
    assert len(snapshot) == 12
    assert plan(snapshot, Point2(0, 0), Point2(10, 0)) is None


def test_goal_inside_a_polygon_is_reachable():
    graph = _gap_graph()
    path = plan(graph, Point2(0, 0), Point2(5.0, 0.5))
    assert path is not None
    assert path.positions[-1] == Point2(5.0, 0.5)


def test_straight_line_fallback():
    path = straight_line(Point2(0, 0), Point2(3, 4))
    assert path.cost == pytest.approx(5)
    assert path.segment_count == 1
    assert path.interaction_count == 0
