import math

import numpy as np
import pytest

from app import geometry
from app.dvgraph import DVGraph, VertexKind
from app.harness.runner import resolve_contact
from app.interaction import Affordance, ContactError, ContactPoint, ContactSwitch, PushProblem, PushSearchFailure, \
    PushSegment, SearchState, expand_state, footprint_of, gamma, heuristic_polygons, is_sticking, \
    pusher_frame_offset, sample_contacts, search_primitive, stable_cone
from app.interaction.push import characteristic_length
from app.model import Point2, Pose2
from app.world import RobotTruth, World

from conftest import box, corridor_polys, rect, square

START = Point2(0, -1.5)
GOAL = Point2(0, 1.5)


def _search(polys, affordance=None, **kwargs):
    (oid, movable), = polys.movable
    return search_primitive(START, GOAL, movable, polys.background, affordance or Affordance(oid), **kwargs)


def test_centered_contact_pushes_straight():
    body = square(0, 0, 0.4)
    contact = ContactPoint(0, 0.5, Point2(0, -0.4), Point2(0, 1))
    assert pusher_frame_offset(body, contact).as_tuple() == pytest.approx((0.4, 0))
    cone = stable_cone(body, contact, 0.5)
    assert not cone.is_empty
    assert cone.kappa_min < 0 < cone.kappa_max
    assert cone.contains(0.2, 0.0)
    assert not cone.contains(0.0, 0.0)
    assert cone.curvatures(5)[0] == pytest.approx(cone.kappa_min)
    assert cone.curvatures(5)[-1] == pytest.approx(cone.kappa_max)


def test_cone_matches_sticking_conditions():
    body = rect(-0.3, -0.4, 0.5, 0.1)
    c = characteristic_length(body)
    for contact in sample_contacts(body):
        for k in (0.2, 0.5, 1.0):
            cone = stable_cone(body, contact, k, c=c)
            offset = pusher_frame_offset(body, contact)
            for kappa in np.linspace(-5, 5, 201):
                if abs(kappa - cone.kappa_min) < 1e-6 or abs(kappa - cone.kappa_max) < 1e-6:
                    continue
                expected = is_sticking(offset, c, k, 0.2, float(kappa))
                assert cone.contains(1.0, float(kappa)) == expected


def test_contacts_fit_on_the_edges():
    contacts = sample_contacts(square(0, 0, 0.4), 0.2)
    assert len(contacts) == 12
    assert all(c.normal.norm == pytest.approx(1) for c in contacts)
    assert sample_contacts(square(0, 0, 0.05), 0.2) == []


def test_cone_rejects_bad_input():
    body = square(0, 0, 0.4)
    contact = ContactPoint(0, 0.5, Point2(0, -0.4), Point2(0, 1))
    with pytest.raises(ContactError):
        stable_cone(body, contact, 0.0)
    with pytest.raises(ContactError):
        ContactPoint(0, 1.5, Point2(0, 0), Point2(0, 1))


def test_footprint_of_thin_object():
    with pytest.raises(ContactError):
        footprint_of(square(0, 0, 0.1), 0.15)
    footprint = footprint_of(geometry.inflate(square(0, 0, 0.4, 'mov:box'), 0.15), 0.15)
    assert footprint.area == pytest.approx(0.64, abs=0.01)


def test_affordance_validation():
    with pytest.raises(ValueError):
        Affordance('box', effort=0)
    with pytest.raises(ValueError):
        Affordance('box', friction=-1)


def test_search_finds_admissible_primitive():
    polys = corridor_polys()
    (oid, movable), = polys.movable
    primitive = _search(polys)
    assert not primitive.is_empty
    assert primitive.object_id == 'box'
    assert primitive.segments
    assert primitive.cost == pytest.approx(primitive.push_length + primitive.switch_length)
    _, h = heuristic_polygons(movable, polys.background)
    assert h > 0
    assert h <= primitive.cost + 1e-9
    problem = PushProblem(START, GOAL, movable, polys.background, Affordance(oid))
    assert problem.connected(primitive.result_pose)
    assert not problem.connected(problem.origin)


def test_search_trace_lists_expansions():
    trace = []
    _search(corridor_polys(), trace=trace)
    assert trace
    assert trace[0].startswith('1 contact=')


def test_unpushable_object_is_not_searched():
    with pytest.raises(PushSearchFailure) as info:
        _search(corridor_polys(), Affordance('box', pushable=False))
    assert info.value.reason == PushSearchFailure.NOT_PUSHABLE


def test_already_connected_waypoints_give_empty_primitive():
    polys = corridor_polys(gap=3.0)
    primitive = _search(polys)
    assert primitive.is_empty
    assert primitive.cost == 0.0
    assert primitive.result_pose == primitive.start_pose


def test_primitive_replays_in_the_world():
    polys = corridor_polys()
    primitive = _search(polys)
    walls = [rect(-8, -0.15, -0.6, 0.15), rect(0.6, -0.15, 8, 0.15)]
    world = World(walls, [box('box', 0, 0)], RobotTruth())
    for segment in primitive.segments:
        world.place_robot(segment.robot_start)
        contact = resolve_contact(world, 'box', 0.05)
        assert contact is not None
        outcome = world.step_push('box', contact, segment.v, segment.omega, segment.duration)
        assert outcome.moved
    pose = world.object('box').pose
    assert pose.position.distance_to(primitive.result_pose.position) < 0.05
    assert abs(math.remainder(pose.psi - primitive.result_pose.psi, 2 * math.pi)) < math.radians(5)


def test_segment_kinematics():
    contact = ContactPoint(0, 0.5, Point2(0, -0.4), Point2(0, 1))
    segment = PushSegment(contact, 0.2, 0.0, 1.5, Pose2(0, 0, math.pi / 2), Pose2(0, -0.55, math.pi / 2))
    assert segment.length == pytest.approx(0.3)
    assert segment.robot_end.as_tuple() == pytest.approx((0, -0.25, math.pi / 2))
    assert segment.object_end.as_tuple() == pytest.approx((0, 0.3, math.pi / 2))


@pytest.mark.slow
def test_heuristic_is_admissible_randomized():
    rng = np.random.default_rng(5)
    solved = 0
    for _ in range(200):
        gap = rng.uniform(0.9, 1.6)
        half = rng.uniform(max(0.25, gap / 2 - 0.28), 0.6)
        polys = corridor_polys(gap, half)
        (oid, movable), = polys.movable
        affordance = Affordance(oid, effort=float(rng.uniform(0.5, 3.0)))
        try:
            primitive = _search(polys, affordance)
        except PushSearchFailure:
            continue
        _, h = heuristic_polygons(movable, polys.background, affordance.effort)
        assert h <= primitive.cost + 1e-9
        solved += 1
    assert solved > 100


def test_expand_state_costs():
    polys = corridor_polys()
    (oid, movable), = polys.movable
    problem = PushProblem(START, GOAL, movable, polys.background, Affordance(oid, effort=2.0))
    contact = problem.reachable_contacts()[0]
    successors = expand_state(problem, SearchState(contact, problem.origin))
    pushes = [(s, c) for s, c, a in successors if isinstance(a, PushSegment)]
    switches = [(s, c, a) for s, c, a in successors if isinstance(a, ContactSwitch)]
    assert pushes
    assert all(c == pytest.approx(problem.arc_length * 2.0) for _, c in pushes)
    assert all(s.contact == contact and s.pose != problem.origin for s, _ in pushes)
    assert all(s.pose == problem.origin and c == pytest.approx(a.length) for s, c, a in switches)
    assert not any(isinstance(a, ContactSwitch)
                   for _, _, a in expand_state(problem, SearchState(contact, problem.origin), allow_switch=False))


def test_gamma_installs_and_removes_edges():
    polys = corridor_polys()
    (oid, movable), = polys.movable
    graph = DVGraph()
    s = graph.add_vertex(START, VertexKind.TOPO_WAYPOINT, object_id=oid, component_id=0)
    t = graph.add_vertex(GOAL, VertexKind.TOPO_WAYPOINT, object_id=oid, component_id=1)
    cost, primitive, affordance = gamma(START, GOAL, movable, polys.background, Affordance(oid), graph=graph,
                                        edge=(s, t))
    assert cost == primitive.cost
    assert graph.interaction_edge(s, t).cost == cost
    with pytest.raises(PushSearchFailure):
        gamma(START, GOAL, movable, polys.background, Affordance(oid, pushable=False), graph=graph, edge=(s, t))
    assert graph.interaction_edge(s, t) is None
