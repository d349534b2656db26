import math

import numpy as np
import pytest

from app import dvgraph, geometry
from app.config import Config, MappingConfig
from app.dvgraph import DVGraph, FieldOfView, GraphFormatError, VertexKind, build_local_graph, \
    connectivity_analysis, merge_local_into_global, verify_topo_visibility
from app.extraction import GridFrame, PolygonSetLocal
from app.global_planner import plan
from app.interaction import Affordance, ContactPoint, ContactSwitch, PushPrimitive, PushSegment
from app.model import Point2, PolygonClass, Pose2
from app.world import World

from conftest import corridor_polys, enclosure, rect, square


def _corridor_case(rng: np.random.Generator) -> PolygonSetLocal:
    gap = rng.uniform(0.9, 1.6)
    half = rng.uniform(max(0.25, gap / 2 - 0.28), 0.6)
    origin = Point2(*rng.uniform(-3, 3, 2))
    polys = corridor_polys(gap, half)
    shift = Pose2(origin.x + rng.uniform(-0.1, 0.1), origin.y, 0.0)
    return PolygonSetLocal(
        GridFrame.centered(origin, MappingConfig(local_size=20.0)),
        tuple(p.transformed(shift) for p in polys.background),
        tuple((oid, p.transformed(shift)) for oid, p in polys.movable),
    )


def _check_waypoints(polys: PolygonSetLocal) -> int:
    components = connectivity_analysis(polys, 'box')
    if len(components) < 2:
        return 0
    for c in components:
        assert c.waypoint is not None
        assert c.contains(c.waypoint.position)
        assert verify_topo_visibility(c.waypoint, c) >= 3
        assert c.waypoint.offset <= MappingConfig().waypoint_offset + 1e-9
    return len(components)


def test_local_graph_edges_are_visible():
    polys = corridor_polys()
    graph = build_local_graph(polys)
    assert len(graph) == sum(len(p) for p in polys.polygons())
    assert graph.visibility_edges()
    for e in graph.visibility_edges():
        a, b = graph.vertex(e.a).position, graph.vertex(e.b).position
        assert geometry.segment_visible(a, b, polys.polygons())
        assert e.length == pytest.approx(a.distance_to(b))


def test_reduced_graph_is_a_subgraph():
    polys = corridor_polys()
    full = {(e.a, e.b) for e in build_local_graph(polys).visibility_edges()}
    reduced = {(e.a, e.b) for e in build_local_graph(polys, reduced=True).visibility_edges()}
    assert reduced <= full
    assert len(reduced) < len(full)


def test_movable_vertices_keep_their_object():
    graph = build_local_graph(corridor_polys())
    movable = graph.object_polygon('box')
    assert movable.kind == PolygonClass.MOVABLE
    assert all(v.object_id == 'box' for v in graph.vertices() if v.polygon_id == movable.id)


def test_blocking_object_splits_free_space():
    components = connectivity_analysis(corridor_polys(), 'box')
    assert len(components) == 2
    sides = sorted(math.copysign(1, c.waypoint.position.y) for c in components)
    assert sides == [-1, 1]
    for c in components:
        assert verify_topo_visibility(c.waypoint, c) >= 3


def test_object_in_the_open_does_not_split():
    frame = GridFrame.centered(Point2(0, 0), MappingConfig(local_size=20.0))
    polys = PolygonSetLocal(frame, (geometry.inflate(rect(-8, 3, 8, 3.3, 'bg:0'), 0.15),),
                            (('box', geometry.inflate(square(0, 0, 0.4, 'mov:box'), 0.15)),))
    components = connectivity_analysis(polys, 'box')
    assert len(components) == 1
    assert components[0].waypoint is None


def test_unknown_object_is_rejected():
    with pytest.raises(KeyError):
        connectivity_analysis(corridor_polys(), 'missing')


def test_waypoints_see_their_component():
    rng = np.random.default_rng(7)
    splits = sum(_check_waypoints(_corridor_case(rng)) > 0 for _ in range(20))
    assert splits > 0


@pytest.mark.slow
def test_waypoints_see_their_component_randomized():
    rng = np.random.default_rng(11)
    splits = sum(_check_waypoints(_corridor_case(rng)) > 0 for _ in range(500))
    assert splits > 250


def _world_graph(*polygons) -> DVGraph:
    frame = GridFrame.centered(Point2(0, 0))
    return build_local_graph(PolygonSetLocal(frame, tuple(polygons)))


def test_vanished_vertices_are_voted_out():
    config = MappingConfig()
    graph = _world_graph(square(5, 0, 0.5, 'bg:0', PolygonClass.BACKGROUND))
    fov = FieldOfView(Point2(0, 0), 15.0)
    for update in range(1, config.voting_threshold):
        graph = merge_local_into_global(graph, DVGraph(), fov, config)
        assert len(graph) == 4
        assert all(v.unobserved_count == update for v in graph.vertices())
    graph = merge_local_into_global(graph, DVGraph(), fov, config)
    assert len(graph) == 0
    assert graph.polygon_records() == []


def test_out_of_view_vertices_persist():
    graph = _world_graph(square(20, 0, 0.5, 'bg:0', PolygonClass.BACKGROUND))
    fov = FieldOfView(Point2(0, 0), 15.0)
    for _ in range(1000):
        graph = merge_local_into_global(graph, DVGraph(), fov)
    assert len(graph) == 4
    assert all(v.unobserved_count == 0 for v in graph.vertices())


def test_no_vote_without_field_of_view():
    graph = _world_graph(square(5, 0, 0.5, 'bg:0', PolygonClass.BACKGROUND))
    for _ in range(10):
        graph = merge_local_into_global(graph, DVGraph())
    assert len(graph) == 4


def test_reobserved_vertices_are_matched():
    polygon = square(5, 0, 0.5, 'bg:0', PolygonClass.BACKGROUND)
    graph = _world_graph(polygon)
    fov = FieldOfView(Point2(0, 0), 15.0)
    for _ in range(10):
        graph = merge_local_into_global(graph, _world_graph(polygon), fov)
    assert len(graph) == 4
    assert all(v.unobserved_count == 0 for v in graph.vertices())


def test_merge_rejects_other_frames():
    with pytest.raises(dvgraph.FrameMismatchError):
        merge_local_into_global(DVGraph('world'), DVGraph('odom'))


def test_merge_does_not_modify_its_input():
    graph = _world_graph(square(5, 0, 0.5, 'bg:0', PolygonClass.BACKGROUND))
    before = dvgraph.dumps(graph)
    merge_local_into_global(graph, DVGraph(), FieldOfView(Point2(0, 0), 15.0))
    assert dvgraph.dumps(graph) == before


def _graph_with_interaction() -> DVGraph:
    graph = build_local_graph(corridor_polys(), reduced=True)
    s = graph.add_vertex(Point2(0, -1), VertexKind.TOPO_WAYPOINT, object_id='box', component_id=0)
    t = graph.add_vertex(Point2(0, 1), VertexKind.TOPO_WAYPOINT, object_id='box', component_id=1)
    graph.connect_visible([s, t])
    contact = ContactPoint(0, 0.5, Point2(0, -0.4), Point2(0, 1))
    other = ContactPoint(1, 0.25, Point2(0.4, -0.2), Point2(-1, 0))
    segment = PushSegment(contact, 0.2, 0.1, 1.5, Pose2(0, 0, 0), Pose2(0, -0.55, math.pi / 2))
    switch = ContactSwitch(contact, other, (Point2(0, -0.6), Point2(0.6, -0.6), Point2(0.55, -0.2)))
    primitive = PushPrimitive('box', (segment, switch), Pose2(0, 0, 0), segment.object_end, 0.3 + switch.length)
    graph.set_interaction_edge(s, t, 'box', primitive.cost, primitive)
    graph.set_interaction_edge(t, s, 'box', primitive.cost, primitive)
    graph.set_affordance(Affordance('box', friction=0.4, effort=2.0, resistance=3.5))
    graph.suppress_interaction(graph.interaction_edge(s, t))
    return graph


def test_text_format_round_trip(tmp_path):
    graph = _graph_with_interaction()
    text = dvgraph.dumps(graph)
    loaded = dvgraph.loads(text)
    assert dvgraph.dumps(loaded) == text
    assert dvgraph.graph_summary(loaded) == dvgraph.graph_summary(graph)
    assert loaded.interaction_edges()[0].primitive == graph.interaction_edges()[0].primitive

    path = tmp_path / 'graph.dvg'
    assert dvgraph.save_graph(graph, path)
    assert dvgraph.dumps(dvgraph.load_graph(path)) == text


def test_set_affordance_rescales_costs():
    graph = _graph_with_interaction()
    edge = graph.interaction_edges()[0]
    assert edge.cost == pytest.approx(edge.primitive.push_length * 2.0 + edge.primitive.switch_length)
    graph.set_affordance(Affordance('box', pushable=False))
    assert graph.interaction_edges() == []


@pytest.mark.parametrize('text', [
    '',
    'dvgraph 1\nframe "world"\nvertex 0 corner x 0.0 0 - - -\n',
    'dvgraph 2\nframe "world"\n',
    'dvgraph 1\nframe "world"\nvisible 0 1 1.0\n',
])
def test_malformed_graphs(text):
    with pytest.raises(GraphFormatError):
        dvgraph.loads(text)


def test_missing_graph_file(tmp_path):
    assert dvgraph.load_graph(tmp_path / 'missing.dvg') is None


def test_updater_builds_waypoints_and_interactions(blocked_door):
    world = World.from_scenario(blocked_door, 0)
    updater = dvgraph.GraphUpdater(Config())
    graph = updater.update(world.scan())
    assert updater.stats.updates == 1
    waypoints = graph.waypoints('box0')
    assert len(waypoints) == 2
    assert updater.stats.gamma_calls == 2
    assert graph.interaction_edges('box0')
    # The same frame again hits the cache
    updater.update(world.scan())
    assert updater.stats.gamma_calls == 2
    assert updater.stats.cache_hits >= 1


def test_non_interactive_updater_has_no_interaction_edges(blocked_door):
    world = World.from_scenario(blocked_door, 0)
    updater = dvgraph.GraphUpdater(Config(), interactive=False)
    graph = updater.update(world.scan())
    assert graph.waypoints('box0')
    assert graph.interaction_edges() == []


def test_prior_graph_of_a_room():
    graph = dvgraph.build_prior_graph(enclosure(10, 8))
    assert graph.polygons(PolygonClass.BACKGROUND)
    assert all(p.id.startswith('bg:') for p in graph.polygons())
    path = plan(graph, Point2(2, 2), Point2(8, 6))
    assert path.cost == pytest.approx(math.hypot(6, 4))


def test_prior_graph_keeps_objects():
    graph = dvgraph.build_prior_graph(enclosure(10, 8), [('box0', square(5, 4, 0.4, 'box0'))])
    movable = graph.object_polygon('box0')
    assert movable.id == 'mov:box0'
    assert movable.contains(Point2(5, 4.5))
    path = plan(graph, Point2(2, 4), Point2(8, 4))
    assert path.length > 6
