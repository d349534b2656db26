import itertools
import math

import networkx as nx
import numpy as np
import pytest

from app.executor import ExecutorMode, RunTrace, TraceRow
from app.harness import Metrics, OccupancyGrid, ScenarioClass, TaskMetrics, emit_plots, generate_scenario, \
    grid_astar, load_metrics, measure_latency, occupancy, path_length, plan_on_grid, replay, run_benchmark, \
    run_task, save_metrics, spl, summary_table
from app.harness.baselines import cells_length
from app.harness.cli import main
from app.model import Point2
from app.world import load_scenario
from app.world.scenario import dumps

from conftest import rect


@pytest.mark.parametrize('successes, shortest, lengths, expected', [
    ([True], [10.0], [10.0], 1.0),
    ([True], [10.0], [20.0], 0.5),
    ([False], [10.0], [10.0], 0.0),
    ([True, False, True], [10.0, 5.0, 4.0], [10.0, 5.0, 8.0], 0.5),
    ([], [], [], 0.0),
])
def test_spl_hand_cases(successes, shortest, lengths, expected):
    assert spl(successes, shortest, lengths) == pytest.approx(expected)


def test_path_length():
    assert path_length(np.array([[0, 0], [3, 4], [3, 5]])) == pytest.approx(6)
    assert path_length(np.zeros((1, 2))) == 0.0


def test_metrics_file_round_trip(tmp_path):
    tasks = (TaskMetrics(0, True, 10.0, 8.0, 12.5, (1.0, 3.0), 1, 2), TaskMetrics(1, False, 3.0, 9.0, 60.0))
    metrics = Metrics('Room-0', 'ours', tasks)
    assert metrics.success_rate == 0.5
    assert metrics.spl == pytest.approx(0.4)
    assert metrics.mean_search_time == pytest.approx(2.0)
    path = tmp_path / 'metrics.json'
    assert save_metrics([metrics], path)
    assert load_metrics(path) == [metrics]
    assert 'ours' in summary_table([metrics])
    assert load_metrics(tmp_path / 'missing.json') is None


@pytest.mark.parametrize('kind', [c.value for c in ScenarioClass])
def test_generated_scenarios_are_deterministic(kind):
    first = generate_scenario(kind, 3)
    assert dumps(first) == dumps(generate_scenario(kind, 3))
    assert first.name == f'{kind}-3'
    assert first.tasks
    threshold = ScenarioClass(kind).path_threshold
    assert all(t.start.position.distance_to(t.goal) >= threshold for t in first.tasks)


def test_room_with_objects_has_movables():
    scenario = generate_scenario(ScenarioClass.ROOM_WITH_OBJECTS, 0)
    assert scenario.movables
    assert generate_scenario(ScenarioClass.ROOM, 0).movables == ()


def test_unknown_scenario_class():
    with pytest.raises(ValueError):
        generate_scenario('Castle', 0)


def _oracle_length(grid: OccupancyGrid, start, goal) -> float | None:
    occupied = grid.occupied
    rows, cols = occupied.shape
    graph = nx.Graph()
    for r, c in itertools.product(range(rows), range(cols)):
        if occupied[r, c]:
            continue
        graph.add_node((r, c))
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            nr, nc = r + dr, c + dc
            if not (0 <= nr < rows and 0 <= nc < cols) or occupied[nr, nc]:
                continue
            if dr and dc and (occupied[r, nc] or occupied[nr, c]):
                continue
            graph.add_edge((r, c), (nr, nc), weight=math.hypot(dr, dc))
    try:
        return nx.dijkstra_path_length(graph, start, goal)
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None


def test_grid_astar_matches_dijkstra():
    rng = np.random.default_rng(4)
    for _ in range(30):
        grid = OccupancyGrid(rng.random((25, 25)) < 0.3, Point2(0, 0), 1.0)
        free = np.argwhere(~grid.occupied)
        start, goal = (tuple(int(v) for v in free[k]) for k in rng.choice(len(free), 2, replace=False))
        cells = grid_astar(grid, start, goal)
        expected = _oracle_length(grid, start, goal)
        if expected is None:
            assert cells is None
            continue
        assert cells[0] == start and cells[-1] == goal
        assert not any(grid.occupied[c] for c in cells)
        assert cells_length(cells, 1.0) == pytest.approx(expected, abs=1e-9)


def test_plan_on_grid_straight_line():
    grid = OccupancyGrid(np.zeros((10, 10), dtype=bool), Point2(0, 0), 1.0)
    result = plan_on_grid(grid, Point2(0.5, 0.5), Point2(9.5, 0.5))
    assert result.length == pytest.approx(9)
    assert result.waypoints == [Point2(9.5, 0.5)]
    assert plan_on_grid(grid, Point2(0.5, 0.5), Point2(20, 0.5)) is None


def test_occupancy_inflation_grows_obstacles():
    plain = occupancy([rect(4, 4, 6, 6)], (0, 0, 10, 10), 0.5)
    inflated = occupancy([rect(4, 4, 6, 6)], (0, 0, 10, 10), 0.5, inflation=1.0)
    assert plain.shape == (20, 20)
    assert plain.occupied[plain.to_cell(Point2(5, 5))]
    assert not plain.occupied[plain.to_cell(Point2(3.2, 5))]
    assert inflated.occupied[inflated.to_cell(Point2(3.2, 5))]
    assert inflated.occupied.sum() > plain.occupied.sum()


def _short_trace() -> RunTrace:
    return RunTrace([TraceRow(0.1 * k, 2 + 0.1 * k, 2.0, 0.0, 'drive', '', 1.0, 0.0, False, 0.0, 7.0, '')
                     for k in range(5)])


def test_plots_are_byte_identical(empty_room, tmp_path):
    first = emit_plots(empty_room, {0: _short_trace()}, tmp_path / 'a')
    second = emit_plots(empty_room, {0: _short_trace()}, tmp_path / 'b')
    assert [p.name for p in first] == ['empty-room_task0.svg']
    assert first[0].read_bytes() == second[0].read_bytes()


def test_plot_without_traces_draws_the_map(empty_room, tmp_path):
    written = emit_plots(empty_room, {}, tmp_path)
    assert [p.name for p in written] == ['empty-room.svg']


@pytest.mark.parametrize('planner', ['ours', 'grid_astar', 'far_like'])
def test_empty_room_is_solved_by_every_planner(empty_room, planner):
    result = run_task(empty_room, 0, planner)
    assert result.metrics.success
    assert result.metrics.spl_term >= 0.95
    assert result.metrics.pushes == 0


def test_unknown_planner(empty_room):
    with pytest.raises(ValueError):
        run_task(empty_room, 0, 'teleport')


def test_replay_reproduces_the_run(empty_room):
    result = run_task(empty_room, 0, 'ours')
    assert replay(empty_room, 0, result.trace) <= 1e-6


def test_blocked_door_needs_a_push(blocked_door):
    ours = run_task(blocked_door, 0, 'ours', time_limit=120)
    assert ours.metrics.success
    assert ours.metrics.pushes >= 1
    assert ours.trace.mode_ticks(ExecutorMode.PUSH) > 0
    grid = run_task(blocked_door, 0, 'grid_astar', time_limit=120)
    assert not grid.metrics.success


def test_benchmark_writes_traces(empty_room, tmp_path):
    metrics, results = run_benchmark(empty_room, 'far_like', workers=2, out_dir=tmp_path)
    assert metrics.planner == 'far_like'
    assert len(results) == 1
    assert (tmp_path / 'empty-room_far_like_task0.csv').exists()
    assert (tmp_path / 'empty-room_far_like_task0.dvg').exists()


def test_cli_gen_and_run(tmp_path, capsys):
    assert main(['--out-dir', str(tmp_path), 'gen', '--scenario', 'Room', '--seed', '1']) == 0
    path = tmp_path / 'Room-1.json'
    scenario = load_scenario(path)
    assert dumps(scenario) == dumps(generate_scenario('Room', 1))
    assert 'task' in capsys.readouterr().out

    code = main(['--out-dir', str(tmp_path), '--config', str(tmp_path / 'config.ini'),
                 'run', '--scenario', str(path), '--planner', 'grid_astar'])
    assert code in (0, 1)
    assert (tmp_path / 'config.ini').exists()
    trace = tmp_path / 'Room-1_grid_astar_task0.csv'
    assert RunTrace.load(trace) is not None
    assert main(['--out-dir', str(tmp_path), 'replay', '--scenario', str(path), '--trace', str(trace)]) == 0


def test_cli_rejects_missing_scenario(tmp_path):
    assert main(['--out-dir', str(tmp_path), 'run', '--scenario', str(tmp_path / 'missing.json')]) == -1


@pytest.mark.slow
def test_graph_search_is_much_faster_than_grid():
    report = measure_latency(generate_scenario(ScenarioClass.TUNNEL, 0), queries=50, grid_queries=3)
    assert report.grid_times
    assert report.speedup >= 10


@pytest.mark.slow
def test_pushing_beats_detours():
    scenario = generate_scenario(ScenarioClass.ROOM_WITH_OBJECTS, 0)
    ours, _ = run_benchmark(scenario, 'ours', workers=4)
    far, _ = run_benchmark(scenario, 'far_like', workers=4)
    assert ours.spl >= far.spl + 0.10


@pytest.mark.slow
def test_tunnel_graph_search_latency():
    report = measure_latency(generate_scenario(ScenarioClass.TUNNEL, 0), queries=100, grid_queries=0)
    assert report.vertices >= 1500
    assert len(report.graph_times) == 100
    assert report.median_graph_time <= 10


@pytest.mark.slow
def test_pushing_shortens_office_travel():
    scenario = generate_scenario(ScenarioClass.OFFICE, 0, tasks=5)
    ours, _ = run_benchmark(scenario, 'ours', workers=4)
    far, _ = run_benchmark(scenario, 'far_like', workers=4)
    assert all(t.success for t in ours.tasks)
    assert all(t.success for t in far.tasks)
    assert sum(t.path_length for t in ours.tasks) <= 0.75 * sum(t.path_length for t in far.tasks)
