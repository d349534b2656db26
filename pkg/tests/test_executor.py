import math

import pytest

from app import dvgraph
from app.config import Config, ExecutorConfig
from app.dvgraph import DVGraph, GraphUpdater
from app.executor import AdaptationParams, Command, Executor, ExecutorMode, Observation, PlanningThread, RunTrace, \
    TraceRow, drive_command
from app.global_planner import PlanningSnapshot
from app.harness import run_task
from app.model import Point2, Pose2
from app.world import ForceReading, World


def _rows() -> list[TraceRow]:
    return [
        TraceRow(0.0, 1.0, 2.0, 0.5, 'replan', '', 0.0, 0.0, False, 0.0, None, 'replan'),
        TraceRow(0.1, 1.05, 2.0, 0.5, 'drive', '', 0.5, -0.25, False, 0.0, 12.375, ''),
        TraceRow(0.2, 1.1, 2.0, 0.5, 'push', 'box0', 0.2, 0.0, True, 2.943, 12.3, 'approach;push'),
    ]


def test_trace_text_round_trip(tmp_path):
    trace = RunTrace(_rows())
    loaded = RunTrace.loads(trace.dumps())
    assert loaded.rows == trace.rows
    assert trace.dumps().splitlines()[0] == ','.join(RunTrace.COLUMNS)

    path = tmp_path / 'runs' / 'trace.csv'
    assert trace.save(path)
    assert RunTrace.load(path).rows == trace.rows


def test_trace_queries():
    trace = RunTrace(_rows())
    assert len(trace) == 3
    assert [r.timestamp for r in trace.events('push')] == [0.2]
    assert len(trace.events()) == 2
    assert trace.mode_ticks(ExecutorMode.DRIVE) == 1
    assert trace.positions().shape == (3, 2)
    assert RunTrace().positions().shape == (0, 2)


def test_malformed_trace(tmp_path):
    with pytest.raises(ValueError):
        RunTrace.loads('a,b,c\n1,2,3\n')
    assert RunTrace.load(tmp_path / 'missing.csv') is None


def test_adaptation_params_validation():
    with pytest.raises(ValueError):
        AdaptationParams(approach_radius=0.1)
    with pytest.raises(ValueError):
        AdaptationParams(cost_threshold=0.0)
    params = AdaptationParams.from_config(ExecutorConfig(approach_radius=1.5, replan_cap=4))
    assert params.approach_radius == 1.5
    assert params.replan_cap == 4


def test_drive_command_turns_in_place():
    v, omega = drive_command(Pose2(0, 0, 0), Point2(0, 1))
    assert v == 0.0
    assert omega == pytest.approx(ExecutorConfig().max_yaw_rate)
    v, omega = drive_command(Pose2(0, 0, 0), Point2(2, 0))
    assert 0 < v <= ExecutorConfig().max_speed
    assert omega == pytest.approx(0)
    assert drive_command(Pose2(1, 1, 0), Point2(1, 1)) == (0.0, 0.0)


def _observe(world: World, graph_updated: bool = True) -> Observation:
    return Observation(world.time, world.robot_pose, ForceReading.none(world.time), graph_updated=graph_updated)


def test_executor_plans_and_drives(empty_room):
    world = World.from_scenario(empty_room, 0)
    updater = GraphUpdater(Config())
    updater.update(world.scan())
    executor = Executor(updater, empty_room.tasks[0].goal)
    command = executor.tick(_observe(world), 0.1)
    assert executor.mode == ExecutorMode.DRIVE
    assert executor.state.path is not None
    assert executor.state.path.interaction_count == 0
    assert command.push_object is None
    assert executor.replans == 1
    assert len(executor.trace) == 1
    assert 'replan' in executor.trace.rows[0].event.split(';')


def test_executor_stops_at_goal(empty_room):
    world = World.from_scenario(empty_room, 0)
    updater = GraphUpdater(Config())
    executor = Executor(updater, world.robot_pose.position + Point2(0.1, 0))
    assert executor.tick(_observe(world), 0.1) == Command.stop()
    assert executor.mode == ExecutorMode.DONE
    assert executor.trace.events('done')
    # Later ticks keep the robot still
    assert executor.tick(_observe(world), 0.1) == Command.stop()


def test_unmoved_object_becomes_unpushable(blocked_door):
    world = World.from_scenario(blocked_door, 0)
    updater = GraphUpdater(Config())
    graph = updater.update(world.scan())
    assert graph.interaction_edges('box0')
    executor = Executor(updater, blocked_door.tasks[0].goal)
    limit = executor.config.executor.max_push_force
    for i in range(executor.params.max_push_attempts - 1):
        assert executor.update_affordance('box0', ForceReading(0.1 * i, limit, True), moved=False).pushable
    affordance = executor.update_affordance('box0', ForceReading(1.0, limit, True), moved=False)
    assert not affordance.pushable
    assert not executor.graph.affordance('box0').pushable
    assert executor.graph.interaction_edges('box0') == []


def test_force_reading_sets_effort(blocked_door):
    world = World.from_scenario(blocked_door, 0)
    updater = GraphUpdater(Config())
    updater.update(world.scan())
    executor = Executor(updater, blocked_door.tasks[0].goal)
    nominal = executor.config.interaction.nominal_force
    affordance = executor.update_affordance('box0', ForceReading(0.0, 2 * nominal, True), moved=True)
    assert affordance.effort == pytest.approx(2.0)
    assert affordance.resistance == pytest.approx(2 * nominal)
    for edge in executor.graph.interaction_edges('box0'):
        assert edge.cost == pytest.approx(edge.primitive.with_effort(2.0))
    # Readings without contact leave the estimate alone
    assert executor.update_affordance('box0', ForceReading.none(0.1), moved=True) == affordance


def test_synchronous_planning_leaves_no_thread(empty_room):
    world = World.from_scenario(empty_room, 0)
    updater = GraphUpdater(Config())
    updater.update(world.scan())
    executor = Executor(updater, empty_room.tasks[0].goal)
    executor.tick(_observe(world), 0.1)
    assert not executor.thread_pending
    executor.cancel_planning()
    assert math.isfinite(executor.search_times[0])


def test_cancelled_planning_thread_publishes_nothing():
    thread = PlanningThread(PlanningSnapshot(DVGraph()), Point2(0, 0), Point2(3, 4), 0.0)
    thread.cancel()
    thread.start()
    thread.join()
    assert thread.result is None
    assert not thread.failed

    thread = PlanningThread(PlanningSnapshot(DVGraph()), Point2(0, 0), Point2(3, 4), 0.0)
    thread.start()
    thread.join()
    assert thread.result.cost == pytest.approx(5)


def test_immovable_object_is_given_up_and_bypassed(heavy_door):
    result = run_task(heavy_door, 0, 'ours', time_limit=180)
    rows = result.trace.rows
    given_up = [i for i, r in enumerate(rows) if 'not pushable' in r.event.split(';')]
    assert given_up
    # Saturated readings seen before the object was marked
    contact = [r for r in rows[:given_up[0] + 1] if r.force > 0]
    assert 0 < len(contact) <= ExecutorConfig().not_moved_ticks
    assert not result.graph.affordance('box0').pushable
    text = dvgraph.dumps(result.graph)
    assert not [line for line in text.splitlines() if line.startswith('interaction ') and '"box0"' in line]
    assert 'affordance "box0" false' in text
    assert result.metrics.success
    assert result.metrics.pushes >= 1
    # The detour goes through the far doorway
    assert result.trace.positions()[:, 1].max() > 10
