"""Closed-loop simulation of tasks: world, graph update cycle and executor, or the dense-grid baseline."""
from __future__ import annotations

import dataclasses
import math
import pathlib
import statistics
import threading
import time
import typing as typ

import numpy as np
import shapely.geometry as sg

from .. import constants, dvgraph
from ..config import Config
from ..dvgraph import DVGraph, GraphUpdater, build_prior_graph
from ..executor import Command, Executor, ExecutorMode, Observation, RunTrace, TraceRow, drive_command
from ..global_planner import PlanningSnapshot, plan
from ..logging import logger
from ..model import Point2
from ..utils.threads import WorkerThread
from ..world import Scenario, World, WorldError
from .baselines import occupancy, plan_on_grid, shortest_length
from .metrics import Metrics, TaskMetrics, path_length

PLANNERS = ('ours', 'grid_astar', 'far_like')
# Ticks without progress after which the grid baseline gives up
_STALL_TICKS = 50
# Prior-map vertices farther apart than this are not linked, in meters
PRIOR_LINK_RANGE = 30.0


@dataclasses.dataclass(frozen=True)
class RunResult:
    metrics: TaskMetrics
    trace: RunTrace
    graph: DVGraph | None = None


def robot_config(config: Config, scenario: Scenario) -> Config:
    """The config adjusted to the scenario’s robot."""
    r = scenario.robot
    return config.for_robot(r.radius, r.max_speed, r.max_yaw_rate, r.max_push_force, r.contact_width)


def default_time_limit(scenario: Scenario, task_index: int) -> float:
    task = scenario.tasks[task_index]
    return max(120.0, 10 * task.start.position.distance_to(task.goal) / scenario.robot.max_speed)


def resolve_contact(world: World, object_id: str, tolerance: float) -> Point2 | None:
    """Projects the robot’s front point onto the boundary of an object.

    :param world: The world.
    :param object_id: The touched object.
    :param tolerance: Largest accepted distance between the front point and the boundary.
    :return: The contact point, or None if the robot does not touch the object.
    """
    pose = world.robot_pose
    r = world.robot.radius
    front = sg.Point(pose.x + r * math.cos(pose.psi), pose.y + r * math.sin(pose.psi))
    ring = world.object_polygon(object_id).shape.exterior
    if ring.distance(front) > tolerance:
        return None
    p = ring.interpolate(ring.project(front))
    return Point2(p.x, p.y)


def apply_command(world: World, command: Command, dt: float, contact_tolerance: float):
    """Moves the world by one tick. A push without contact degrades to driving into the object."""
    robot = world.robot
    v = float(np.clip(command.v, -robot.max_speed, robot.max_speed))
    omega = float(np.clip(command.omega, -robot.max_yaw_rate, robot.max_yaw_rate))
    if command.push_object is not None:
        contact = resolve_contact(world, command.push_object, contact_tolerance)
        if contact is not None:
            world.step_push(command.push_object, contact, v, omega, dt)
            return
    world.step_drive(v, omega, dt)


def run_task(scenario: Scenario, task_index: int, planner: str = 'ours', config: Config = None,
             time_limit: float = None, prior: DVGraph = None, shortest: float = None) -> RunResult:
    """Runs one task of a scenario until success or timeout.

    :param scenario: The scenario.
    :param task_index: The task.
    :param planner: One of PLANNERS.
    :param config: Settings; the defaults if None.
    :param time_limit: Simulated seconds before the task fails; a multiple of the straight-line travel time if None.
    :param prior: Prior map of the graph-based planners.
    :param shortest: Oracle shortest length; computed by dense-grid A* if None.
    :return: The metrics, the trace and, for graph-based planners, the final graph.
    :raise ValueError: If the planner is unknown.
    """
    if planner not in PLANNERS:
        raise ValueError(f'unknown planner {planner!r}, expected one of {", ".join(PLANNERS)}')
    cfg = robot_config(config or Config(), scenario)
    task = scenario.tasks[task_index]
    if shortest is None:
        shortest = shortest_length(scenario, task_index)
        if shortest is None:
            logger.warning(f'{scenario.name} task {task_index}: goal unreachable on the oracle grid')
            shortest = task.start.position.distance_to(task.goal)
    time_limit = time_limit or default_time_limit(scenario, task_index)
    dt = 1 / cfg.sensor.rate
    ticks = math.ceil(round(time_limit / dt, 6))
    world = World.from_scenario(scenario, task_index, cfg.sensor)

    if planner == 'grid_astar':
        success, trace, search_times, replans, graph = _follow_grid(world, scenario, task.goal, cfg, dt, ticks)
        pushes = 0
    else:
        success, trace, search_times, replans, graph = _follow_graph(world, task.goal, cfg, dt, ticks,
                                                                     interactive=planner == 'ours', prior=prior)
        pushes = len(trace.events('push'))
    metrics = TaskMetrics(
        task_index=task_index,
        success=success,
        path_length=path_length(trace.positions()),
        shortest_length=shortest,
        travel_time=world.time,
        search_times=tuple(t * 1000 for t in search_times),
        pushes=pushes,
        replans=replans,
    )
    logger.info(f'{scenario.name} task {task_index} [{planner}]: success={success} p={metrics.path_length:.2f} '
                f'l={shortest:.2f} t={world.time:.1f}s')
    return RunResult(metrics, trace, graph)


def _follow_graph(world: World, goal: Point2, config: Config, dt: float, ticks: int, interactive: bool,
                  prior: DVGraph | None):
    updater = GraphUpdater(config, interactive=interactive, prior=prior)
    executor = Executor(updater, goal, config)
    every = max(1, config.sensor.update_every)
    tolerance = config.executor.contact_tolerance
    for k in range(ticks):
        scan = world.scan()
        updated = k % every == 0
        if updated:
            updater.update(scan)
        observation = Observation(world.time, world.robot_pose, world.last_force, scan, updated)
        command = executor.tick(observation, dt)
        if executor.mode in (ExecutorMode.DONE, ExecutorMode.FAILED):
            break
        try:
            apply_command(world, command, dt, tolerance)
        except WorldError as e:
            logger.exception(e)
            break
        world.advance_time(dt)
    success = executor.mode == ExecutorMode.DONE
    if executor.thread_pending:
        executor.cancel_planning()
    return success, executor.trace, executor.search_times, executor.replans, updater.graph


def _follow_grid(world: World, scenario: Scenario, goal: Point2, config: Config, dt: float, ticks: int):
    """Plans once on the known map, inflated by the robot radius and the clearance margin, then follows the path."""
    cfg = config.executor
    polygons = list(scenario.background) + [o.polygon() for o in scenario.movables]
    grid = occupancy(polygons, scenario.bounds, config.mapping.resolution,
                     inflation=cfg.robot_radius + cfg.clearance_margin)
    result = plan_on_grid(grid, world.robot_pose.position, goal)
    trace = RunTrace()
    search_times = [result.solve_time] if result is not None else []
    if result is None:
        logger.warning('grid A* found no path')
        pose = world.robot_pose
        trace.append(TraceRow(world.time, pose.x, pose.y, pose.psi, ExecutorMode.FAILED.value, '', 0.0, 0.0, False,
                              0.0, None, 'failed'))
        return False, trace, search_times, 0, None

    waypoints = list(result.waypoints)
    success = False
    stalled = 0
    event = 'plan'
    for _ in range(ticks):
        pose = world.robot_pose
        while len(waypoints) > 1 and pose.position.distance_to(waypoints[0]) <= config.mapping.resolution:
            waypoints.pop(0)
        if pose.position.distance_to(goal) < cfg.goal_tolerance:
            trace.append(TraceRow(world.time, pose.x, pose.y, pose.psi, ExecutorMode.DONE.value, '', 0.0, 0.0,
                                  False, 0.0, result.length, 'done'))
            success = True
            break
        v, omega = drive_command(pose, waypoints[0], cfg, dt)
        trace.append(TraceRow(world.time, pose.x, pose.y, pose.psi, ExecutorMode.DRIVE.value, '', v, omega, False,
                              0.0, result.length, event))
        event = ''
        world.step_drive(v, omega, dt)
        world.advance_time(dt)
        moved = world.robot_pose.position.distance_to(pose.position) > 1e-4 or abs(omega) > 0
        stalled = 0 if moved else stalled + 1
        if stalled >= _STALL_TICKS:
            logger.warning('grid A* follower is stuck')
            break
    return success, trace, search_times, 0, None


class _TaskThread(WorkerThread):
    """Runs a share of a scenario’s tasks. Each task gets its own world."""

    def __init__(self, scenario: Scenario, indices: typ.Sequence[int], planner: str, config: Config,
                 time_limit: float | None, prior: DVGraph | None, results: dict[int, RunResult],
                 lock: threading.Lock):
        super().__init__(name=f'tasks-{planner}')
        self._scenario = scenario
        self._indices = indices
        self._planner = planner
        self._config = config
        self._time_limit = time_limit
        self._prior = prior
        self._results = results
        self._lock = lock

    def run(self):
        for i in self._indices:
            if self.cancelled:
                break
            try:
                result = run_task(self._scenario, i, self._planner, self._config, self._time_limit, self._prior)
            except Exception as e:
                logger.exception(e)
                self.error = str(e)
                continue
            with self._lock:
                self._results[i] = result


def run_benchmark(scenario: Scenario, planner: str = 'ours', config: Config = None, workers: int = 1,
                  time_limit: float = None, out_dir: pathlib.Path = None, prior: DVGraph = None) \
        -> tuple[Metrics, list[RunResult]]:
    """Runs every task of a scenario with one planner.

    :param scenario: The scenario.
    :param planner: One of PLANNERS.
    :param config: Settings.
    :param workers: Number of worker threads.
    :param time_limit: Per-task time limit, see run_task.
    :param out_dir: If set, traces and final graphs are written there.
    :param prior: Prior map of the graph-based planners.
    :return: The aggregated metrics and the per-task results, in task order.
    """
    if planner not in PLANNERS:
        raise ValueError(f'unknown planner {planner!r}, expected one of {", ".join(PLANNERS)}')
    config = config or Config()
    indices = list(range(len(scenario.tasks)))
    results: dict[int, RunResult] = {}
    lock = threading.Lock()
    workers = max(1, min(workers, len(indices) or 1))
    threads = [_TaskThread(scenario, indices[k::workers], planner, config, time_limit, prior, results, lock)
               for k in range(workers)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
        if thread.failed:
            logger.warning(f'worker {thread.name} failed: {thread.error}')

    ordered = []
    for i in indices:
        result = results.get(i)
        if result is None:
            # Crashed tasks count as failures
            task = scenario.tasks[i]
            result = RunResult(TaskMetrics(i, False, 0.0, task.start.position.distance_to(task.goal), 0.0),
                               RunTrace())
        ordered.append(result)
        if out_dir is not None:
            stem = f'{scenario.name}_{planner}_task{i}'
            result.trace.save(out_dir / f'{stem}.csv')
            if result.graph is not None:
                dvgraph.save_graph(result.graph, out_dir / f'{stem}.dvg')
    return Metrics(scenario.name, planner, tuple(r.metrics for r in ordered)), ordered


@dataclasses.dataclass(frozen=True)
class LatencyReport:
    """Search times on a fully known map, in milliseconds."""
    vertices: int
    graph_times: tuple[float, ...]
    grid_times: tuple[float, ...]

    @property
    def median_graph_time(self) -> float:
        return statistics.median(self.graph_times) if self.graph_times else 0.0

    @property
    def median_grid_time(self) -> float:
        return statistics.median(self.grid_times) if self.grid_times else 0.0

    @property
    def speedup(self) -> float:
        """Ratio of the grid and graph median search times."""
        graph = self.median_graph_time
        return self.median_grid_time / graph if graph > 0 else math.inf


def measure_latency(scenario: Scenario, queries: int = 100, grid_queries: int = 3, config: Config = None,
                    seed: int = 0) -> LatencyReport:
    """Times global searches on the prior graph of the walls against A* on the dense grid.

    Graph construction is excluded: only plan() and grid_astar() are timed.

    :param scenario: The map; its task endpoints are reused as queries, shuffled.
    :param queries: Number of graph queries.
    :param grid_queries: Number of grid queries, the first ones of the graph queries.
    :param config: Settings.
    :param seed: Seed of the query order.
    """
    cfg = robot_config(config or Config(), scenario)
    radius = cfg.mapping.robot_radius
    graph = build_prior_graph(scenario.background, robot_radius=radius, max_range=PRIOR_LINK_RANGE)
    snapshot = PlanningSnapshot(graph, connect_radius=PRIOR_LINK_RANGE)
    rng = np.random.default_rng(seed)
    pairs = [(t.start.position, t.goal) for t in scenario.tasks]
    if not pairs:
        return LatencyReport(len(graph), (), ())
    order = rng.integers(0, len(pairs), size=queries)

    graph_times = []
    for k in order:
        start, goal = pairs[k]
        started = time.perf_counter()
        plan(snapshot, start, goal)
        graph_times.append((time.perf_counter() - started) * 1000)

    grid = occupancy(scenario.background, scenario.bounds, cfg.mapping.resolution, inflation=radius)
    grid_times = []
    for k in order[:grid_queries]:
        start, goal = pairs[k]
        result = plan_on_grid(grid, start, goal)
        if result is not None:
            grid_times.append(result.solve_time * 1000)
    report = LatencyReport(len(graph), tuple(graph_times), tuple(grid_times))
    logger.info(f'latency on {scenario.name}: {report.vertices} vertices, graph {report.median_graph_time:.3f} ms, '
                f'grid {report.median_grid_time:.1f} ms')
    return report


def replay(scenario: Scenario, task_index: int, trace: RunTrace, config: Config = None) -> float:
    """Re-applies the commands of a trace to a fresh world.

    :return: The largest distance between a recorded position and the replayed one.
    """
    cfg = robot_config(config or Config(), scenario)
    world = World.from_scenario(scenario, task_index, cfg.sensor)
    rows = trace.rows
    deviation = 0.0
    dt = 1 / cfg.sensor.rate
    if len(rows) > 1 and rows[1].timestamp > rows[0].timestamp:
        # Recorded timestamps are sums of the tick; recover the tick from the rate
        dt = 1 / round(1 / (rows[1].timestamp - rows[0].timestamp), 6)
    for k, row in enumerate(rows):
        pose = world.robot_pose
        deviation = max(deviation, math.hypot(pose.x - row.x, pose.y - row.y))
        if k + 1 == len(rows):
            break
        command = Command(row.v, row.omega, row.object_id if row.pushing else None)
        apply_command(world, command, dt, cfg.executor.contact_tolerance)
        world.advance_time(dt)
    return deviation
