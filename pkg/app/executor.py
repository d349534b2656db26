"""Runtime loop: follows the global path, pushes objects on interaction segments and adapts affordances."""
from __future__ import annotations

import csv
import dataclasses
import enum
import io
import math
import pathlib
import time
import typing as typ

import numpy as np

from . import constants, geometry
from .config import Config, ExecutorConfig
from .dvgraph import DVGraph, GraphUpdater, InteractionEdge, SuppressedInteraction
from .global_planner import GlobalPath, PlanningSnapshot, SegmentKind, plan, straight_line
from .interaction import Affordance, ContactSwitch, PushPrimitive, PushSearchFailure, footprint_of, robot_detour
from .logging import logger
from .model import Point2, Pose2, normalize_angle
from .utils.threads import WorkerThread
from .world import ForceReading, ScanFrame

# Distance at which a path vertex counts as reached
VERTEX_TOLERANCE = 0.1
# Distance at which a pre-contact point counts as reached
ROUTE_TOLERANCE = 0.02
ALIGN_TOLERANCE = math.radians(0.5)
# Heading error above which the robot turns in place
TURN_IN_PLACE = math.radians(45)
HEADING_GAIN = 2.0
LOST_CONTACT_TICKS = 5
MAX_REPLANS = 500
# Scan points this much closer to the robot axis than its radius are ignored by the clearance check
LATERAL_SLACK = 0.02


class ExecutorMode(enum.Enum):
    DRIVE = 'drive'
    APPROACH = 'approach'
    PUSH = 'push'
    REPLAN = 'replan'
    DONE = 'done'
    FAILED = 'failed'


@dataclasses.dataclass(frozen=True)
class AdaptationParams:
    """Thresholds of the adaptation loop.

    :param approach_radius: Distance r to a waypoint at which the push strategy is re-estimated.
    :param cost_threshold: Cost deviation τ above which edges are updated and the path replanned.
    :param max_push_attempts: Ticks at maximal force without motion before an object is deemed immovable.
    :param replan_cap: Re-estimation replans allowed per waypoint before its edge is given up.
    :param robot_radius: The robot radius.
    """
    approach_radius: float = constants.APPROACH_RADIUS
    cost_threshold: float = constants.COST_THRESHOLD
    max_push_attempts: int = constants.NOT_MOVED_TICKS
    replan_cap: int = constants.REPLAN_CAP
    robot_radius: float = constants.ROBOT_RADIUS

    def __post_init__(self):
        if self.approach_radius <= self.robot_radius:
            raise ValueError(f'approach radius {self.approach_radius} must exceed robot radius {self.robot_radius}')
        if self.cost_threshold <= 0:
            raise ValueError(f'cost threshold must be positive, got {self.cost_threshold}')

    @classmethod
    def from_config(cls, config: ExecutorConfig) -> AdaptationParams:
        return cls(config.approach_radius, config.cost_threshold, config.not_moved_ticks, config.replan_cap,
                   config.robot_radius)


class _Stage(enum.Enum):
    ROUTE = 'route'
    ALIGN = 'align'
    PUSH = 'push'


@dataclasses.dataclass
class ExecutorState:
    """Mutable state of the executor.

    :param mode: Current mode.
    :param path: The path being followed.
    :param next_index: Index of the next path vertex.
    :param primitive: The primitive being executed in Push mode.
    :param object_id: The pushed object.
    :param action_index: Index of the current primitive action.
    :param action_ticks: Ticks spent pushing the current segment.
    """
    mode: ExecutorMode = ExecutorMode.REPLAN
    path: GlobalPath | None = None
    next_index: int = 1
    primitive: PushPrimitive | None = None
    object_id: str | None = None
    action_index: int = 0
    action_ticks: int = 0
    stage: _Stage = _Stage.ROUTE
    route: list[Point2] = dataclasses.field(default_factory=list)
    interaction: InteractionEdge | None = None
    interaction_span: tuple[Point2, Point2] | None = None

    @property
    def path_cost(self) -> float | None:
        return self.path.cost if self.path is not None else None


@dataclasses.dataclass(frozen=True)
class Observation:
    """What the executor perceives at one tick.

    :param timestamp: Simulation time.
    :param pose: Odometry pose.
    :param force: Pusher force reading.
    :param scan: Newest scan, for the clearance check.
    :param graph_updated: Whether the global graph changed since the previous tick.
    """
    timestamp: float
    pose: Pose2
    force: ForceReading
    scan: ScanFrame | None = None
    graph_updated: bool = False


@dataclasses.dataclass(frozen=True)
class Command:
    v: float
    omega: float
    push_object: str | None = None

    @classmethod
    def stop(cls) -> Command:
        return cls(0.0, 0.0)


@dataclasses.dataclass(frozen=True)
class TraceRow:
    timestamp: float
    x: float
    y: float
    psi: float
    mode: str
    object_id: str
    v: float
    omega: float
    pushing: bool
    force: float
    path_cost: float | None
    event: str


class RunTrace:
    """Per-tick record of a run, stored as CSV."""
    COLUMNS = ('timestamp', 'x', 'y', 'psi', 'mode', 'object_id', 'v', 'omega', 'pushing', 'force', 'path_cost',
               'event')

    def __init__(self, rows: typ.Iterable[TraceRow] = ()):
        self.rows: list[TraceRow] = list(rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def append(self, row: TraceRow):
        self.rows.append(row)

    def positions(self) -> np.ndarray:
        return np.array([(r.x, r.y) for r in self.rows], dtype=float).reshape(-1, 2)

    def events(self, name: str = None) -> list[TraceRow]:
        return [r for r in self.rows if r.event and (name is None or name in r.event.split(';'))]

    def mode_ticks(self, mode: ExecutorMode) -> int:
        return sum(r.mode == mode.value for r in self.rows)

    def dumps(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(self.COLUMNS)
        for r in self.rows:
            cost = '' if r.path_cost is None else repr(r.path_cost)
            writer.writerow([repr(r.timestamp), repr(r.x), repr(r.y), repr(r.psi), r.mode, r.object_id, repr(r.v),
                             repr(r.omega), int(r.pushing), repr(r.force), cost, r.event])
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> RunTrace:
        """Parses a trace.

        :raise ValueError: If a row is malformed.
        """
        reader = csv.DictReader(io.StringIO(text))
        if tuple(reader.fieldnames or ()) != cls.COLUMNS:
            raise ValueError(f'unexpected trace columns {reader.fieldnames}')
        rows = []
        for line in reader:
            rows.append(TraceRow(
                float(line['timestamp']), float(line['x']), float(line['y']), float(line['psi']), line['mode'],
                line['object_id'], float(line['v']), float(line['omega']), line['pushing'] == '1',
                float(line['force']), float(line['path_cost']) if line['path_cost'] else None, line['event'],
            ))
        return cls(rows)

    def save(self, path: pathlib.Path) -> bool:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(self.dumps(), encoding='UTF-8')
        except OSError as e:
            logger.exception(e)
            return False
        return True

    @classmethod
    def load(cls, path: pathlib.Path) -> RunTrace | None:
        try:
            return cls.loads(path.read_text(encoding='UTF-8'))
        except (OSError, ValueError) as e:
            logger.exception(e)
            return None


class PlanningThread(WorkerThread):
    """Plans on a snapshot in the background."""

    def __init__(self, snapshot: PlanningSnapshot, start: Point2, goal: Point2, timestamp: float):
        super().__init__(name='planner')
        self._snapshot = snapshot
        self._start = start
        self._goal = goal
        self._timestamp = timestamp
        self.result: GlobalPath | None = None
        self.solve_time = 0.0

    def run(self):
        if self.cancelled:
            return
        started = time.perf_counter()
        try:
            result = plan(self._snapshot, self._start, self._goal, self._timestamp)
        except Exception as e:
            logger.exception(e)
            self.error = str(e)
            return
        finally:
            self.solve_time = time.perf_counter() - started
        # A cancelled plan is never published
        if not self.cancelled:
            self.result = result


class Executor:
    """Follows global paths with a collision-free local planner and pushes objects on interaction segments."""

    def __init__(self, updater: GraphUpdater, goal: Point2, config: Config = None):
        """Creates an executor.

        :param updater: Owner of the global graph, shared with the update cycle.
        :param goal: Goal position.
        :param config: Settings; those of the updater if None.
        """
        self.updater = updater
        self.goal = goal
        self.config = config or updater.config
        self.params = AdaptationParams.from_config(self.config.executor)
        self.state = ExecutorState()
        self.trace = RunTrace()
        self.search_times: list[float] = []
        self.replans = 0
        self._observation: Observation | None = None
        self._dt = 1 / self.config.sensor.rate
        self._events: list[str] = []
        self._not_moved = 0
        self._lost_contact = 0
        self._attempts: dict[tuple[str, int, int], int] = {}
        self._previous_pose: Pose2 | None = None
        self._thread: PlanningThread | None = None
        self._index_cache: tuple[DVGraph, geometry.ObstacleIndex, list] | None = None

    @property
    def mode(self) -> ExecutorMode:
        return self.state.mode

    @property
    def graph(self):
        return self.updater.graph

    @property
    def position(self) -> Point2:
        return self._observation.pose.position

    @property
    def thread_pending(self) -> bool:
        """Whether an asynchronous search is still attached to the executor."""
        return self._thread is not None

    def cancel_planning(self):
        if self._thread is not None:
            self._thread.cancel()
            self._thread.join()
            self._thread = None

    # Main loop

    def tick(self, observation: Observation, dt: float) -> Command:
        """Advances the executor by one tick.

        :param observation: Current perception.
        :param dt: Tick duration.
        :return: The command for the next dt seconds.
        """
        self._observation = observation
        self._dt = dt
        state = self.state
        if state.mode in (ExecutorMode.DONE, ExecutorMode.FAILED):
            return self._emit(Command.stop())
        at_goal = self.position.distance_to(self.goal) < self.config.executor.goal_tolerance
        if state.mode != ExecutorMode.PUSH and at_goal:
            state.mode = ExecutorMode.DONE
            self._event('done')
            return self._emit(Command.stop())

        if state.mode == ExecutorMode.PUSH:
            command = self._tick_push(dt)
        elif state.mode == ExecutorMode.APPROACH:
            command = self._tick_approach()
        else:
            if state.mode == ExecutorMode.REPLAN or observation.graph_updated or self._thread is not None:
                self._replan('graph update' if state.mode == ExecutorMode.DRIVE else 'replan')
            command = self._tick_drive(dt) if state.mode == ExecutorMode.DRIVE else Command.stop()
        self._previous_pose = observation.pose
        return self._emit(command)

    def _emit(self, command: Command) -> Command:
        obs = self._observation
        state = self.state
        self.trace.append(TraceRow(
            obs.timestamp, obs.pose.x, obs.pose.y, obs.pose.psi, state.mode.value, state.object_id or '',
            command.v, command.omega, command.push_object is not None, obs.force.magnitude, state.path_cost,
            ';'.join(self._events),
        ))
        self._events.clear()
        return command

    def _event(self, name: str):
        self._events.append(name)

    # Planning

    def _replan(self, reason: str):
        state = self.state
        if self._thread is not None:
            if self._thread.is_alive():
                return
            self._adopt(self._thread.result, self._thread.solve_time, reason)
            self._thread = None
            return
        snapshot = PlanningSnapshot(self.updater.snapshot())
        if self.config.executor.async_planning:
            self._thread = PlanningThread(snapshot, self.position, self.goal, self._observation.timestamp)
            self._thread.start()
            if state.path is None:
                state.mode = ExecutorMode.REPLAN
            return
        started = time.perf_counter()
        path = plan(snapshot, self.position, self.goal, self._observation.timestamp)
        self._adopt(path, time.perf_counter() - started, reason)

    def _adopt(self, path: GlobalPath | None, solve_time: float, reason: str):
        state = self.state
        self.search_times.append(solve_time)
        self.replans += 1
        if path is None:
            path = straight_line(self.position, self.goal)
            self._event('fallback')
        state.path = path
        state.next_index = 1
        state.mode = ExecutorMode.DRIVE
        self._event(reason)
        if self.replans > MAX_REPLANS:
            logger.warning(f'giving up after {self.replans} replans')
            state.mode = ExecutorMode.FAILED
            self._event('failed')

    def _request_replan(self, event: str):
        self.state.mode = ExecutorMode.REPLAN
        self._event(event)

    # Drive

    def _tick_drive(self, dt: float) -> Command:
        state = self.state
        path = state.path
        n = len(path.vertex_ids)
        while state.next_index < n:
            k = state.next_index
            at_interaction = k < n - 1 and path.kinds[k] == SegmentKind.INTERACTION
            if at_interaction or self.position.distance_to(path.positions[k]) > VERTEX_TOLERANCE:
                break
            state.next_index += 1
        k = state.next_index
        if k >= n:
            self._request_replan('path end')
            return Command.stop()
        target = path.positions[k]
        if k < n - 1 and path.kinds[k] == SegmentKind.INTERACTION \
                and self.position.distance_to(target) < self.params.approach_radius:
            state.mode = ExecutorMode.APPROACH
            state.interaction = path.interactions[k]
            state.interaction_span = (target, path.positions[k + 1])
            state.object_id = state.interaction.object_id
            self._event('approach')
            return self._tick_approach()
        command = self.collision_free_local(target, dt)
        if command is None:
            self._request_replan('visibility lost')
            return Command.stop()
        return Command(*command)

    def collision_free_local(self, target: Point2, dt: float = 1 / constants.SCAN_RATE,
                             ignore_object: str = None) -> tuple[float, float] | None:
        """Pure-pursuit arc command towards a visible target, slowed down near it and before obstacles.

        :param target: Point to drive to.
        :param dt: Tick duration.
        :param ignore_object: Object excluded from the visibility and clearance checks.
        :return: (v, ω), or None if the target is no longer visible.
        """
        cfg = self.config.executor
        pose = self._observation.pose
        if not self._target_visible(pose.position, target, ignore_object):
            return None
        offset = target - pose.position
        distance = offset.norm
        if distance < constants.EPSILON:
            return 0.0, 0.0
        alpha = normalize_angle(math.atan2(offset.y, offset.x) - pose.psi)
        omega = float(np.clip(HEADING_GAIN * alpha, -cfg.max_yaw_rate, cfg.max_yaw_rate))
        if abs(alpha) > TURN_IN_PLACE:
            return 0.0, omega
        v = cfg.max_speed * min(1.0, distance / cfg.slowdown_radius)
        v = min(v, distance / dt)
        free = self._free_distance(pose, ignore_object)
        v = max(0.0, min(v, free / dt))
        return v, omega

    def _target_visible(self, p: Point2, target: Point2, ignore_object: str | None) -> bool:
        graph = self.updater.graph
        if self._index_cache is None or self._index_cache[0] is not graph:
            index = geometry.ObstacleIndex(graph.polygons())
            # Owners in index order
            owners = [graph.polygon_record(q.id).object_id for q in index.obstacles]
            self._index_cache = (graph, index, owners)
        _, index, owners = self._index_cache
        ignore = set(index.containing(p)) | set(index.containing(target))
        if ignore_object is not None:
            ignore |= {i for i, o in enumerate(owners) if o == ignore_object}
        return bool(index.visible_mask(np.array([p.as_tuple()]), np.array([target.as_tuple()]), ignore)[0])

    def _free_distance(self, pose: Pose2, ignore_object: str | None) -> float:
        """Distance the robot can drive straight ahead before its clearance margin is violated."""
        scan = self._observation.scan
        if scan is None or not len(scan):
            return math.inf
        coords = np.array([p.point.as_tuple() for p in scan.points if ignore_object is None
                           or p.object_id != ignore_object], dtype=float).reshape(-1, 2)
        if not len(coords):
            return math.inf
        c, s = math.cos(pose.psi), math.sin(pose.psi)
        rel = coords - np.array(pose.position.as_tuple())
        ahead = rel[:, 0] * c + rel[:, 1] * s
        lateral = -rel[:, 0] * s + rel[:, 1] * c
        r = self.config.executor.robot_radius
        band = (ahead > 0) & (np.abs(lateral) < r - LATERAL_SLACK)
        if not band.any():
            return math.inf
        reach = ahead[band] - np.sqrt(r ** 2 - lateral[band] ** 2) - self.config.executor.clearance_margin
        return float(max(0.0, reach.min()))

    # Approach

    def _tick_approach(self) -> Command:
        """Re-estimates the push strategy geometrically, then starts pushing or replans."""
        state = self.state
        edge = state.interaction
        start, goal = state.interaction_span
        key = (edge.object_id, round(start.x / self.config.mapping.association_radius),
               round(start.y / self.config.mapping.association_radius))
        try:
            estimate, primitive = self.updater.reestimate(edge.object_id, start, goal)
        except PushSearchFailure as e:
            logger.warning(f'approach of {edge.object_id!r}: no strategy left ({e.reason})')
            self._give_up(edge, start, goal)
            self._leave_interaction('edge removed')
            return Command.stop()
        if abs(estimate - edge.cost) > self.params.cost_threshold or primitive.is_empty:
            self._attempts[key] = self._attempts.get(key, 0) + 1
            logger.warning(f'geometric re-estimate for {edge.object_id!r}: J={edge.cost:.3f} -> {estimate:.3f}')
            if self._attempts[key] > self.params.replan_cap:
                logger.warning(f'replan cap reached at {start}, removing the interaction edge')
                self._give_up(edge, start, goal)
                self._leave_interaction('edge removed')
            else:
                if self.graph.interaction_edge(edge.source, edge.target) is not None:
                    self.graph.set_interaction_edge(edge.source, edge.target, edge.object_id, estimate, primitive)
                self._leave_interaction('reestimate')
            return Command.stop()
        state.mode = ExecutorMode.PUSH
        state.primitive = primitive
        state.action_index = 0
        state.action_ticks = 0
        self._not_moved = 0
        self._lost_contact = 0
        self._start_action()
        self._event('push')
        return Command.stop()

    def _give_up(self, edge: InteractionEdge, start: Point2, goal: Point2):
        self.graph.add_suppressed(SuppressedInteraction(edge.object_id, start, goal))
        self.graph.remove_interaction_edge(edge.source, edge.target)

    def _leave_interaction(self, event: str):
        state = self.state
        state.primitive = None
        state.object_id = None
        state.interaction = None
        state.interaction_span = None
        self._request_replan(event)

    # Push

    def _start_action(self):
        """Prepares the route of the current action of the primitive."""
        state = self.state
        action = state.primitive.actions[state.action_index]
        state.action_ticks = 0
        if isinstance(action, ContactSwitch):
            state.route = list(action.path)
            state.stage = _Stage.ROUTE
            return
        target = action.robot_start.position
        if self.position.distance_to(target) <= ROUTE_TOLERANCE:
            state.route = []
        else:
            state.route = self._route_to(target) or [target]
        state.stage = _Stage.ROUTE

    def _route_to(self, target: Point2) -> list[Point2] | None:
        polys = self.updater.last_polys
        movable = polys.movable_polygon(self.state.object_id) if polys is not None else None
        if movable is None:
            return None
        radius = self.config.executor.robot_radius
        try:
            footprint = footprint_of(movable, radius)
        except ValueError:
            return None
        obstacles = [p for p in polys.polygons() if p.id != movable.id]
        route = robot_detour(self.position, target, footprint, obstacles, radius)
        return route[1:] if route else None

    def _tick_push(self, dt: float) -> Command:
        state = self.state
        action = state.primitive.actions[state.action_index]
        if state.stage == _Stage.PUSH:
            moved = self._previous_pose is not None and \
                    self._previous_pose.position.distance_to(self._observation.pose.position) > 1e-4
            self.update_affordance(state.object_id, self._observation.force, moved)
            if state.mode != ExecutorMode.PUSH:
                return Command.stop()
            if state.action_ticks >= max(1, round(action.duration / dt)):
                return self._next_action(dt)
            state.action_ticks += 1
            return Command(action.v, action.omega, state.object_id)

        if state.stage == _Stage.ROUTE:
            while state.route and self.position.distance_to(state.route[0]) <= ROUTE_TOLERANCE:
                state.route.pop(0)
            if state.route:
                command = self.collision_free_local(state.route[0], dt, ignore_object=state.object_id)
                if command is None:
                    self._leave_interaction('visibility lost')
                    return Command.stop()
                return Command(*command)
            if isinstance(action, ContactSwitch):
                return self._next_action(dt)
            state.stage = _Stage.ALIGN

        error = normalize_angle(action.robot_start.psi - self._observation.pose.psi)
        if abs(error) > ALIGN_TOLERANCE:
            limit = self.config.executor.max_yaw_rate
            return Command(0.0, float(np.clip(error / dt, -limit, limit)))
        state.stage = _Stage.PUSH
        state.action_ticks = 1
        return Command(action.v, action.omega, state.object_id)

    def _next_action(self, dt: float) -> Command:
        state = self.state
        state.action_index += 1
        if state.action_index >= len(state.primitive.actions):
            self._leave_interaction('push done')
            return Command.stop()
        self._start_action()
        return self._tick_push(dt)

    def update_affordance(self, object_id: str, force: ForceReading, moved: bool) -> Affordance:
        """Updates an object’s affordance from one force reading taken while pushing it.

        Saturated force without motion for several ticks marks the object not pushable. Otherwise the
        effort multiplier becomes the ratio of the measured to the nominal force, and a cost deviation
        above the threshold triggers a replan.

        :param object_id: The pushed object.
        :param force: The reading.
        :param moved: Whether the robot observed itself move since the previous reading.
        :return: The affordance after the update.
        """
        graph = self.graph
        current = graph.affordance(object_id, self.config.interaction)
        state = self.state
        if not force.in_contact:
            self._lost_contact += 1
            if self._lost_contact >= LOST_CONTACT_TICKS and state.mode == ExecutorMode.PUSH:
                self._leave_interaction('lost contact')
            return current
        self._lost_contact = 0
        saturated = force.magnitude >= self.config.executor.max_push_force - constants.EPSILON
        if saturated and not moved:
            self._not_moved += 1
            if self._not_moved >= self.params.max_push_attempts:
                updated = dataclasses.replace(current, pushable=False, resistance=force.magnitude)
                graph.set_affordance(updated)
                self.updater.clear_cache(object_id)
                logger.warning(f'{object_id!r} did not move under maximal effort, marked not pushable')
                self._not_moved = 0
                if state.mode == ExecutorMode.PUSH:
                    self._leave_interaction('not pushable')
                return updated
            return current
        self._not_moved = 0

        effort = force.magnitude / self.config.interaction.nominal_force
        if effort <= 0:
            return current
        updated = dataclasses.replace(current, effort=effort, resistance=force.magnitude)
        if state.primitive is None or state.mode != ExecutorMode.PUSH:
            graph.set_affordance(updated)
            return updated
        remaining = state.primitive.remaining_push_length(state.action_index,
                                                          state.action_ticks * self._dt)
        planned = remaining * current.effort
        estimated = remaining * effort
        graph.set_affordance(updated)
        if abs(estimated - planned) > self.params.cost_threshold:
            logger.warning(f'force-based re-estimate for {object_id!r}: J={planned:.3f} -> {estimated:.3f}')
            self.updater.clear_cache(object_id)
            self._event('affordance')
            path = plan(PlanningSnapshot(self.updater.snapshot()), self.position, self.goal,
                        self._observation.timestamp)
            if path is None or object_id not in path.pushed_objects:
                state.primitive = None
                state.object_id = None
                state.interaction = None
                if path is None:
                    self._request_replan('replan')
                else:
                    state.path = path
                    state.next_index = 1
                    state.mode = ExecutorMode.DRIVE
                    self.replans += 1
        return updated


def drive_command(pose: Pose2, target: Point2, config: ExecutorConfig = ExecutorConfig(),
                  dt: float = 1 / constants.SCAN_RATE) -> tuple[float, float]:
    """Obstacle-free pure-pursuit command, used when no scan is available."""
    offset = target - pose.position
    distance = offset.norm
    if distance < constants.EPSILON:
        return 0.0, 0.0
    alpha = normalize_angle(math.atan2(offset.y, offset.x) - pose.psi)
    omega = float(np.clip(HEADING_GAIN * alpha, -config.max_yaw_rate, config.max_yaw_rate))
    if abs(alpha) > TURN_IN_PLACE:
        return 0.0, omega
    return min(config.max_speed * min(1.0, distance / config.slowdown_radius), distance / dt), omega
