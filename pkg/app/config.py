from __future__ import annotations

import configparser
import dataclasses
import math
import pathlib

from . import constants, logging


class ConfigError(ValueError):
    pass


@dataclasses.dataclass(frozen=True)
class SensorConfig:
    """Range sensor settings."""
    angular_resolution: float = constants.SCAN_ANGULAR_RESOLUTION
    max_range: float = constants.SCAN_MAX_RANGE
    rate: float = constants.SCAN_RATE
    noise_sigma: float = constants.SCAN_NOISE_SIGMA
    update_every: int = constants.GRAPH_UPDATE_EVERY

    @property
    def rays(self) -> int:
        return int(round(360 / self.angular_resolution))


@dataclasses.dataclass(frozen=True)
class MappingConfig:
    """Local grid, extraction and graph merge settings."""
    local_size: float = constants.LOCAL_GRID_SIZE
    resolution: float = constants.GRID_RESOLUTION
    simplify_tolerance: float = constants.SIMPLIFY_TOLERANCE_CELLS
    min_blob_cells: int = constants.MIN_BLOB_CELLS
    association_radius: float = constants.ASSOCIATION_RADIUS
    voting_threshold: int = constants.VOTING_THRESHOLD
    waypoint_offset: float = constants.WAYPOINT_OFFSET
    robot_radius: float = constants.ROBOT_RADIUS

    @property
    def cells(self) -> int:
        # Rounding first keeps 60 / 0.15 from landing just above 400
        return math.ceil(round(self.local_size / self.resolution, 6))

    @property
    def dilation_cells(self) -> int:
        return math.ceil(round(self.robot_radius / self.resolution, 6))


@dataclasses.dataclass(frozen=True)
class InteractionConfig:
    """Push planning settings."""
    push_speed: float = constants.PUSH_SPEED
    arc_length: float = constants.PUSH_ARC_LENGTH
    curvature_samples: int = constants.CURVATURE_SAMPLES
    heading_bin: float = constants.HEADING_BIN
    position_bin: float = constants.GRID_RESOLUTION
    node_budget: int = constants.NODE_BUDGET
    contact_width: float = constants.CONTACT_WIDTH
    default_friction: float = constants.DEFAULT_FRICTION
    default_effort: float = constants.DEFAULT_EFFORT
    nominal_force: float = constants.NOMINAL_FORCE
    robot_radius: float = constants.ROBOT_RADIUS
    retry_half_arc: bool = True

    @property
    def step_duration(self) -> float:
        return self.arc_length / self.push_speed


@dataclasses.dataclass(frozen=True)
class ExecutorConfig:
    """Runtime loop settings, r and τ included."""
    approach_radius: float = constants.APPROACH_RADIUS
    cost_threshold: float = constants.COST_THRESHOLD
    not_moved_ticks: int = constants.NOT_MOVED_TICKS
    replan_cap: int = constants.REPLAN_CAP
    goal_tolerance: float = constants.GOAL_TOLERANCE
    clearance_margin: float = constants.CLEARANCE_MARGIN
    slowdown_radius: float = constants.SLOWDOWN_RADIUS
    contact_tolerance: float = constants.CONTACT_TOLERANCE
    robot_radius: float = constants.ROBOT_RADIUS
    max_speed: float = constants.ROBOT_MAX_SPEED
    max_yaw_rate: float = constants.ROBOT_MAX_YAW_RATE
    max_push_force: float = constants.ROBOT_MAX_PUSH_FORCE
    async_planning: bool = False

    def __post_init__(self):
        if self.approach_radius <= self.robot_radius:
            raise ConfigError(f'approach radius {self.approach_radius} must exceed robot radius {self.robot_radius}')
        if self.cost_threshold <= 0:
            raise ConfigError(f'cost threshold must be positive, got {self.cost_threshold}')


class Config:
    def __init__(
            self,
            sensor: SensorConfig = SensorConfig(),
            mapping: MappingConfig = MappingConfig(),
            interaction: InteractionConfig = InteractionConfig(),
            executor: ExecutorConfig = ExecutorConfig(),
            log_level: str = 'WARNING',
    ):
        """Creates a new configuration object.

        :param sensor: Range sensor settings.
        :param mapping: Extraction and merge settings.
        :param interaction: Push planner settings.
        :param executor: Runtime loop settings.
        :param log_level: Level of the global logger.
        """
        self.sensor = sensor
        self.mapping = mapping
        self.interaction = interaction
        self.executor = executor
        self.log_level = log_level

    def for_robot(self, radius: float, max_speed: float, max_yaw_rate: float, max_push_force: float,
                  contact_width: float) -> Config:
        """Returns a copy whose robot-dependent settings match the given robot."""
        return Config(
            sensor=self.sensor,
            mapping=dataclasses.replace(self.mapping, robot_radius=radius),
            interaction=dataclasses.replace(self.interaction, robot_radius=radius, contact_width=contact_width),
            executor=dataclasses.replace(self.executor, robot_radius=radius, max_speed=max_speed,
                                         max_yaw_rate=max_yaw_rate, max_push_force=max_push_force),
            log_level=self.log_level,
        )

    def copy(self) -> Config:
        """Returns a copy of this Config object."""
        return Config(self.sensor, self.mapping, self.interaction, self.executor, self.log_level)

    def save(self, path: pathlib.Path = None) -> bool:
        """Saves the config to the given file, by default app.constants.CONFIG_FILE."""
        parser = configparser.ConfigParser(strict=True)
        parser.optionxform = str

        for section, (_, fields) in _SECTIONS.items():
            values = getattr(self, section.lower())
            parser[section] = {key: _to_str(getattr(values, attr)) for key, attr in fields.items()}
        parser[_LOGGING_SECTION] = {_LEVEL_KEY: self.log_level}

        try:
            with (path or constants.CONFIG_FILE).open(mode='w', encoding='UTF-8') as configfile:
                parser.write(configfile)
        except IOError as e:
            logging.logger.exception(e)
            return False
        else:
            return True


# noinspection PyTypeChecker
CONFIG: Config = None

_LOGGING_SECTION = 'Logging'
_LEVEL_KEY = 'Level'

# Section name -> (dataclass, {INI key: attribute})
_SECTIONS = {
    'Sensor': (SensorConfig, {
        'AngularResolution': 'angular_resolution',
        'MaxRange': 'max_range',
        'RateHz': 'rate',
        'NoiseSigma': 'noise_sigma',
        'UpdateEvery': 'update_every',
    }),
    'Mapping': (MappingConfig, {
        'LocalSize': 'local_size',
        'Resolution': 'resolution',
        'SimplifyTolerance': 'simplify_tolerance',
        'MinBlobCells': 'min_blob_cells',
        'AssociationRadius': 'association_radius',
        'VotingThreshold': 'voting_threshold',
        'WaypointOffset': 'waypoint_offset',
        'RobotRadius': 'robot_radius',
    }),
    'Interaction': (InteractionConfig, {
        'PushSpeed': 'push_speed',
        'ArcLength': 'arc_length',
        'CurvatureSamples': 'curvature_samples',
        'HeadingBin': 'heading_bin',
        'PositionBin': 'position_bin',
        'NodeBudget': 'node_budget',
        'ContactWidth': 'contact_width',
        'DefaultFriction': 'default_friction',
        'DefaultEffort': 'default_effort',
        'NominalForce': 'nominal_force',
        'RobotRadius': 'robot_radius',
        'RetryHalfArc': 'retry_half_arc',
    }),
    'Executor': (ExecutorConfig, {
        'ApproachRadius': 'approach_radius',
        'CostThreshold': 'cost_threshold',
        'NotMovedTicks': 'not_moved_ticks',
        'ReplanCap': 'replan_cap',
        'GoalTolerance': 'goal_tolerance',
        'ClearanceMargin': 'clearance_margin',
        'SlowdownRadius': 'slowdown_radius',
        'ContactTolerance': 'contact_tolerance',
        'RobotRadius': 'robot_radius',
        'MaxSpeed': 'max_speed',
        'MaxYawRate': 'max_yaw_rate',
        'MaxPushForce': 'max_push_force',
        'AsyncPlanning': 'async_planning',
    }),
}


def load_config(path: pathlib.Path = None) -> Config:
    """Loads the configuration file, by default the one specified in app.constants.CONFIG_FILE.
    If the file does not exist, a default config is created and saved.

    :raise ConfigError: If an option has an illegal value.
    """
    global CONFIG

    path = path or constants.CONFIG_FILE
    config_file_exists = path.is_file()
    sections = {}
    log_level = 'WARNING'

    if config_file_exists:
        config_parser = configparser.ConfigParser()
        config_parser.optionxform = str
        config_parser.read(path, encoding='UTF-8')
        for section, (cls, fields) in _SECTIONS.items():
            defaults = cls()
            values = {}
            for key, attr in fields.items():
                default = getattr(defaults, attr)
                raw = config_parser.get(section, key, fallback=None)
                if raw is None:
                    continue
                try:
                    values[attr] = _parse(raw, type(default))
                except ValueError as e:
                    raise ConfigError(f'key {section}.{key}: {e}')
                if isinstance(values[attr], (int, float)) and not isinstance(values[attr], bool) \
                        and values[attr] < 0:
                    raise ConfigError(f'key {section}.{key}: illegal negative value {raw!r}')
            try:
                sections[section.lower()] = cls(**values)
            except ConfigError:
                raise
            except (TypeError, ValueError) as e:
                raise ConfigError(e)
        log_level = config_parser.get(_LOGGING_SECTION, _LEVEL_KEY, fallback=log_level)

    try:
        logging.set_level(log_level)
    except ValueError as e:
        raise ConfigError(e)

    CONFIG = Config(log_level=log_level, **sections)

    if not config_file_exists:
        CONFIG.save(path)

    return CONFIG


def _parse(raw: str, kind: type):
    if kind is bool:
        return _to_bool(raw)
    if kind is int:
        return int(raw)
    return float(raw)


def _to_str(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    return str(value)


def _to_bool(value: str | bool) -> bool:
    if isinstance(value, bool):
        return value
    elif value.lower() in ['true', '1', 'yes']:
        return True
    elif value.lower() in ['false', '0', 'no']:
        return False
    else:
        raise ConfigError(f'illegal boolean value {value!r}')
