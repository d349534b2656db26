"""Scenario description and its versioned JSON file format."""
from __future__ import annotations

import dataclasses
import json
import pathlib
import typing as typ

from .simulator import MovableObjectTruth, RobotTruth, WorldError
from .. import constants
from ..logging import logger
from ..model import Point2, Polygon, PolygonClass, Pose2


class ScenarioFormatError(WorldError):
    pass


@dataclasses.dataclass(frozen=True)
class Task:
    start: Pose2
    goal: Point2


@dataclasses.dataclass(frozen=True)
class Scenario:
    """A world with its navigation tasks."""
    name: str
    kind: str
    bounds: tuple[float, float, float, float]
    background: tuple[Polygon, ...]
    movables: tuple[MovableObjectTruth, ...]
    robot: RobotTruth
    tasks: tuple[Task, ...]
    seed: int

    def movable(self, object_id: str) -> MovableObjectTruth:
        for o in self.movables:
            if o.id == object_id:
                return o
        raise WorldError(f'unknown object {object_id!r}')

    def replace_movable(self, obj: MovableObjectTruth) -> Scenario:
        return dataclasses.replace(self, movables=tuple(obj if o.id == obj.id else o for o in self.movables))


def scenario_to_dict(scenario: Scenario) -> dict[str, typ.Any]:
    return {
        'format': constants.SCENARIO_FORMAT_VERSION,
        'name': scenario.name,
        'class': scenario.kind,
        'seed': scenario.seed,
        'bounds': list(scenario.bounds),
        'background': [{'id': p.id, 'vertices': [list(v.as_tuple()) for v in p.vertices]}
                       for p in scenario.background],
        'movables': [{
            'id': o.id,
            'shape': [list(v.as_tuple()) for v in o.shape.vertices],
            'pose': list(o.pose.as_tuple()),
            'mass': o.mass,
            'ground_friction': o.ground_friction,
            'surface_friction': o.surface_friction,
        } for o in scenario.movables],
        'robot': {
            'radius': scenario.robot.radius,
            'max_push_force': scenario.robot.max_push_force,
            'max_speed': scenario.robot.max_speed,
            'max_yaw_rate': scenario.robot.max_yaw_rate,
            'contact_width': scenario.robot.contact_width,
        },
        'tasks': [{'start': list(t.start.as_tuple()), 'goal': list(t.goal.as_tuple())} for t in scenario.tasks],
    }


def scenario_from_dict(data: dict[str, typ.Any]) -> Scenario:
    """Builds a scenario from its dictionary form.

    :raise ScenarioFormatError: If the data is malformed or of an unsupported version.
    """
    try:
        version = data['format']
        if version != constants.SCENARIO_FORMAT_VERSION:
            raise ScenarioFormatError(f'unsupported scenario format {version!r}')
        background = tuple(Polygon.from_coords(p['vertices'], PolygonClass.BACKGROUND, str(p['id']))
                           for p in data['background'])
        movables = tuple(MovableObjectTruth(
            id=str(o['id']),
            shape=Polygon.from_coords(o['shape'], PolygonClass.MOVABLE, str(o['id'])),
            pose=Pose2(*map(float, o['pose'])),
            mass=float(o['mass']),
            ground_friction=float(o['ground_friction']),
            surface_friction=float(o['surface_friction']),
        ) for o in data['movables'])
        robot = RobotTruth(**{k: float(v) for k, v in data['robot'].items()})
        tasks = tuple(Task(Pose2(*map(float, t['start'])), Point2(*map(float, t['goal']))) for t in data['tasks'])
        return Scenario(
            name=str(data['name']),
            kind=str(data['class']),
            bounds=tuple(float(b) for b in data['bounds']),
            background=background,
            movables=movables,
            robot=robot,
            tasks=tasks,
            seed=int(data['seed']),
        )
    except ScenarioFormatError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioFormatError(f'malformed scenario: {e!r}')


def dumps(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario), indent=1)


def loads(text: str) -> Scenario:
    try:
        return scenario_from_dict(json.loads(text))
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f'invalid JSON: {e}')


def save_scenario(scenario: Scenario, path: pathlib.Path) -> bool:
    """Writes a scenario file.

    :return: True on success, False if the file could not be written.
    """
    try:
        path.write_text(dumps(scenario), encoding='UTF-8')
    except OSError as e:
        logger.exception(e)
        return False
    return True


def load_scenario(path: pathlib.Path) -> Scenario:
    """Reads a scenario file.

    :raise ScenarioFormatError: If the file is malformed.
    :raise OSError: If the file cannot be read.
    """
    return loads(path.read_text(encoding='UTF-8'))
