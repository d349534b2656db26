"""Per-task and aggregate benchmark metrics, SPL included."""
from __future__ import annotations

import dataclasses
import json
import pathlib
import statistics
import typing as typ

import numpy as np

from ..logging import logger
from ..utils.tables import format_rows


def spl(successes: typ.Sequence[bool], shortest: typ.Sequence[float], lengths: typ.Sequence[float]) -> float:
    """Success weighted by path length: the mean of S_i · l_i / max(p_i, l_i).

    :param successes: Whether each task succeeded.
    :param shortest: Shortest path length l_i of each task.
    :param lengths: Travelled length p_i of each task.
    :return: A value in [0, 1]; 0 for no task.
    """
    if not len(successes):
        return 0.0
    total = 0.0
    for s, l, p in zip(successes, shortest, lengths):
        if not s:
            continue
        longest = max(p, l)
        total += 1.0 if longest <= 0 else l / longest
    return total / len(successes)


def path_length(positions: np.ndarray) -> float:
    """Length of a polyline given as an (n, 2) array."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(positions) < 2:
        return 0.0
    return float(np.hypot(*np.diff(positions, axis=0).T).sum())


@dataclasses.dataclass(frozen=True)
class TaskMetrics:
    """Outcome of one task.

    :param task_index: Index of the task in its scenario.
    :param success: Whether the goal was reached in time.
    :param path_length: Travelled length p, in meters.
    :param shortest_length: Oracle shortest length l, in meters.
    :param travel_time: Simulated time until termination, in seconds.
    :param search_times: Duration of every global search, in milliseconds.
    :param pushes: Number of push phases started.
    :param replans: Number of global replans.
    """
    task_index: int
    success: bool
    path_length: float
    shortest_length: float
    travel_time: float
    search_times: tuple[float, ...] = ()
    pushes: int = 0
    replans: int = 0

    @property
    def spl_term(self) -> float:
        return spl([self.success], [self.shortest_length], [self.path_length])

    @property
    def mean_search_time(self) -> float:
        return statistics.fmean(self.search_times) if self.search_times else 0.0


@dataclasses.dataclass(frozen=True)
class Metrics:
    """Metrics of one planner on one scenario."""
    scenario: str
    planner: str
    tasks: tuple[TaskMetrics, ...]

    @property
    def spl(self) -> float:
        return spl([t.success for t in self.tasks], [t.shortest_length for t in self.tasks],
                   [t.path_length for t in self.tasks])

    @property
    def success_rate(self) -> float:
        return sum(t.success for t in self.tasks) / len(self.tasks) if self.tasks else 0.0

    @property
    def search_times(self) -> list[float]:
        return [s for t in self.tasks for s in t.search_times]

    @property
    def mean_search_time(self) -> float:
        times = self.search_times
        return statistics.fmean(times) if times else 0.0

    @property
    def median_search_time(self) -> float:
        times = self.search_times
        return statistics.median(times) if times else 0.0

    @property
    def max_search_time(self) -> float:
        return max(self.search_times, default=0.0)

    @property
    def total_path_length(self) -> float:
        return sum(t.path_length for t in self.tasks)

    def to_dict(self) -> dict[str, typ.Any]:
        return {
            'scenario': self.scenario,
            'planner': self.planner,
            'spl': self.spl,
            'success_rate': self.success_rate,
            'search_time_ms': {
                'mean': self.mean_search_time,
                'median': self.median_search_time,
                'max': self.max_search_time,
            },
            'total_path_length': self.total_path_length,
            'tasks': [dataclasses.asdict(t) for t in self.tasks],
        }

    @classmethod
    def from_dict(cls, data: dict[str, typ.Any]) -> Metrics:
        tasks = tuple(TaskMetrics(**{**t, 'search_times': tuple(t['search_times'])}) for t in data['tasks'])
        return cls(data['scenario'], data['planner'], tasks)


def save_metrics(metrics: typ.Sequence[Metrics], path: pathlib.Path) -> bool:
    """Writes metrics as JSON.

    :return: True if the file was written.
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps([m.to_dict() for m in metrics], indent=1), encoding='UTF-8')
    except OSError as e:
        logger.exception(e)
        return False
    return True


def load_metrics(path: pathlib.Path) -> list[Metrics] | None:
    try:
        return [Metrics.from_dict(d) for d in json.loads(path.read_text(encoding='UTF-8'))]
    except (OSError, ValueError, KeyError, TypeError) as e:
        logger.exception(e)
        return None


SUMMARY_COLUMNS = ('scenario', 'planner', 'tasks', 'success', 'SPL', 'path [m]', 'search mean [ms]',
                   'search max [ms]')


def summary_table(metrics: typ.Sequence[Metrics]) -> str:
    """Text table with one line per planner and scenario."""
    rows = [(m.scenario, m.planner, len(m.tasks), f'{m.success_rate:.2f}', f'{m.spl:.3f}',
             f'{m.total_path_length:.2f}', f'{m.mean_search_time:.3f}', f'{m.max_search_time:.3f}')
            for m in metrics]
    return format_rows(rows, SUMMARY_COLUMNS)


TASK_COLUMNS = ('task', 'success', 'p [m]', 'l [m]', 'time [s]', 'pushes', 'replans')


def task_table(metrics: Metrics) -> str:
    rows = [(t.task_index, t.success, f'{t.path_length:.2f}', f'{t.shortest_length:.2f}', f'{t.travel_time:.1f}',
             t.pushes, t.replans) for t in metrics.tasks]
    return format_rows(rows, TASK_COLUMNS)
