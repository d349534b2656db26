"""SVG renderings of worlds, graphs and trajectories."""
from __future__ import annotations

import pathlib
import typing as typ

import matplotlib

matplotlib.use('Agg')

import matplotlib.collections as mcollections
import matplotlib.figure as mfigure
import matplotlib.patches as mpatches
import numpy as np

from .. import constants
from ..dvgraph import DVGraph
from ..executor import RunTrace
from ..logging import logger
from ..model import Polygon
from ..world import Scenario

BACKGROUND_COLOR = '#c0392b'
MOVABLE_COLOR = '#27ae60'
EDGE_COLOR = '#999999'
INTERACTION_COLOR = '#2980b9'

matplotlib.rcParams['svg.hashsalt'] = constants.SVG_HASH_SALT


def emit_plots(scenario: Scenario, traces: typ.Mapping[int, RunTrace], out_dir: pathlib.Path,
               graph: DVGraph = None, prefix: str = '') -> list[pathlib.Path]:
    """Writes one SVG per trace. Equal inputs give byte-identical files.

    Walls are drawn red, movable objects green at their initial poses, graph edges gray and the trajectory
    colored by time, from dark to light.

    :param scenario: The world.
    :param traces: Traces by task index. If empty, a single map of the world is written.
    :param out_dir: Output directory.
    :param graph: A DV-graph to overlay.
    :param prefix: Prefix of the file names.
    :return: The written files.
    """
    items = sorted(traces.items()) or [(None, None)]
    written = []
    for task_index, trace in items:
        name = f'{prefix}{scenario.name}' + (f'_task{task_index}' if task_index is not None else '')
        path = out_dir / f'{name}.svg'
        figure = render(scenario, trace, graph, task_index)
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            figure.savefig(path, format='svg', metadata={'Date': None})
        except OSError as e:
            logger.exception(e)
            continue
        written.append(path)
    return written


def render(scenario: Scenario, trace: RunTrace = None, graph: DVGraph = None,
           task_index: int = None) -> mfigure.Figure:
    figure = mfigure.Figure(figsize=(8, 8))
    ax = figure.add_subplot()
    ax.set_aspect('equal')
    x0, y0, x1, y1 = scenario.bounds
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_title(scenario.name)

    for p in scenario.background:
        ax.add_patch(_patch(p, BACKGROUND_COLOR))
    for o in scenario.movables:
        ax.add_patch(_patch(o.polygon(), MOVABLE_COLOR))

    if graph is not None:
        segments = [(graph.vertex(e.a).position.as_tuple(), graph.vertex(e.b).position.as_tuple())
                    for e in graph.visibility_edges()]
        ax.add_collection(mcollections.LineCollection(segments, colors=EDGE_COLOR, linewidths=0.3))
        arrows = [(graph.vertex(e.source).position.as_tuple(), graph.vertex(e.target).position.as_tuple())
                  for e in graph.interaction_edges()]
        if arrows:
            ax.add_collection(mcollections.LineCollection(arrows, colors=INTERACTION_COLOR, linewidths=0.8,
                                                          linestyles='dashed'))

    if task_index is not None and task_index < len(scenario.tasks):
        task = scenario.tasks[task_index]
        ax.plot([task.start.x], [task.start.y], marker='o', color='black', linestyle='none')
        ax.plot([task.goal.x], [task.goal.y], marker='*', color='black', markersize=12, linestyle='none')

    if trace is not None and len(trace) > 1:
        positions = trace.positions()
        times = np.array([r.timestamp for r in trace], dtype=float)
        segments = np.stack([positions[:-1], positions[1:]], axis=1)
        lines = mcollections.LineCollection(segments, cmap='viridis', linewidths=1.5)
        lines.set_array(times[:-1])
        ax.add_collection(lines)
        figure.colorbar(lines, ax=ax, label='time [s]')
        pushes = [(r.x, r.y) for r in trace if r.pushing]
        if pushes:
            xs, ys = zip(*pushes)
            ax.plot(xs, ys, marker='.', markersize=2, color=MOVABLE_COLOR, linestyle='none')
    return figure


def _patch(p: Polygon, color: str) -> mpatches.Polygon:
    return mpatches.Polygon(p.coords, closed=True, facecolor=color, edgecolor=color, alpha=0.6)
