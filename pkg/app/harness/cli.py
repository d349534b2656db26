"""Command-line interface: scenario generation, single runs, benchmarks, plots and replays."""
from __future__ import annotations

import argparse
import dataclasses
import json
import pathlib
import sys
import typing as typ

from .. import config, constants, dvgraph
from ..executor import RunTrace
from ..utils.tables import print_rows
from ..world import Scenario, ScenarioFormatError, load_scenario, save_scenario
from .metrics import Metrics, save_metrics, summary_table, task_table
from .plots import emit_plots
from .runner import PLANNERS, measure_latency, replay, run_benchmark, run_task
from .scenarios import ScenarioClass, generate_scenario

# Largest replay deviation still reported as a match, in meters
REPLAY_TOLERANCE = 1e-6


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='InteractiveNav', description=f'{constants.APP_NAME} v{constants.VERSION}')
    parser.add_argument('--config', type=pathlib.Path, help='configuration file, created with defaults if missing')
    parser.add_argument('--out-dir', type=pathlib.Path, default=pathlib.Path('out'), help='output directory')
    parser.add_argument('--ticks-per-sec', type=float, help='simulation rate, overrides [Sensor] RateHz')
    commands = parser.add_subparsers(dest='command', required=True)

    def scenario_args(p: argparse.ArgumentParser):
        p.add_argument('--scenario', default=ScenarioClass.ROOM.value,
                       help='scenario class (' + ', '.join(c.value for c in ScenarioClass) + ') or scenario file')
        p.add_argument('--seed', type=int, default=0)

    gen = commands.add_parser('gen', help='generate a scenario file')
    scenario_args(gen)

    run = commands.add_parser('run', help='run one task')
    scenario_args(run)
    run.add_argument('--task', type=int, default=0)
    run.add_argument('--planner', choices=PLANNERS, default='ours')

    bench = commands.add_parser('bench', help='run every task with one or all planners')
    scenario_args(bench)
    bench.add_argument('--planner', choices=PLANNERS + ('all',), default='all')
    bench.add_argument('--workers', type=int, default=1)
    bench.add_argument('--plots', action='store_true', help='also write SVG plots')

    plot = commands.add_parser('plot', help='render traces as SVG')
    scenario_args(plot)
    plot.add_argument('--task', type=int, default=0)
    plot.add_argument('--trace', type=pathlib.Path, help='trace file; the world alone if omitted')
    plot.add_argument('--graph', type=pathlib.Path, help='graph file to overlay')

    replay_ = commands.add_parser('replay', help='re-apply a trace to a fresh world')
    scenario_args(replay_)
    replay_.add_argument('--task', type=int, default=0)
    replay_.add_argument('--trace', type=pathlib.Path, required=True)

    latency = commands.add_parser('latency', help='time global searches against dense-grid A*')
    scenario_args(latency)
    latency.add_argument('--queries', type=int, default=100)
    latency.add_argument('--grid-queries', type=int, default=3)
    return parser


def main(argv: typ.Sequence[str] = None) -> int:
    """Runs a command.

    :param argv: Arguments; those of the process if None.
    :return: The exit code.
    """
    args = build_parser().parse_args(argv)
    try:
        cfg = config.load_config(args.config) if args.config else (config.CONFIG or config.Config())
    except config.ConfigError as e:
        print(e, file=sys.stderr)
        return -1
    if args.ticks_per_sec:
        cfg = cfg.copy()
        cfg.sensor = dataclasses.replace(cfg.sensor, rate=args.ticks_per_sec)
    try:
        scenario = _scenario(args.scenario, args.seed)
    except (ScenarioFormatError, OSError, ValueError) as e:
        print(f'cannot load scenario: {e}', file=sys.stderr)
        return -1

    out_dir: pathlib.Path = args.out_dir
    match args.command:
        case 'gen':
            return _gen(scenario, out_dir)
        case 'run':
            return _run(scenario, args.task, args.planner, cfg, out_dir)
        case 'bench':
            return _bench(scenario, args.planner, cfg, args.workers, out_dir, args.plots)
        case 'plot':
            return _plot(scenario, args.task, args.trace, args.graph, out_dir)
        case 'replay':
            return _replay(scenario, args.task, args.trace, cfg)
        case _:
            return _latency(scenario, args.queries, args.grid_queries, cfg)


def _scenario(name: str, seed: int) -> Scenario:
    if name in {c.value for c in ScenarioClass}:
        return generate_scenario(name, seed)
    return load_scenario(pathlib.Path(name))


def _gen(scenario: Scenario, out_dir: pathlib.Path) -> int:
    path = out_dir / f'{scenario.name}.json'
    out_dir.mkdir(parents=True, exist_ok=True)
    if not save_scenario(scenario, path):
        print(f'could not write {path}', file=sys.stderr)
        return 1
    rows = [(i, f'({t.start.x}, {t.start.y})', f'({t.goal.x}, {t.goal.y})',
             f'{t.start.position.distance_to(t.goal):.2f}') for i, t in enumerate(scenario.tasks)]
    print(f'{path}: {len(scenario.background)} walls, {len(scenario.movables)} movable objects')
    print_rows(rows, ('task', 'start', 'goal', 'distance [m]'))
    return 0


def _run(scenario: Scenario, task: int, planner: str, cfg: config.Config, out_dir: pathlib.Path) -> int:
    if not 0 <= task < len(scenario.tasks):
        print(f'no task {task} in {scenario.name}', file=sys.stderr)
        return -1
    result = run_task(scenario, task, planner, cfg)
    stem = f'{scenario.name}_{planner}_task{task}'
    result.trace.save(out_dir / f'{stem}.csv')
    if result.graph is not None:
        dvgraph.save_graph(result.graph, out_dir / f'{stem}.dvg')
    print(task_table(Metrics(scenario.name, planner, (result.metrics,))))
    return 0 if result.metrics.success else 1


def _bench(scenario: Scenario, planner: str, cfg: config.Config, workers: int, out_dir: pathlib.Path,
           plots: bool) -> int:
    planners = PLANNERS if planner == 'all' else (planner,)
    all_metrics = []
    for name in planners:
        metrics, results = run_benchmark(scenario, name, cfg, workers=workers, out_dir=out_dir)
        all_metrics.append(metrics)
        print(f'{name}:')
        print(task_table(metrics))
        print()
        if plots:
            traces = {r.metrics.task_index: r.trace for r in results}
            emit_plots(scenario, traces, out_dir, prefix=f'{name}_')
    print(summary_table(all_metrics))
    save_metrics(all_metrics, out_dir / f'{scenario.name}_metrics.json')
    return 0


def _plot(scenario: Scenario, task: int, trace_path: pathlib.Path | None, graph_path: pathlib.Path | None,
          out_dir: pathlib.Path) -> int:
    traces = {}
    if trace_path is not None:
        trace = RunTrace.load(trace_path)
        if trace is None:
            print(f'could not read {trace_path}', file=sys.stderr)
            return 1
        traces[task] = trace
    graph = None
    if graph_path is not None:
        try:
            graph = dvgraph.load_graph(graph_path)
        except dvgraph.GraphFormatError as e:
            print(e, file=sys.stderr)
            return 1
    for path in emit_plots(scenario, traces, out_dir, graph):
        print(path)
    return 0


def _replay(scenario: Scenario, task: int, trace_path: pathlib.Path, cfg: config.Config) -> int:
    trace = RunTrace.load(trace_path)
    if trace is None:
        print(f'could not read {trace_path}', file=sys.stderr)
        return 1
    deviation = replay(scenario, task, trace, cfg)
    print(f'max pose deviation: {deviation:.3e} m over {len(trace)} ticks')
    return 0 if deviation <= REPLAY_TOLERANCE else 1


def _latency(scenario: Scenario, queries: int, grid_queries: int, cfg: config.Config) -> int:
    report = measure_latency(scenario, queries, grid_queries, cfg)
    print(json.dumps({
        'scenario': scenario.name,
        'vertices': report.vertices,
        'graph_median_ms': report.median_graph_time,
        'grid_median_ms': report.median_grid_time,
        'speedup': report.speedup,
    }, indent=1))
    return 0
