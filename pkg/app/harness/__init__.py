from .baselines import OccupancyGrid, grid_astar, occupancy, plan_on_grid, push_through_gain, shortest_length
from .metrics import Metrics, TaskMetrics, load_metrics, path_length, save_metrics, spl, summary_table
from .plots import emit_plots
from .runner import PLANNERS, LatencyReport, RunResult, measure_latency, replay, run_benchmark, run_task
from .scenarios import ScenarioClass, generate_scenario
