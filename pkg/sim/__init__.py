from .connectivity import DisjointSet, ConnectivityGraph, connectivity, positions_connected
from .scenario import (
    METHODS, ScenarioError, FailureEvent, Scenario, scenario_from_dict, scenario_to_dict, load_scenario,
    save_scenario, validate_scenario,
)
from .environment import ROBOT_KINDS, EnvParams, parse_team, gen_random_env
from .trace import EVENT_KINDS, TraceLog, load_trace
from .metrics import METRIC_COLUMNS, RunMetrics, metrics_frame, save_metrics, summarize
from .agents import MapLedger, TrackingMode, RobotAgent, next_waypoint
from .simulator import MissionSimulator, run_scenario, run_baseline_flock, run_baseline_ideal
from .replay import RENDER_FORMATS, ReplayError, render, render_ascii, render_pgm, render_png, save_final_map
from .experiments import load_suite, desk_suite, run_suite, compare
