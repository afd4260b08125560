"""
cli.py: Command-line front end for episim.

Every subcommand is a thin wrapper around the Public API below, which in turn
only calls the sim package. Library code logs; this file prints.

Usage (command line):
    python cli.py run --scenario scenarios/recovery.json --method proposed --out runs/recovery
    python cli.py gen --size 20 20 --robots 2ugv,1uav --tasks 2 --seed 3 --out env.yaml
    python cli.py compare --suite scenarios/ --seeds 5 --out results/
    python cli.py replay --trace runs/recovery/trace.jsonl --render ascii
    python cli.py config show sim

Usage (Python):
    from cli import load_config, run, generate, compare_suite, replay
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from config import DEFAULT_CONFIG_FILE, ConfigManager, get_default_config
from sim import (
    METHODS, RENDER_FORMATS, EnvParams, MissionSimulator, ReplayError, RunMetrics, Scenario, ScenarioError,
    compare, desk_suite, gen_random_env, load_scenario, load_suite, load_trace, parse_team, render,
    save_final_map, save_metrics, save_scenario,
)
from alloc import AllocationError
from belief import BeliefError
from domain import ContractViolation, DomainError
from epistemic import EpistemicError
from version import __app_name__, __version__

logger = logging.getLogger('episim.cli')

# Anything the library raises for bad input or an impossible run.
EPISIM_ERRORS = (ScenarioError, ReplayError, AllocationError, BeliefError, EpistemicError,
                 ContractViolation, DomainError, ValueError, OSError)


# ── Public API ─────────────────────────────────────────────────────────────────

def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Defaults merged with a JSON or YAML override file, then validated.

    An explicit `path` must exist and be valid. Without one, config.json in the
    working directory is used when present.
    """
    if path:
        return ConfigManager(path, strict=True).get_config()
    return ConfigManager(DEFAULT_CONFIG_FILE).get_config()


def run(scenario_path: str, method: Optional[str] = None, seed: Optional[int] = None,
        out_dir: Optional[str] = None, config: Optional[Dict[str, Any]] = None,
        time_cap: Optional[float] = None,
        progress_callback: Optional[Callable[[int, str], None]] = None) -> Dict[str, Any]:
    """Simulate one scenario; writes trace.jsonl and metrics.csv to `out_dir` when given.

    Returns a dict with the metrics row, the RunMetrics object and the written paths.
    """
    scenario = load_scenario(scenario_path)
    if seed is not None:
        scenario = scenario.with_seed(seed)
    metrics = MissionSimulator(config).run(scenario, method, progress_callback, time_cap)

    outputs: List[Path] = []
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        outputs.append(metrics.trace.save(out / "trace.jsonl"))
        outputs.append(save_metrics([metrics], out / "metrics.csv"))
    return {"row": metrics.row(), "metrics": metrics, "outputs": outputs}


def generate(size: Sequence[float] = (20.0, 20.0), robots: str = "2ugv,1uav", tasks: int = 2,
             seed: int = 0, failures: int = 0, obstacles: Optional[Sequence[int]] = None,
             out: Optional[str] = None) -> Scenario:
    """Random solvable scenario; saved as JSON or YAML (by suffix) when `out` is given."""
    params = EnvParams(width=float(size[0]), height=float(size[1]), team=parse_team(robots),
                       n_tasks=int(tasks), n_failures=int(failures))
    if obstacles is not None:
        params = replace(params, n_obstacles=(int(obstacles[0]), int(obstacles[-1])))
    scenario = gen_random_env(params, seed=seed)
    if out:
        save_scenario(scenario, out)
    return scenario


def compare_suite(suite_dir: Optional[str], seeds: int, out_dir: str,
                  config: Optional[Dict[str, Any]] = None, desk: Optional[int] = None,
                  progress_callback: Optional[Callable[[int, str], None]] = None):
    """Run every method on a scenario directory (or a generated desk suite) for `seeds` seeds."""
    if desk:
        scenarios = desk_suite(n_envs=desk)
    elif suite_dir:
        scenarios = load_suite(suite_dir)
    else:
        raise ScenarioError("compare needs --suite DIR or --desk N")
    return compare(scenarios, range(seeds), out_dir, config, progress_callback)


def replay(trace_path: str, fmt: str = "ascii", out: Optional[str] = None, map_out: Optional[str] = None):
    """Render a saved trace; also writes the bare final map to `map_out` (.pgm or ASCII) when given."""
    trace = load_trace(trace_path)
    if map_out:
        save_final_map(trace, map_out)
    return render(trace, fmt, out)


def describe(metrics: RunMetrics) -> List[str]:
    """Human summary lines for a finished run."""
    status = f"complete at t = {metrics.mission_time:.1f} s" if metrics.complete else \
        f"time cap reached at t = {metrics.elapsed:.1f} s"
    return [
        f"Scenario:  {metrics.scenario} ({metrics.method}, seed {metrics.seed}, {metrics.faults} fault(s))",
        f"Status:    {status}",
        f"Tasks:     {metrics.tasks_completed}/{metrics.n_tasks}",
        f"Coverage:  {metrics.coverage_final:.3f} final, {metrics.coverage_auc():.3f} time-averaged",
        f"Messages:  {metrics.message_count} over {metrics.syncs} syncs, {metrics.allocations} allocations",
        f"Distance:  {sum(metrics.distance.values()):.1f} m",
    ]


# ── Command-line interface ─────────────────────────────────────────────────────

def _progress(pct, msg):
    bar = "█" * (pct // 5) + "░" * (20 - pct // 5)
    print(f"\r[{bar}] {pct:3d}%  {msg:<50}", end="", flush=True, file=sys.stderr)


def _cmd_run(args, config):
    print(f"Simulating: {args.scenario}")
    result = run(args.scenario, args.method, args.seed, args.out, config, args.time_cap,
                 None if args.quiet else _progress)
    if not args.quiet:
        print(file=sys.stderr)  # newline after progress bar
    for line in describe(result["metrics"]):
        print(line)
    for path in result["outputs"]:
        print(f"  wrote {path}")


def _cmd_gen(args, config):
    scenario = generate(args.size, args.robots, args.tasks, args.seed, args.failures, args.obstacles,
                        args.out)
    print(f"Generated {scenario.name}: {scenario.width:g} x {scenario.height:g} m, "
          f"{len(scenario.robots)} robots, {len(scenario.tasks)} tasks, "
          f"{len(scenario.unknown_obstacles)} obstacle cells, {len(scenario.failures)} failure(s)")
    if args.out:
        print(f"  wrote {args.out}")


def _cmd_compare(args, config):
    summary = compare_suite(args.suite, args.seeds, args.out, config, args.desk,
                            None if args.quiet else _progress)
    if not args.quiet:
        print(file=sys.stderr)
    print(summary.to_string(index=False))
    print(f"\nRuns and summary written to: {args.out}")


def _cmd_replay(args, config):
    result = replay(args.trace, args.render, args.out, args.map)
    if args.render == "png":
        print(f"Plot written to: {result}")
    elif args.out:
        print(f"Rendered {args.render} written to: {args.out}")
    else:
        print(result, end="")
    if args.map:
        print(f"Map written to: {args.map}")


def _cmd_config_show(args, config):
    if args.section:
        if args.section not in config:
            print(f"Error: unknown section '{args.section}'. "
                  f"Available: {', '.join(config.keys())}", file=sys.stderr)
            sys.exit(1)
        print(json.dumps(config[args.section], indent=2))
    else:
        print(json.dumps(config, indent=2))


def _cmd_config_save(args, config):
    out = Path(args.output)
    if out.exists() and not args.force:
        print(f"Error: {out} already exists. Use --force to overwrite.", file=sys.stderr)
        sys.exit(1)
    manager = ConfigManager(None)
    manager.update_config(config)
    manager.config_file = out
    if not manager.save_config():
        print(f"Error: could not write {out}", file=sys.stderr)
        sys.exit(1)
    print(f"Config saved to: {out}")
    print(f"Edit it, then use:  python cli.py --config {out} run --scenario <file>")



def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cli.py",
        description=(
            f"{__app_name__} {__version__}: multi-robot exploration and task allocation under\n"
            "intermittent communication, with empathy-based belief tracking.\n\n"
            "Quick start:\n"
            "  python cli.py run --scenario scenarios/recovery.json --out runs/recovery\n"
            "  python cli.py replay --trace runs/recovery/trace.jsonl\n\n"
            "Tune settings:\n"
            "  python cli.py config save my_config.json\n"
            "  python cli.py --config my_config.json run --scenario scenarios/desk.yaml\n"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="Run any subcommand with --help for details:  python cli.py run --help",
    )
    parser.add_argument("--config", metavar="FILE", help="JSON or YAML file overriding the default config")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    # ── run ──────────────────────────────────────────────────────────────────
    p_run = sub.add_parser(
        "run",
        help="Simulate one scenario with one method",
        description="Simulate a scenario file and write its event trace and metrics row.",
        epilog=(
            "Examples:\n"
            "  python cli.py run --scenario scenarios/recovery.json\n"
            "  python cli.py run --scenario scenarios/desk.yaml --method flock --seed 4 --out runs/desk"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_run.add_argument("--scenario", required=True, metavar="FILE", help="Scenario file (.json, .yml, .yaml)")
    p_run.add_argument("--method", choices=METHODS, help="Override the scenario's method")
    p_run.add_argument("--seed", type=int, help="Override the scenario's seed")
    p_run.add_argument("--out", metavar="DIR", help="Directory for trace.jsonl and metrics.csv")
    p_run.add_argument("--time-cap", type=float, metavar="SECONDS", help="Simulated seconds before giving up")
    p_run.add_argument("-q", "--quiet", action="store_true", help="No progress bar")

    # ── gen ──────────────────────────────────────────────────────────────────
    p_gen = sub.add_parser(
        "gen",
        help="Generate a random solvable scenario",
        description=(
            "Sample rectangular obstacles, a start area and tasks until every task is\n"
            "reachable and satisfiable by the team."
        ),
        epilog="Example:\n  python cli.py gen --size 20 20 --robots 2ugv,1uav --tasks 2 --seed 3 --out env.yaml",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_gen.add_argument("--size", type=float, nargs=2, default=(20.0, 20.0), metavar=("W", "H"))
    p_gen.add_argument("--robots", default="2ugv,1uav", metavar="SPEC", help="Team, e.g. 2ugv,1uav")
    p_gen.add_argument("--tasks", type=int, default=2)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--failures", type=int, default=0, help="Number of robots that degrade mid-run")
    p_gen.add_argument("--obstacles", type=int, nargs=2, metavar=("MIN", "MAX"))
    p_gen.add_argument("--out", metavar="FILE", help="Where to save the scenario (.json or .yaml)")

    # ── compare ──────────────────────────────────────────────────────────────
    p_cmp = sub.add_parser(
        "compare",
        help="Compare proposed, flock and ideal over a suite of scenarios",
        description=(
            "Run every method on every scenario for K seeds. The ideal baseline runs first\n"
            "and caps the others at sim.time_cap_factor times its mission time.\n"
            "Writes runs.csv (one row per run) and summary.csv (mean time per fault level)."
        ),
        epilog=(
            "Examples:\n"
            "  python cli.py compare --suite scenarios/ --seeds 3 --out results/\n"
            "  python cli.py compare --desk 20 --seeds 1 --out results/desk"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_cmp.add_argument("--suite", metavar="DIR", help="Directory of scenario files")
    p_cmp.add_argument("--desk", type=int, metavar="N", help="Use N generated 20 m desk environments instead")
    p_cmp.add_argument("--seeds", type=int, default=1, metavar="K")
    p_cmp.add_argument("--out", default="results", metavar="DIR")
    p_cmp.add_argument("-q", "--quiet", action="store_true", help="No progress bar")

    # ── replay ───────────────────────────────────────────────────────────────
    p_rep = sub.add_parser(
        "replay",
        help="Render a saved trace",
        description="Draw the final merged map, bases and tasks from a trace.jsonl file.",
        epilog=(
            "Examples:\n"
            "  python cli.py replay --trace runs/recovery/trace.jsonl\n"
            "  python cli.py replay --trace runs/recovery/trace.jsonl --render png --out map.png"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p_rep.add_argument("--trace", required=True, metavar="FILE")
    p_rep.add_argument("--render", choices=RENDER_FORMATS, default="ascii")
    p_rep.add_argument("--out", metavar="FILE", help="Output file (required for png)")
    p_rep.add_argument("--map", metavar="FILE", help="Also save the final map alone (.pgm, else ASCII)")

    # ── config ───────────────────────────────────────────────────────────────
    p_cfg = sub.add_parser(
        "config",
        help="Show or save the effective configuration",
        description=(
            "Inspect or export the defaults merged with --config.\n\n"
            "Workflow:\n"
            "  1. Save defaults to a file:  python cli.py config save my_config.json\n"
            "  2. Edit my_config.json\n"
            "  3. Run with your config:     python cli.py --config my_config.json run --scenario F"
        ),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    cfg_sub = p_cfg.add_subparsers(dest="config_command", required=True, metavar="subcommand")

    p_cfg_show = cfg_sub.add_parser("show", help="Print the effective configuration as JSON")
    p_cfg_show.add_argument(
        "section", nargs="?",
        help="Section to show: mapping, control, belief, coverage, alloc, sim, runtime. Omit for full config."
    )
    p_cfg_save = cfg_sub.add_parser("save", help="Save the effective configuration to a JSON or YAML file")
    p_cfg_save.add_argument("output", help="Output file path (e.g. my_config.json)")
    p_cfg_save.add_argument("--force", action="store_true", help="Overwrite if file already exists")

    return parser


def main(argv: Optional[Sequence[str]] = None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')

    # ── dispatch ─────────────────────────────────────────────────────────────
    try:
        config = load_config(args.config)
        if args.command == "config":
            if args.config_command == "show":
                _cmd_config_show(args, config)
            elif args.config_command == "save":
                _cmd_config_save(args, config)
        elif args.command == "run":
            _cmd_run(args, config)
        elif args.command == "gen":
            _cmd_gen(args, config)
        elif args.command == "compare":
            _cmd_compare(args, config)
        elif args.command == "replay":
            _cmd_replay(args, config)
    except EPISIM_ERRORS as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(1)


if __name__ == "__main__":
    main()
