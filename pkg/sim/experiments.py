"""Method comparison over a suite of scenarios and seeds."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd

from sim.environment import EnvParams, gen_random_env
from sim.metrics import RunMetrics, metrics_frame, summarize
from sim.scenario import METHODS, Scenario, ScenarioError, load_scenario
from sim.simulator import MissionSimulator

logger = logging.getLogger('episim.sim')

SCENARIO_SUFFIXES = ('.json', '.yml', '.yaml')


def load_suite(directory: Union[str, Path]) -> List[Scenario]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ScenarioError(f"suite directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in SCENARIO_SUFFIXES)
    if not files:
        raise ScenarioError(f"no scenario files in {directory}")
    return [load_scenario(p) for p in files]


def desk_suite(n_envs: int = 20, faults: Sequence[int] = (0, 1, 2), seed: int = 0,
               params: EnvParams = EnvParams(n_obstacles=(5, 5))) -> List[Scenario]:
    """20 m desk-scale environments, each generated once per fault count from the same seed."""
    scenarios = []
    for k in range(n_envs):
        for n_faults in faults:
            scenarios.append(gen_random_env(replace(params, n_failures=n_faults), seed=seed + k,
                                            name=f"desk-{seed + k}-f{n_faults}"))
    return scenarios


def run_suite(scenarios: Iterable[Scenario], seeds: Iterable[int] = (0,),
              config: Optional[Dict[str, Any]] = None, methods: Sequence[str] = METHODS,
              progress_callback: Optional[Callable[[int, str], None]] = None) -> pd.DataFrame:
    """One metrics row per (scenario, seed, method).

    The ideal baseline runs first; the other methods are capped at
    sim.time_cap_factor times its time (or sim.max_time when it did not finish).
    """
    simulator = MissionSimulator(config)
    factor = simulator.config['sim']['time_cap_factor']
    scenarios = list(scenarios)
    seeds = list(seeds)
    order = ["ideal"] + [m for m in methods if m != "ideal"]
    total = max(1, len(scenarios) * len(seeds) * len(order))
    runs: List[RunMetrics] = []
    done = 0
    for scenario in scenarios:
        for seed in seeds:
            seeded = scenario.with_seed(seed)
            cap = simulator.max_time
            for method in order:
                metrics = simulator.run(seeded, method, time_cap=cap)
                if method == "ideal" and metrics.complete:
                    cap = min(simulator.max_time, factor * metrics.mission_time)
                if method in methods:
                    runs.append(metrics)
                done += 1
                if progress_callback:
                    progress_callback(int(100 * done / total), f"{scenario.name} seed {seed}: {method}")
            logger.info("%s seed %d done", scenario.name, seed)
    return metrics_frame(runs)


def compare(scenarios: Iterable[Scenario], seeds: Iterable[int], out_dir: Union[str, Path],
            config: Optional[Dict[str, Any]] = None,
            progress_callback: Optional[Callable[[int, str], None]] = None) -> pd.DataFrame:
    """Run the suite, write runs.csv and summary.csv to `out_dir` and return the summary."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frame = run_suite(scenarios, seeds, config, progress_callback=progress_callback)
    frame.to_csv(out_dir / "runs.csv", index=False)
    summary = summarize(frame)
    summary.to_csv(out_dir / "summary.csv", index=False)
    logger.info("suite of %d runs summarised in %s", len(frame), out_dir / "summary.csv")
    return summary
