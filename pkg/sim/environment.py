"""Random environments: rectangular obstacles, a clustered team and satisfiable tasks."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from domain.types import GROUND, AERIAL, RobotSpec, Task
from gridworld.occupancy import DEFAULT_MAP_PARAMS
from gridworld.planning import travel_costs
from sim.scenario import FailureEvent, Scenario, ScenarioError, validate_scenario

logger = logging.getLogger('episim.sim')

# kind -> (capability, max speed m/s, LiDAR range m, comm radius m)
ROBOT_KINDS: Dict[str, Tuple[frozenset, float, float, float]] = {
    'ugv': (frozenset({GROUND}), 2.0, 5.0, 10.0),
    'uav': (frozenset({AERIAL}), 6.0, 5.0, 10.0),
}


@dataclass(frozen=True)
class EnvParams:
    width: float = 20.0
    height: float = 20.0
    resolution: float = 0.5
    n_obstacles: Tuple[int, int] = (5, 15)
    obstacle_size: Tuple[float, float] = (1.0, 3.0)
    n_tasks: int = 2
    team: Tuple[str, ...] = ('ugv', 'ugv', 'uav')
    n_failures: int = 0
    failure_window: Tuple[float, float] = (5.0, 30.0)
    task_duration: Tuple[float, float] = (1.0, 3.0)
    n_ranks: int = 3
    speed_factors: Tuple[float, ...] = (1.0, 0.6, 0.2)
    max_attempts: int = 200


def parse_team(spec: str) -> Tuple[str, ...]:
    """'2ugv,1uav' -> ('ugv', 'ugv', 'uav')."""
    kinds: List[str] = []
    for part in (p.strip() for p in spec.split(',') if p.strip()):
        match = re.fullmatch(r"(\d*)\s*([a-zA-Z]+)", part)
        if not match or match.group(2).lower() not in ROBOT_KINDS:
            raise ScenarioError(f"bad team entry '{part}', expected e.g. 2ugv or 1uav")
        kinds.extend([match.group(2).lower()] * int(match.group(1) or 1))
    if not kinds:
        raise ScenarioError("team specification is empty")
    return tuple(kinds)


def _random_free_point(rng: np.random.Generator, cols: int, rows: int, res: float, blocked: set,
                       reach: np.ndarray) -> Tuple[float, float]:
    free = [(ix, iy) for iy in range(rows) for ix in range(cols) if (ix, iy) not in blocked and reach[iy, ix]]
    ix, iy = free[int(rng.integers(len(free)))]
    return ((ix + rng.uniform(0.2, 0.8)) * res, (iy + rng.uniform(0.2, 0.8)) * res)


def gen_random_env(params: EnvParams = EnvParams(), seed: int = 0, name: Optional[str] = None) -> Scenario:
    """Sample obstacles until the start area reaches every task; ScenarioError when the budget runs out."""
    rng = np.random.default_rng(seed)
    res = params.resolution
    cols = int(math.ceil(params.width / res - 1e-9))
    rows = int(math.ceil(params.height / res - 1e-9))
    kinds = params.team
    specs = [ROBOT_KINDS[k] for k in kinds]
    comm = min(s[3] for s in specs)

    for attempt in range(params.max_attempts):
        blocked = set()
        for _ in range(int(rng.integers(params.n_obstacles[0], params.n_obstacles[1] + 1))):
            w = max(1, int(round(rng.uniform(*params.obstacle_size) / res)))
            h = max(1, int(round(rng.uniform(*params.obstacle_size) / res)))
            x0 = int(rng.integers(0, max(1, cols - w + 1)))
            y0 = int(rng.integers(0, max(1, rows - h + 1)))
            blocked.update((x, y) for x in range(x0, min(cols, x0 + w)) for y in range(y0, min(rows, y0 + h)))

        free_cells = [(ix, iy) for iy in range(rows) for ix in range(cols) if (ix, iy) not in blocked]
        if not free_cells:
            continue
        base_cell = free_cells[int(rng.integers(len(free_cells)))]
        scratch = Scenario("scratch", params.width, params.height, res, (), unknown_obstacles=frozenset(blocked))
        reach = np.isfinite(travel_costs(scratch.truth_grid(), base_cell, DEFAULT_MAP_PARAMS))
        if reach.sum() < 0.5 * len(free_cells):
            continue

        base = ((base_cell[0] + 0.5) * res, (base_cell[1] + 0.5) * res)
        near = [(ix, iy) for ix, iy in free_cells if reach[iy, ix]
                and math.dist(((ix + 0.5) * res, (iy + 0.5) * res), base) <= comm / 2.0]
        if len(near) < len(kinds):
            continue
        picks = rng.choice(len(near), size=len(kinds), replace=False)
        robots = []
        for rid, (kind, k) in enumerate(zip(kinds, sorted(int(p) for p in picks))):
            capability, speed, sense_r, comm_r = ROBOT_KINDS[kind]
            ix, iy = near[k]
            robots.append(RobotSpec(rid, capability, speed, sense_r, comm_r,
                                    ((ix + 0.5) * res, (iy + 0.5) * res), kind=kind))

        available = sorted({c for r in robots for c in r.capability})
        tasks = []
        for tid in range(params.n_tasks):
            required = [0, 0]
            for kind in available:
                required[kind] = int(rng.integers(0, 2))
            if sum(required) == 0:
                required[available[int(rng.integers(len(available)))]] = 1
            position = _random_free_point(rng, cols, rows, res, blocked, reach)
            tasks.append(Task(tid, position, tuple(required), float(rng.uniform(*params.task_duration))))

        failures = []
        if params.n_failures:
            victims = rng.choice(len(robots), size=min(params.n_failures, len(robots)), replace=False)
            for v in sorted(int(x) for x in victims):
                failures.append(FailureEvent(round(float(rng.uniform(*params.failure_window)), 1), v,
                                             int(rng.integers(2, params.n_ranks + 1))))

        scenario = Scenario(
            name=name or f"env-{seed}", width=params.width, height=params.height, resolution=res,
            robots=tuple(robots), tasks=tuple(tasks), unknown_obstacles=frozenset(blocked),
            failures=tuple(failures), seed=int(seed), n_ranks=params.n_ranks,
            speed_factors=tuple(params.speed_factors), n_kinds=2)
        try:
            validate_scenario(scenario)
        except ScenarioError as e:
            logger.debug("attempt %d rejected: %s", attempt, e)
            continue
        logger.info("generated %s after %d attempts", scenario.name, attempt + 1)
        return scenario
    raise ScenarioError(f"rejection budget of {params.max_attempts} attempts exhausted")
