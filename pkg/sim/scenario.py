"""Scenario documents: team, tasks, obstacles and scheduled failures.

Scenarios are JSON or YAML. Obstacles are given in grid cells, either as
[ix, iy] pairs or as {"rect": [ix0, iy0, ix1, iy1]} blocks (inclusive).
Known obstacles are on every robot's prior map; unknown ones only in truth.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Optional, Tuple, Union

import numpy as np
import yaml

from belief.particles import BeliefError, check_speed_factors
from domain.types import DomainError, RobotSpec, Task, TaskPhase, capability_satisfies
from gridworld.occupancy import DEFAULT_MAP_PARAMS, Cell, MapParams, OccupancyGrid
from gridworld.planning import travel_costs
from sim.connectivity import connectivity

logger = logging.getLogger('episim.sim')

METHODS = ("proposed", "flock", "ideal")


class ScenarioError(Exception):
    pass


@dataclass(frozen=True)
class FailureEvent:
    time: float
    robot: int
    level: int


@dataclass(frozen=True)
class Scenario:
    name: str
    width: float
    height: float
    resolution: float
    robots: Tuple[RobotSpec, ...]
    tasks: Tuple[Task, ...] = ()
    known_obstacles: FrozenSet = frozenset()
    unknown_obstacles: FrozenSet = frozenset()
    failures: Tuple[FailureEvent, ...] = ()
    seed: int = 0
    method: str = "proposed"
    n_ranks: int = 3
    speed_factors: Tuple[float, ...] = (1.0, 0.6, 0.2)
    tick: Optional[float] = None  # None: sim.tick from the config
    n_kinds: int = 2

    @property
    def cols(self) -> int:
        return int(math.ceil(self.width / self.resolution - 1e-9))

    @property
    def rows(self) -> int:
        return int(math.ceil(self.height / self.resolution - 1e-9))

    @property
    def team(self) -> Dict[int, RobotSpec]:
        return {r.id: r for r in self.robots}

    def truth_grid(self, params: MapParams = DEFAULT_MAP_PARAMS) -> OccupancyGrid:
        return OccupancyGrid.from_cells(self.cols, self.rows, self.resolution,
                                        occupied=sorted(self.known_obstacles | self.unknown_obstacles),
                                        all_free=True, params=params)

    def prior_grid(self, params: MapParams = DEFAULT_MAP_PARAMS) -> OccupancyGrid:
        return OccupancyGrid.from_cells(self.cols, self.rows, self.resolution,
                                        occupied=sorted(self.known_obstacles), params=params)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=int(seed))

    def with_method(self, method: str) -> "Scenario":
        if method not in METHODS:
            raise ScenarioError(f"unknown method '{method}', expected one of {', '.join(METHODS)}")
        return replace(self, method=method)


# ── parsing ──────────────────────────────────────────────────────────────────

def _cells(items: Iterable) -> frozenset:
    cells = set()
    for item in items or ():
        if isinstance(item, dict):
            if 'rect' not in item:
                raise ScenarioError(f"obstacle entry {item} needs a 'rect'")
            x0, y0, x1, y1 = (int(v) for v in item['rect'])
            for iy in range(min(y0, y1), max(y0, y1) + 1):
                for ix in range(min(x0, x1), max(x0, x1) + 1):
                    cells.add((ix, iy))
        else:
            ix, iy = item
            cells.add((int(ix), int(iy)))
    return frozenset(cells)


def scenario_from_dict(doc: dict) -> Scenario:
    try:
        robots = tuple(
            RobotSpec(int(r['id']), frozenset(r['capability']), float(r['max_speed']),
                      float(r['sense_radius']), float(r['comm_radius']), tuple(r['start']),
                      r.get('partition_weight'), r.get('kind', ''))
            for r in doc['robots'])
        tasks = tuple(
            Task(int(t['id']), tuple(t['position']), tuple(t['required']), float(t.get('duration', 0.0)),
                 float(t.get('radius', 0.5)), TaskPhase.UNDISCOVERED)
            for t in doc.get('tasks', ()))
        failures = tuple(FailureEvent(float(f['time']), int(f['robot']), int(f['level']))
                         for f in doc.get('failures', ()))
        scenario = Scenario(
            name=str(doc.get('name', 'scenario')),
            width=float(doc['width']), height=float(doc['height']),
            resolution=float(doc.get('resolution', 0.5)),
            robots=robots, tasks=tasks,
            known_obstacles=_cells(doc.get('known_obstacles')),
            unknown_obstacles=_cells(doc.get('unknown_obstacles')),
            failures=failures,
            seed=int(doc.get('seed', 0)),
            method=str(doc.get('method', 'proposed')),
            n_ranks=int(doc.get('n_ranks', 3)),
            speed_factors=tuple(float(f) for f in doc.get('speed_factors', (1.0, 0.6, 0.2))),
            tick=None if doc.get('tick') is None else float(doc['tick']),
            n_kinds=int(doc.get('n_kinds', 2)),
        )
    except KeyError as e:
        raise ScenarioError(f"scenario is missing field {e}") from e
    except (DomainError, TypeError, ValueError) as e:
        raise ScenarioError(f"invalid scenario: {e}") from e
    validate_scenario(scenario)
    return scenario


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        'name': scenario.name,
        'width': scenario.width,
        'height': scenario.height,
        'resolution': scenario.resolution,
        'robots': [{'id': r.id, 'kind': r.kind, 'capability': sorted(r.capability), 'max_speed': r.max_speed,
                    'sense_radius': r.sense_radius, 'comm_radius': r.comm_radius, 'start': list(r.start),
                    'partition_weight': r.partition_weight} for r in scenario.robots],
        'tasks': [{'id': t.id, 'position': list(t.position), 'required': list(t.required),
                   'duration': t.duration, 'radius': t.radius} for t in scenario.tasks],
        'known_obstacles': [list(c) for c in sorted(scenario.known_obstacles)],
        'unknown_obstacles': [list(c) for c in sorted(scenario.unknown_obstacles)],
        'failures': [{'time': f.time, 'robot': f.robot, 'level': f.level} for f in scenario.failures],
        'seed': scenario.seed,
        'method': scenario.method,
        'n_ranks': scenario.n_ranks,
        'speed_factors': list(scenario.speed_factors),
        'tick': scenario.tick,
        'n_kinds': scenario.n_kinds,
    }


def load_scenario(path: Union[str, Path]) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from e
    try:
        if path.suffix.lower() in ('.yml', '.yaml'):
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        raise ScenarioError(f"cannot parse scenario {path}: {e}") from e
    if not isinstance(doc, dict):
        raise ScenarioError(f"scenario {path} is not a mapping")
    return scenario_from_dict(doc)


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    path = Path(path)
    doc = scenario_to_dict(scenario)
    if path.suffix.lower() in ('.yml', '.yaml'):
        text = yaml.safe_dump(doc, sort_keys=False)
    else:
        text = json.dumps(doc, indent=2)
    path.write_text(text, encoding="utf-8")
    logger.info("scenario '%s' written to %s", scenario.name, path)
    return path


# ── validation ───────────────────────────────────────────────────────────────

def _reachable_from(grid: OccupancyGrid, start: Cell, params: MapParams) -> np.ndarray:
    return np.isfinite(travel_costs(grid, start, params))


def validate_scenario(scenario: Scenario, params: MapParams = DEFAULT_MAP_PARAMS):
    """Raise ScenarioError unless the scenario can be simulated."""
    if scenario.width <= 0 or scenario.height <= 0 or scenario.resolution <= 0:
        raise ScenarioError("workspace size and resolution must be positive")
    if scenario.tick is not None and scenario.tick <= 0:
        raise ScenarioError(f"tick must be positive, got {scenario.tick}")
    if scenario.method not in METHODS:
        raise ScenarioError(f"unknown method '{scenario.method}', expected one of {', '.join(METHODS)}")
    try:
        check_speed_factors(scenario.n_ranks, scenario.speed_factors)
    except BeliefError as e:
        raise ScenarioError(str(e)) from e
    if not scenario.robots:
        raise ScenarioError("scenario has no robots")
    ids = [r.id for r in scenario.robots]
    if len(set(ids)) != len(ids):
        raise ScenarioError(f"duplicate robot ids {ids}")
    task_ids = [t.id for t in scenario.tasks]
    if len(set(task_ids)) != len(task_ids):
        raise ScenarioError(f"duplicate task ids {task_ids}")

    grid = scenario.truth_grid(params)
    blocked = scenario.known_obstacles | scenario.unknown_obstacles
    for c in blocked:
        if not grid.in_bounds(c):
            raise ScenarioError(f"obstacle cell {c} outside the {grid.width}x{grid.height} grid")

    def _free_cell(point, what):
        cell = grid.world_to_cell(point)
        if not grid.in_bounds(cell):
            raise ScenarioError(f"{what} at {tuple(point)} lies outside the workspace")
        if cell in blocked:
            raise ScenarioError(f"{what} at {tuple(point)} lies inside an obstacle")
        return cell

    starts = {r.id: _free_cell(r.start, f"robot {r.id} start") for r in scenario.robots}
    for r in scenario.robots:
        if any(k < 0 or k >= scenario.n_kinds for k in r.capability):
            raise ScenarioError(f"robot {r.id} capability {sorted(r.capability)} outside [0, {scenario.n_kinds})")
    team = scenario.team
    poses = {r.id: r.start for r in scenario.robots}
    graph = connectivity(poses, team)
    for i in ids:
        for j in ids:
            if i < j and not graph.adjacent(i, j):
                raise ScenarioError(f"robots {i} and {j} do not start within communication range")

    reach = _reachable_from(grid, starts[ids[0]], params)
    for rid, cell in starts.items():
        if not reach[cell[1], cell[0]]:
            raise ScenarioError(f"robot {rid} start cannot be reached from robot {ids[0]}")
    caps = [r.capability for r in scenario.robots]
    for t in scenario.tasks:
        cell = _free_cell(t.position, f"task {t.id}")
        if len(t.required) != scenario.n_kinds:
            raise ScenarioError(f"task {t.id} requires {len(t.required)} kinds, scenario defines {scenario.n_kinds}")
        if not capability_satisfies(caps, t.required):
            raise ScenarioError(f"task {t.id} requirement {list(t.required)} cannot be met by the team")
        if not reach[cell[1], cell[0]]:
            raise ScenarioError(f"task {t.id} cannot be reached from the start area")
        if t.phase is not TaskPhase.UNDISCOVERED:
            raise ScenarioError(f"task {t.id} must start undiscovered")

    for f in scenario.failures:
        if f.robot not in team:
            raise ScenarioError(f"failure names unknown robot {f.robot}")
        if not 2 <= f.level <= scenario.n_ranks:
            raise ScenarioError(f"failure level {f.level} outside [2, {scenario.n_ranks}]")
        if f.time < 0:
            raise ScenarioError(f"failure time {f.time} is negative")
    if len({f.robot for f in scenario.failures}) != len(scenario.failures):
        raise ScenarioError("at most one failure per robot")
