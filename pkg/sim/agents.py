"""Per-robot simulation state: true kinematics, local map ledger and belief store."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from belief.particles import BeliefStore
from domain.types import Point, RobotSpec, Task
from gridworld.dynamics import KinematicState
from gridworld.occupancy import MapParams, OccupancyGrid, bayes_update
from gridworld.planning import line_of_sight, open_cell, plan_path


class MapLedger:
    """A robot's map as the prior plus one log-odds contribution per sensing robot.

    Each contribution is the owner's own clamped Bayes map and carries a
    version; peers keep whichever copy is newer, so merging is idempotent and
    order independent.
    """

    def __init__(self, owner: int, prior: OccupancyGrid, params: MapParams):
        self.owner = owner
        self.prior = prior
        self.params = params
        self.sources: Dict[int, np.ndarray] = {owner: np.zeros_like(prior.log_odds)}
        self.versions: Dict[int, int] = {owner: 0}
        self._grid: Optional[OccupancyGrid] = None

    @property
    def version(self) -> int:
        return self.versions[self.owner]

    @property
    def contribution(self) -> np.ndarray:
        return self.sources[self.owner]

    def record(self, pose: Sequence[float], readings, sense_radius: float):
        readings = list(readings)
        if not readings:
            return
        own = self.prior.with_log_odds(self.sources[self.owner])
        origin = own.cell_center(own.clamp_cell(own.world_to_cell(pose)))
        self.sources[self.owner] = bayes_update(own, origin, readings, self.params, sense_radius).log_odds
        self.versions[self.owner] += 1
        self._grid = None

    def absorb(self, other: "MapLedger") -> bool:
        changed = False
        for j in sorted(other.versions):
            if other.versions[j] > self.versions.get(j, -1):
                self.sources[j] = other.sources[j]
                self.versions[j] = other.versions[j]
                changed = True
        if changed:
            self._grid = None
        return changed

    def grid(self) -> OccupancyGrid:
        if self._grid is None:
            self._grid = combine(self.prior, [self.sources[j] for j in sorted(self.sources)], self.params)
        return self._grid


def combine(prior: OccupancyGrid, contributions, params: MapParams) -> OccupancyGrid:
    arr = prior.log_odds.copy()
    for c in contributions:
        arr += c
    np.clip(arr, -params.l_max, params.l_max, out=arr)
    return prior.with_log_odds(arr)


class TrackingMode(Enum):
    FOLLOW = "follow"    # ride the robot's own empathy particle
    DIRECT = "direct"    # navigate on the robot's own map: gossip chase or holding at a task


@dataclass
class RobotAgent:
    spec: RobotSpec
    state: KinematicState
    ledger: MapLedger
    store: BeliefStore
    rng: np.random.Generator
    base: Point
    level: int = 1
    tracked: int = 1
    mode: TrackingMode = TrackingMode.FOLLOW
    chase_target: Optional[int] = None
    hold_task: Optional[int] = None
    hold_since: int = 0
    known_tasks: Dict[int, Task] = field(default_factory=dict)
    trigger: bool = False
    exhausted: Set[int] = field(default_factory=set)
    last_component: Optional[frozenset] = None
    last_sync: int = 0
    last_goal: Optional[int] = None
    rendezvous: Optional[Point] = None
    readings: Tuple = ()
    distance: float = 0.0

    @property
    def id(self) -> int:
        return self.spec.id

    @property
    def position(self) -> Point:
        return self.state.position

    def open_tasks(self) -> Dict[int, Task]:
        return {tid: t for tid, t in sorted(self.known_tasks.items()) if t.open}


def next_waypoint(grid: OccupancyGrid, position: Point, goal: Point, params: MapParams) -> Point:
    """`goal` when the straight line is clear on `grid`, else the next corner of an A* detour."""
    start = grid.clamp_cell(grid.world_to_cell(position))
    target = grid.clamp_cell(grid.world_to_cell(goal))
    states = grid.classify(params)
    if start == target or line_of_sight(grid, start, target, params, states):
        return goal
    a = open_cell(grid, start, params, states)
    b = open_cell(grid, target, params, states)
    if a is None or b is None:
        return goal
    cells = plan_path(grid, a, b, params)
    if not cells or len(cells) < 2:
        return goal
    return grid.cell_center(cells[1])
