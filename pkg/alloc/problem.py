"""Allocation problem model: candidate tasks, participants, believed trajectories and travel times."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from domain.types import ContractViolation, Point
from gridworld.occupancy import DEFAULT_MAP_PARAMS, MapParams, OccupancyGrid
from gridworld.planning import open_cell, travel_costs

logger = logging.getLogger('episim.alloc')


class AllocationError(Exception):
    pass


@dataclass(frozen=True)
class AllocTask:
    """A candidate task; gossip tasks name the robot they seek and need any one robot."""
    id: int
    position: Point
    required: Tuple[int, ...] = ()
    duration: float = 0.0
    radius: float = 0.5
    gossip_target: Optional[int] = None
    gossip_rank: int = 1

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "required", tuple(int(r) for r in self.required))
        if self.duration < 0:
            raise ContractViolation(f"task {self.id}: negative duration")
        if self.gossip_target is None and sum(self.required) < 1:
            raise ContractViolation(f"task {self.id}: requires no robot")

    @property
    def is_gossip(self) -> bool:
        return self.gossip_target is not None


@dataclass(frozen=True)
class AllocRobot:
    id: int
    position: Point
    capability: frozenset
    speed: float

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "capability", frozenset(int(k) for k in self.capability))
        if self.speed <= 0:
            raise ContractViolation(f"robot {self.id}: believed speed must be positive")


@dataclass(frozen=True)
class Trajectory:
    """Believed motion of a particle: waypoints walked at constant speed, then a hold."""
    start: Point
    waypoints: Tuple[Point, ...] = ()
    speed: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        object.__setattr__(self, "waypoints", tuple((float(x), float(y)) for x, y in self.waypoints))

    def position_at(self, t: float) -> Point:
        if t <= 0 or self.speed <= 0 or not self.waypoints:
            return self.start
        remaining = self.speed * t
        x, y = self.start
        for tx, ty in self.waypoints:
            d = math.hypot(tx - x, ty - y)
            if d >= remaining:
                if d == 0:
                    return (tx, ty)
                return (x + (tx - x) * remaining / d, y + (ty - y) * remaining / d)
            remaining -= d
            x, y = tx, ty
        return (x, y)


@dataclass
class AllocProblem:
    tasks: Tuple[AllocTask, ...]
    robots: Tuple[AllocRobot, ...]
    connected: frozenset
    trajectories: Mapping[int, Trajectory] = field(default_factory=dict)
    grid: Optional[OccupancyGrid] = None
    map_params: MapParams = DEFAULT_MAP_PARAMS
    n_kinds: Optional[int] = None
    n_epochs: Optional[int] = None
    fixed_point_iterations: int = 5
    _fields: Dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.tasks = tuple(sorted(self.tasks, key=lambda t: t.id))
        self.robots = tuple(sorted(self.robots, key=lambda r: r.id))
        self.connected = frozenset(self.connected)
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ContractViolation(f"duplicate task ids {ids}")
        if not self.robots:
            raise ContractViolation("allocation needs at least one robot")
        if not self.connected or not self.connected <= set(self.robot_ids):
            raise ContractViolation(f"connected set {sorted(self.connected)} must be a non-empty subset of the team")
        if self.n_kinds is None:
            kinds = [k for r in self.robots for k in r.capability]
            kinds += [len(t.required) - 1 for t in self.tasks if t.required]
            self.n_kinds = max(kinds) + 1
        for t in self.tasks:
            if not t.is_gossip and len(t.required) != self.n_kinds:
                raise ContractViolation(f"task {t.id}: required has {len(t.required)} entries, expected {self.n_kinds}")
        if self.n_epochs is None:
            self.n_epochs = len(self.tasks)
        for j in self.disconnected:
            if j not in self.trajectories:
                robot = self.robot(j)
                self.trajectories = {**self.trajectories, j: Trajectory(robot.position)}

    # ── lookups ─────────────────────────────────────────────────────────────

    @property
    def robot_ids(self) -> List[int]:
        return [r.id for r in self.robots]

    @property
    def disconnected(self) -> List[int]:
        return [r.id for r in self.robots if r.id not in self.connected]

    @property
    def real_tasks(self) -> List[AllocTask]:
        return [t for t in self.tasks if not t.is_gossip]

    @property
    def gossip_tasks(self) -> List[AllocTask]:
        return [t for t in self.tasks if t.is_gossip]

    def robot(self, rid: int) -> AllocRobot:
        for r in self.robots:
            if r.id == rid:
                return r
        raise ContractViolation(f"unknown robot {rid}")

    def task(self, tid: int) -> AllocTask:
        for t in self.tasks:
            if t.id == tid:
                return t
        raise ContractViolation(f"unknown task {tid}")

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.n_epochs, len(self.robots), len(self.tasks)

    @property
    def chromosome_length(self) -> int:
        e, r, t = self.shape
        return e * r * t

    # ── travel ──────────────────────────────────────────────────────────────

    def _field(self, cell):
        costs = self._fields.get(cell)
        if costs is None:
            start = open_cell(self.grid, cell, self.map_params)
            if start is None:
                costs = np.full((self.grid.height, self.grid.width), np.inf)
            else:
                costs = travel_costs(self.grid, start, self.map_params)
            self._fields[cell] = costs
        return costs

    def distance(self, a: Sequence[float], b: Sequence[float]) -> float:
        """Planner distance between two points; straight line without a map, inf when cut off."""
        if self.grid is None:
            return math.dist(a[:2], b[:2])
        ca = self.grid.clamp_cell(self.grid.world_to_cell(a))
        cb = self.grid.clamp_cell(self.grid.world_to_cell(b))
        if ca == cb:
            return math.dist(a[:2], b[:2])
        if cb in self._fields and ca not in self._fields:
            ca, cb = cb, ca
        return float(self._field(ca)[cb[1], cb[0]])


def synthesize_gossip_tasks(robots: Sequence[AllocRobot], connected: Iterable[int],
                            trajectories: Mapping[int, Trajectory], first_id: int,
                            ranks: Optional[Mapping[int, int]] = None) -> List[AllocTask]:
    """One zero-duration gossip task per robot outside the connected set, seeking its believed particle."""
    connected = set(connected)
    tasks = []
    for robot in sorted(robots, key=lambda r: r.id):
        if robot.id in connected:
            continue
        trajectory = trajectories.get(robot.id, Trajectory(robot.position))
        tasks.append(AllocTask(first_id + len(tasks), trajectory.position_at(0.0), (), 0.0,
                               gossip_target=robot.id, gossip_rank=(ranks or {}).get(robot.id, 1)))
    return tasks


def arrival_time(problem: AllocProblem, robot: AllocRobot, position: Sequence[float], ready: float,
                 task: AllocTask) -> Tuple[float, Point]:
    """(arrival time, meeting point) for `robot` leaving `position` at `ready`.

    Gossip targets move; the meeting point is the target's believed position at
    the arrival time, found by a few rounds of estimate-and-reproject.
    """
    if not task.is_gossip:
        return ready + problem.distance(position, task.position) / robot.speed, task.position
    trajectory = problem.trajectories.get(task.gossip_target, Trajectory(task.position))
    target = trajectory.position_at(ready)
    t = ready + problem.distance(position, target) / robot.speed
    for _ in range(problem.fixed_point_iterations):
        if math.isinf(t):
            break
        target = trajectory.position_at(t)
        t = ready + problem.distance(position, target) / robot.speed
    return t, trajectory.position_at(t) if not math.isinf(t) else target


# ── persistence ──────────────────────────────────────────────────────────────

def problem_to_dict(problem: AllocProblem) -> dict:
    doc = {
        'tasks': [{'id': t.id, 'position': list(t.position), 'required': list(t.required),
                   'duration': t.duration, 'radius': t.radius, 'gossip_target': t.gossip_target,
                   'gossip_rank': t.gossip_rank} for t in problem.tasks],
        'robots': [{'id': r.id, 'position': list(r.position), 'capability': sorted(r.capability),
                    'speed': r.speed} for r in problem.robots],
        'connected': sorted(problem.connected),
        'trajectories': {str(j): {'start': list(tr.start), 'waypoints': [list(p) for p in tr.waypoints],
                                  'speed': tr.speed} for j, tr in sorted(problem.trajectories.items())},
        'n_kinds': problem.n_kinds,
        'n_epochs': problem.n_epochs,
        'fixed_point_iterations': problem.fixed_point_iterations,
    }
    if problem.grid is not None:
        doc['grid'] = {'ascii': problem.grid.to_ascii(problem.map_params).splitlines(),
                       'resolution': problem.grid.resolution, 'origin': list(problem.grid.origin)}
    return doc


def problem_from_dict(doc: dict, map_params: MapParams = DEFAULT_MAP_PARAMS) -> AllocProblem:
    grid = None
    if doc.get('grid'):
        g = doc['grid']
        grid = OccupancyGrid.from_ascii("\n".join(g['ascii']), g['resolution'], tuple(g['origin']), map_params)
    return AllocProblem(
        tasks=tuple(AllocTask(t['id'], tuple(t['position']), tuple(t['required']), t['duration'],
                              t.get('radius', 0.5), t.get('gossip_target'), t.get('gossip_rank', 1))
                    for t in doc['tasks']),
        robots=tuple(AllocRobot(r['id'], tuple(r['position']), frozenset(r['capability']), r['speed'])
                     for r in doc['robots']),
        connected=frozenset(doc['connected']),
        trajectories={int(j): Trajectory(tuple(tr['start']), tuple(tuple(p) for p in tr['waypoints']), tr['speed'])
                      for j, tr in doc.get('trajectories', {}).items()},
        grid=grid, map_params=map_params,
        n_kinds=doc.get('n_kinds'), n_epochs=doc.get('n_epochs'),
        fixed_point_iterations=doc.get('fixed_point_iterations', 5),
    )


def dump_problem(problem: AllocProblem, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(json.dumps(problem_to_dict(problem), indent=2), encoding="utf-8")
    logger.info("allocation problem written to %s", path)
    return path


def load_problem(path: Union[str, Path], map_params: MapParams = DEFAULT_MAP_PARAMS) -> AllocProblem:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise AllocationError(f"cannot read allocation problem {path}: {e}") from e
    return problem_from_dict(doc, map_params)
