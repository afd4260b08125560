"""Weighted frontier tessellation, frontier utility, goal choice and meeting place."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from domain.types import ContractViolation, Point
from gridworld.occupancy import DEFAULT_MAP_PARAMS, CellState, FrontierSet, MapParams, OccupancyGrid
from gridworld.planning import nearest_cell, open_cell, travel_costs

logger = logging.getLogger('episim.coverage')

DEFAULT_PENALTY = 100.0


@dataclass(frozen=True)
class FrontierPartition:
    regions: Mapping[int, frozenset]
    generators: Mapping[int, Point]
    weights: Mapping[int, float]

    def region_of(self, cell: int) -> Optional[int]:
        for robot, region in self.regions.items():
            if cell in region:
                return robot
        return None


def partition_frontiers(frontiers: FrontierSet, generators: Mapping[int, Sequence[float]],
                        weights: Mapping[int, float], grid: OccupancyGrid) -> FrontierPartition:
    """Assign every frontier cell to the generator minimising weight * distance.

    Ties go to the lower robot id.
    """
    if not generators:
        raise ContractViolation("partition needs at least one generator")
    ids = sorted(generators)
    if any(weights[j] <= 0 for j in ids):
        raise ContractViolation(f"partition weights must be positive, got {dict(weights)}")
    gens = {j: (float(generators[j][0]), float(generators[j][1])) for j in ids}
    wts = {j: float(weights[j]) for j in ids}
    cells = np.array(sorted(frontiers), dtype=np.int64)
    if cells.size == 0:
        return FrontierPartition({j: frozenset() for j in ids}, gens, wts)

    centers = grid.centers()[cells]
    points = np.array([gens[j] for j in ids])
    w = np.array([wts[j] for j in ids])
    dist = np.hypot(centers[:, None, 0] - points[None, :, 0], centers[:, None, 1] - points[None, :, 1])
    owner = np.argmin(dist * w[None, :], axis=1)
    regions = {j: frozenset(int(c) for c in cells[owner == k]) for k, j in enumerate(ids)}
    return FrontierPartition(regions, gens, wts)


def _costs_from(grid: OccupancyGrid, point: Sequence[float], params: MapParams) -> np.ndarray:
    start = open_cell(grid, grid.clamp_cell(grid.world_to_cell(point)), params)
    if start is None:
        return np.full((grid.height, grid.width), np.inf)
    return travel_costs(grid, start, params)


def frontier_utility(cell: int, generator: Sequence[float], in_region: bool, grid: OccupancyGrid,
                     speed: float, penalty: float = DEFAULT_PENALTY,
                     params: MapParams = DEFAULT_MAP_PARAMS,
                     costs: Optional[np.ndarray] = None) -> float:
    """Believed travel time from the generator to `cell`, plus the penalty when out of region.

    Falls back to the straight-line distance when the planner finds no route.
    """
    if speed <= 0:
        raise ContractViolation(f"speed must be positive, got {speed}")
    if costs is None:
        costs = _costs_from(grid, generator, params)
    d = float(costs.ravel()[cell])
    if math.isinf(d):
        d = math.dist(grid.cell_center(grid.cell_of(cell)), generator[:2])
    return d / speed + (0.0 if in_region else penalty)


def goal_utilities(frontiers: FrontierSet, partition: FrontierPartition, subject: int,
                   grid: OccupancyGrid, position: Sequence[float], speed: float,
                   penalty: float = DEFAULT_PENALTY, params: MapParams = DEFAULT_MAP_PARAMS,
                   costs: Optional[np.ndarray] = None,
                   reachable_only: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """(cells, utilities) for every frontier cell, cells ascending."""
    if speed <= 0:
        raise ContractViolation(f"speed must be positive, got {speed}")
    cells = np.array(sorted(frontiers), dtype=np.int64)
    if cells.size == 0:
        return cells, np.zeros(0)
    if costs is None:
        costs = _costs_from(grid, position, params)
    d = costs.ravel()[cells].astype(np.float64)
    unreachable = np.isinf(d)
    if reachable_only:
        cells, d = cells[~unreachable], d[~unreachable]
    elif unreachable.any():
        centers = grid.centers()[cells[unreachable]]
        d[unreachable] = np.hypot(centers[:, 0] - position[0], centers[:, 1] - position[1])
    region = partition.regions.get(subject, frozenset())
    outside = np.array([int(c) not in region for c in cells], dtype=bool)
    return cells, d / speed + penalty * outside


def select_goal(frontiers: FrontierSet, partition: FrontierPartition, subject: int,
                grid: OccupancyGrid, position: Sequence[float], speed: float,
                penalty: float = DEFAULT_PENALTY, params: MapParams = DEFAULT_MAP_PARAMS,
                costs: Optional[np.ndarray] = None,
                reachable_only: bool = False) -> Optional[int]:
    """Frontier cell index with the least utility for `subject`; None when nothing is left."""
    best = best_goal(frontiers, partition, subject, grid, position, speed, penalty, params,
                     costs, reachable_only)
    return None if best is None else best[0]


def best_goal(frontiers: FrontierSet, partition: FrontierPartition, subject: int,
              grid: OccupancyGrid, position: Sequence[float], speed: float,
              penalty: float = DEFAULT_PENALTY, params: MapParams = DEFAULT_MAP_PARAMS,
              costs: Optional[np.ndarray] = None,
              reachable_only: bool = False) -> Optional[Tuple[int, float]]:
    cells, utilities = goal_utilities(frontiers, partition, subject, grid, position, speed,
                                      penalty, params, costs, reachable_only)
    if cells.size == 0:
        return None
    k = int(np.argmin(utilities))  # first minimum: lowest cell index
    return int(cells[k]), float(utilities[k])


def meeting_point(poses: Iterable[Sequence[float]], grid: Optional[OccupancyGrid] = None,
                  params: MapParams = DEFAULT_MAP_PARAMS) -> Point:
    """Mean of the common poses, snapped to the nearest free cell centre.

    With a grid the snapped cell must also be reachable over free cells from
    the lowest pose; without one the raw mean is returned.
    """
    pts = np.array(sorted(tuple(map(float, p[:2])) for p in poses), dtype=np.float64)
    if pts.size == 0:
        raise ContractViolation("meeting point needs at least one pose")
    mean = (float(pts[:, 0].mean()), float(pts[:, 1].mean()))
    if grid is None:
        return mean
    routes = grid.known_free(params)
    states = routes.classify(params)
    start = nearest_cell(routes, grid.world_to_cell(pts[0]), (CellState.FREE,), params, states)
    if start is None:
        logger.debug("no free cell to snap meeting point %s", mean)
        return mean
    costs = travel_costs(routes, start, params)
    reachable = np.where(np.isfinite(costs), CellState.FREE, CellState.OCCUPIED).astype(np.int8)
    target = nearest_cell(routes, grid.world_to_cell(mean), (CellState.FREE,), params, reachable)
    return grid.cell_center(target if target is not None else start)
