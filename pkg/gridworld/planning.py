"""Grid path planning: 8-connected A*, string pulling and Dijkstra distance fields."""

from __future__ import annotations

import heapq
import logging
import math
from collections import OrderedDict
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from domain.types import ContractViolation
from gridworld.occupancy import (
    DEFAULT_MAP_PARAMS, Cell, CellState, MapParams, OccupancyGrid, line_cells,
)

logger = logging.getLogger('episim.gridworld')

SQRT2 = math.sqrt(2.0)
MOVES = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]

# digest -> sparse adjacency; bounded LRU, maps change every tick
graph_cache: "OrderedDict[tuple, object]" = OrderedDict()
GRAPH_CACHE_SIZE = 64


def _cost_factors(states: np.ndarray, params: MapParams) -> np.ndarray:
    factors = np.ones(states.shape, dtype=np.float64)
    factors[states == CellState.UNKNOWN] = params.unknown_cost
    factors[states == CellState.OCCUPIED] = np.inf
    return factors


def step_cost(grid: OccupancyGrid, factors: np.ndarray, a: Cell, b: Cell) -> float:
    """Symmetric move cost: length times the mean of both cells' factors."""
    length = SQRT2 if a[0] != b[0] and a[1] != b[1] else 1.0
    return length * grid.resolution * 0.5 * (factors[a[1], a[0]] + factors[b[1], b[0]])


def _passable(states: np.ndarray, a: Cell, dx: int, dy: int) -> bool:
    """Diagonal moves may not cut an occupied corner."""
    if dx and dy:
        return (states[a[1], a[0] + dx] != CellState.OCCUPIED
                and states[a[1] + dy, a[0]] != CellState.OCCUPIED)
    return True


def line_of_sight(grid: OccupancyGrid, a: Cell, b: Cell,
                  params: MapParams = DEFAULT_MAP_PARAMS,
                  states: Optional[np.ndarray] = None) -> bool:
    """True when the Bresenham line a-b crosses no occupied cell or corner."""
    if states is None:
        states = grid.classify(params)
    cells = line_cells(a, b)
    prev = None
    for ix, iy in cells:
        if not grid.in_bounds((ix, iy)) or states[iy, ix] == CellState.OCCUPIED:
            return False
        if prev is not None and not _passable(states, prev, ix - prev[0], iy - prev[1]):
            return False
        prev = (ix, iy)
    return True


def string_pull(grid: OccupancyGrid, path: List[Cell],
                params: MapParams = DEFAULT_MAP_PARAMS,
                states: Optional[np.ndarray] = None) -> List[Cell]:
    """Drop intermediate cells reachable from the current anchor in a straight line."""
    if len(path) <= 2:
        return list(path)
    if states is None:
        states = grid.classify(params)
    pulled = [path[0]]
    anchor = 0
    while anchor < len(path) - 1:
        nxt = anchor + 1
        for j in range(len(path) - 1, anchor + 1, -1):
            if line_of_sight(grid, path[anchor], path[j], params, states):
                nxt = j
                break
        pulled.append(path[nxt])
        anchor = nxt
    return pulled


def plan_path(grid: OccupancyGrid, start: Cell, goal: Cell,
              params: MapParams = DEFAULT_MAP_PARAMS, smooth: bool = True) -> Optional[List[Cell]]:
    """A* from start to goal; None when the goal is occupied or unreachable.

    Unknown cells are traversable at `params.unknown_cost` times the free cost.
    Open-list ties are broken by the smaller flat cell index.
    """
    if not grid.in_bounds(start):
        raise ContractViolation(f"start {start} outside grid")
    states = grid.classify(params)
    if states[start[1], start[0]] == CellState.OCCUPIED:
        raise ContractViolation(f"start {start} is occupied")
    if not grid.in_bounds(goal) or states[goal[1], goal[0]] == CellState.OCCUPIED:
        return None
    if start == goal:
        return [start]

    factors = _cost_factors(states, params)
    res = grid.resolution

    def heuristic(cell: Cell) -> float:
        dx, dy = abs(cell[0] - goal[0]), abs(cell[1] - goal[1])
        return res * ((SQRT2 - 1.0) * min(dx, dy) + max(dx, dy))

    g = {start: 0.0}
    parent = {start: None}
    closed = set()
    queue = [(heuristic(start), grid.index(start), start)]
    while queue:
        _, _, current = heapq.heappop(queue)
        if current in closed:
            continue
        if current == goal:
            break
        closed.add(current)
        for dx, dy in MOVES:
            nxt = (current[0] + dx, current[1] + dy)
            if not grid.in_bounds(nxt) or nxt in closed:
                continue
            if states[nxt[1], nxt[0]] == CellState.OCCUPIED or not _passable(states, current, dx, dy):
                continue
            cost = g[current] + step_cost(grid, factors, current, nxt)
            if cost < g.get(nxt, math.inf) - 1e-12:
                g[nxt] = cost
                parent[nxt] = current
                heapq.heappush(queue, (cost + heuristic(nxt), grid.index(nxt), nxt))
    else:
        return None
    if goal not in parent:
        return None

    path = []
    node = goal
    while node is not None:
        path.append(node)
        node = parent[node]
    path.reverse()
    if smooth:
        path = string_pull(grid, path, params, states)
    return path


def path_cost(grid: OccupancyGrid, path: Sequence[Cell],
              params: MapParams = DEFAULT_MAP_PARAMS) -> float:
    """Cost of an 8-connected cell path under the planner's edge weights."""
    factors = _cost_factors(grid.classify(params), params)
    return float(sum(step_cost(grid, factors, a, b) for a, b in zip(path, path[1:])))


def path_length(grid: OccupancyGrid, path: Sequence[Cell]) -> float:
    """Euclidean length in metres through the cell centres."""
    return float(sum(math.dist(a, b) for a, b in zip(path, path[1:]))) * grid.resolution


def _adjacency(grid: OccupancyGrid, params: MapParams):
    key = (grid.digest, params)
    cached = graph_cache.get(key)
    if cached is not None:
        graph_cache.move_to_end(key)
        return cached

    states = grid.classify(params)
    factors = _cost_factors(states, params)
    h, w = states.shape
    idx = np.arange(h * w).reshape(h, w)
    rows, cols, weights = [], [], []
    blocked = states == CellState.OCCUPIED
    for dx, dy in ((1, 0), (0, 1), (1, 1), (-1, 1)):
        ys = slice(0, h - dy)
        xs = slice(max(0, -dx), w - max(0, dx))
        ys2 = slice(dy, h)
        xs2 = slice(max(0, dx), w - max(0, -dx) if dx < 0 else w)
        a_idx, b_idx = idx[ys, xs], idx[ys2, xs2]
        ok = ~blocked[ys, xs] & ~blocked[ys2, xs2]
        if dx and dy:
            # both orthogonal neighbours of the diagonal must be open
            ok &= ~blocked[ys, xs2] & ~blocked[ys2, xs]
        length = SQRT2 if dx and dy else 1.0
        cost = length * grid.resolution * 0.5 * (factors[ys, xs] + factors[ys2, xs2])
        rows.append(a_idx[ok])
        cols.append(b_idx[ok])
        weights.append(cost[ok])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weights = np.concatenate(weights)
    matrix = coo_matrix((np.concatenate([weights, weights]),
                         (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
                        shape=(h * w, h * w)).tocsr()
    graph_cache[key] = matrix
    if len(graph_cache) > GRAPH_CACHE_SIZE:
        graph_cache.popitem(last=False)
    return matrix


def travel_costs(grid: OccupancyGrid, start: Cell,
                 params: MapParams = DEFAULT_MAP_PARAMS) -> np.ndarray:
    """Planner cost from `start` to every cell, shaped (height, width); inf if unreachable."""
    if not grid.in_bounds(start):
        raise ContractViolation(f"start {start} outside grid")
    matrix = _adjacency(grid, params)
    dist = dijkstra(matrix, directed=False, indices=grid.index(start))
    return np.asarray(dist).reshape(grid.height, grid.width)


def nearest_cell(grid: OccupancyGrid, cell: Cell, wanted: Sequence[CellState],
                 params: MapParams = DEFAULT_MAP_PARAMS,
                 states: Optional[np.ndarray] = None) -> Optional[Cell]:
    """Breadth-first ring search for the closest cell in one of the `wanted` states.

    Rings are Chebyshev squares; within a ring the Euclidean-nearest cell wins,
    then the smaller flat index.
    """
    if states is None:
        states = grid.classify(params)
    cell = grid.clamp_cell(cell)
    wanted = set(int(s) for s in wanted)
    for r in range(max(grid.width, grid.height)):
        ring = []
        for iy in range(cell[1] - r, cell[1] + r + 1):
            for ix in range(cell[0] - r, cell[0] + r + 1):
                if max(abs(ix - cell[0]), abs(iy - cell[1])) != r or not grid.in_bounds((ix, iy)):
                    continue
                if int(states[iy, ix]) in wanted:
                    ring.append(((ix - cell[0]) ** 2 + (iy - cell[1]) ** 2, grid.index((ix, iy)), (ix, iy)))
        if ring:
            return min(ring)[2]
    return None


def open_cell(grid: OccupancyGrid, cell: Cell, params: MapParams = DEFAULT_MAP_PARAMS,
              states: Optional[np.ndarray] = None) -> Optional[Cell]:
    """`cell` itself when not occupied, else the nearest non-occupied cell."""
    return nearest_cell(grid, cell, (CellState.FREE, CellState.UNKNOWN), params, states)
