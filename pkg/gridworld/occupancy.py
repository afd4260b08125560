"""Log-odds occupancy grids: classification, Bayesian updates, frontiers and sensing."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from domain.types import ContractViolation, Point

logger = logging.getLogger('episim.gridworld')

Cell = Tuple[int, int]

# (truth digest, cell, radius) -> readings; truth grids never change during a run
sense_cache: Dict[tuple, Tuple[Tuple[Cell, bool], ...]] = {}


class CellState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2


@dataclass(frozen=True)
class MapParams:
    p_hit: float = 0.7
    p_miss: float = 0.3
    l_max: float = 10.0
    free_threshold: float = -0.5
    occupied_threshold: float = 0.5
    unknown_cost: float = 3.0

    @classmethod
    def from_config(cls, config: dict) -> "MapParams":
        mapping = config.get('mapping', {})
        return cls(**{k: mapping[k] for k in cls.__dataclass_fields__ if k in mapping})

    @property
    def hit_increment(self) -> float:
        return math.log(self.p_hit / (1.0 - self.p_hit))

    @property
    def miss_increment(self) -> float:
        return math.log(self.p_miss / (1.0 - self.p_miss))


DEFAULT_MAP_PARAMS = MapParams()


class OccupancyGrid:
    """Immutable grid of per-cell log-odds.

    Cells are addressed as (ix, iy); the flat index is iy * width + ix and the
    backing array is indexed [iy, ix].
    """

    def __init__(self, width: int, height: int, resolution: float = 1.0,
                 origin: Point = (0.0, 0.0), log_odds: Optional[np.ndarray] = None):
        if width <= 0 or height <= 0:
            raise ContractViolation(f"grid must have positive size, got {width}x{height}")
        if resolution <= 0:
            raise ContractViolation(f"resolution must be positive, got {resolution}")
        self.width = int(width)
        self.height = int(height)
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        if log_odds is None:
            log_odds = np.zeros((self.height, self.width), dtype=np.float64)
        else:
            log_odds = np.array(log_odds, dtype=np.float64)
            if log_odds.shape != (self.height, self.width):
                raise ContractViolation(
                    f"log-odds shape {log_odds.shape} does not match {self.height}x{self.width}")
        log_odds.setflags(write=False)
        self.log_odds = log_odds
        self._digest: Optional[str] = None

    # ── construction ────────────────────────────────────────────────────────

    @classmethod
    def from_cells(cls, width: int, height: int, resolution: float = 1.0,
                   origin: Point = (0.0, 0.0), occupied: Iterable[Cell] = (),
                   free: Iterable[Cell] = (), all_free: bool = False,
                   params: MapParams = DEFAULT_MAP_PARAMS) -> "OccupancyGrid":
        arr = np.full((height, width), -params.l_max if all_free else 0.0)
        for ix, iy in free:
            arr[iy, ix] = -params.l_max
        for ix, iy in occupied:
            arr[iy, ix] = params.l_max
        return cls(width, height, resolution, origin, arr)

    @classmethod
    def from_ascii(cls, text: str, resolution: float = 1.0, origin: Point = (0.0, 0.0),
                   params: MapParams = DEFAULT_MAP_PARAMS) -> "OccupancyGrid":
        """Parse '.', '#' and '?' rows; the first line is row iy = 0."""
        lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
        if not lines:
            raise ContractViolation("empty map text")
        width = len(lines[0])
        if any(len(line) != width for line in lines):
            raise ContractViolation("map rows have different lengths")
        values = {'.': -params.l_max, '#': params.l_max, '?': 0.0}
        try:
            arr = np.array([[values[ch] for ch in line] for line in lines], dtype=np.float64)
        except KeyError as e:
            raise ContractViolation(f"unexpected map character {e}") from e
        return cls(width, len(lines), resolution, origin, arr)

    def with_log_odds(self, log_odds: np.ndarray) -> "OccupancyGrid":
        return OccupancyGrid(self.width, self.height, self.resolution, self.origin, log_odds)

    def blank(self) -> "OccupancyGrid":
        """All-unknown grid with the same geometry."""
        return OccupancyGrid(self.width, self.height, self.resolution, self.origin)

    def known_free(self, params: MapParams = DEFAULT_MAP_PARAMS) -> "OccupancyGrid":
        """Free cells stay free; unknown and occupied cells both become occupied."""
        free = self.classify(params) == CellState.FREE
        return self.with_log_odds(np.where(free, -params.l_max, params.l_max))

    # ── geometry ────────────────────────────────────────────────────────────

    @property
    def size(self) -> int:
        return self.width * self.height

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        ox, oy = self.origin
        return ox, oy, ox + self.width * self.resolution, oy + self.height * self.resolution

    def index(self, cell: Cell) -> int:
        return cell[1] * self.width + cell[0]

    def cell_of(self, index: int) -> Cell:
        return int(index % self.width), int(index // self.width)

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    def world_to_cell(self, point: Sequence[float]) -> Cell:
        return (int(math.floor((point[0] - self.origin[0]) / self.resolution)),
                int(math.floor((point[1] - self.origin[1]) / self.resolution)))

    def clamp_cell(self, cell: Cell) -> Cell:
        return (min(max(cell[0], 0), self.width - 1), min(max(cell[1], 0), self.height - 1))

    def cell_center(self, cell: Cell) -> Point:
        return (self.origin[0] + (cell[0] + 0.5) * self.resolution,
                self.origin[1] + (cell[1] + 0.5) * self.resolution)

    def centers(self) -> np.ndarray:
        """(size, 2) array of cell centres in flat-index order."""
        iy, ix = np.divmod(np.arange(self.size), self.width)
        return np.column_stack([self.origin[0] + (ix + 0.5) * self.resolution,
                                self.origin[1] + (iy + 0.5) * self.resolution])

    # ── classification ──────────────────────────────────────────────────────

    def classify(self, params: MapParams = DEFAULT_MAP_PARAMS) -> np.ndarray:
        states = np.full(self.log_odds.shape, CellState.UNKNOWN, dtype=np.int8)
        states[self.log_odds < params.free_threshold] = CellState.FREE
        states[self.log_odds > params.occupied_threshold] = CellState.OCCUPIED
        return states

    def state(self, cell: Cell, params: MapParams = DEFAULT_MAP_PARAMS) -> CellState:
        if not self.in_bounds(cell):
            raise ContractViolation(f"cell {cell} outside {self.width}x{self.height} grid")
        value = self.log_odds[cell[1], cell[0]]
        if value < params.free_threshold:
            return CellState.FREE
        if value > params.occupied_threshold:
            return CellState.OCCUPIED
        return CellState.UNKNOWN

    def is_occupied(self, cell: Cell, params: MapParams = DEFAULT_MAP_PARAMS) -> bool:
        return self.state(cell, params) is CellState.OCCUPIED

    def occupied_cells(self, params: MapParams = DEFAULT_MAP_PARAMS) -> List[Cell]:
        iy, ix = np.nonzero(self.classify(params) == CellState.OCCUPIED)
        return [(int(x), int(y)) for x, y in zip(ix, iy)]

    def known_fraction(self, params: MapParams = DEFAULT_MAP_PARAMS) -> float:
        return float(np.count_nonzero(self.classify(params) != CellState.UNKNOWN)) / self.size

    @property
    def digest(self) -> str:
        if self._digest is None:
            sha1 = hashlib.sha1()
            sha1.update(f"{self.width}x{self.height}@{self.resolution}:{self.origin}".encode())
            sha1.update(self.log_odds.tobytes())
            self._digest = sha1.hexdigest()
        return self._digest

    def to_ascii(self, params: MapParams = DEFAULT_MAP_PARAMS,
                 overlay: Optional[Dict[Cell, str]] = None) -> str:
        chars = np.array(['?', '.', '#'])[self.classify(params)]
        rows = [list(row) for row in chars]
        for (ix, iy), ch in (overlay or {}).items():
            if self.in_bounds((ix, iy)):
                rows[iy][ix] = ch
        return "\n".join("".join(row) for row in rows)

    def __eq__(self, other) -> bool:
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.digest == other.digest

    def __hash__(self) -> int:
        return hash(self.digest)

    def __repr__(self) -> str:
        return f"OccupancyGrid({self.width}x{self.height}, res={self.resolution}, digest={self.digest[:8]})"


@dataclass(frozen=True)
class FrontierSet:
    """Free cells with at least one unknown 4-neighbour, as flat indices."""
    cells: frozenset
    width: int

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.cells))

    def __contains__(self, index) -> bool:
        return index in self.cells

    def as_cells(self) -> List[Cell]:
        return [(i % self.width, i // self.width) for i in sorted(self.cells)]


def bayes_update(grid: OccupancyGrid, pose: Sequence[float],
                 readings: Iterable[Tuple[Cell, bool]],
                 params: MapParams = DEFAULT_MAP_PARAMS,
                 sense_radius: Optional[float] = None) -> OccupancyGrid:
    """Add hit/miss log-odds increments for each reading and clamp to +-l_max.

    `pose` and `sense_radius` only serve the range check: a reading whose cell
    centre lies farther than the radius (plus half a cell diagonal) is a
    contract violation, as is any cell outside the grid.
    """
    readings = list(readings)
    if not readings:
        return grid
    slack = grid.resolution * math.sqrt(0.5)
    rows, cols, deltas = [], [], []
    for cell, hit in readings:
        if not grid.in_bounds(cell):
            raise ContractViolation(f"reading for cell {cell} outside {grid.width}x{grid.height} grid")
        if sense_radius is not None:
            cx, cy = grid.cell_center(cell)
            if math.hypot(cx - pose[0], cy - pose[1]) > sense_radius + slack:
                raise ContractViolation(f"reading for cell {cell} beyond sense radius {sense_radius}")
        rows.append(cell[1])
        cols.append(cell[0])
        deltas.append(params.hit_increment if hit else params.miss_increment)
    arr = grid.log_odds.copy()
    np.add.at(arr, (np.array(rows), np.array(cols)), np.array(deltas))
    np.clip(arr, -params.l_max, params.l_max, out=arr)
    return grid.with_log_odds(arr)


def extract_frontiers(grid: OccupancyGrid, params: MapParams = DEFAULT_MAP_PARAMS) -> FrontierSet:
    states = grid.classify(params)
    unknown = np.pad(states == CellState.UNKNOWN, 1, constant_values=False)
    near_unknown = unknown[:-2, 1:-1] | unknown[2:, 1:-1] | unknown[1:-1, :-2] | unknown[1:-1, 2:]
    mask = (states == CellState.FREE) & near_unknown
    return FrontierSet(frozenset(int(i) for i in np.flatnonzero(mask)), grid.width)


def line_cells(a: Cell, b: Cell) -> List[Cell]:
    """Bresenham cells from a to b inclusive."""
    x0, y0 = a
    x1, y1 = b
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    cells = []
    while True:
        cells.append((x0, y0))
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy
    return cells


def disc_cells(grid: OccupancyGrid, center: Sequence[float], radius: float) -> List[Cell]:
    """In-bounds cells whose centre lies within `radius` of `center`, in index order."""
    lo = grid.clamp_cell(grid.world_to_cell((center[0] - radius, center[1] - radius)))
    hi = grid.clamp_cell(grid.world_to_cell((center[0] + radius, center[1] + radius)))
    cells = []
    for iy in range(lo[1], hi[1] + 1):
        for ix in range(lo[0], hi[0] + 1):
            cx, cy = grid.cell_center((ix, iy))
            if (cx - center[0]) ** 2 + (cy - center[1]) ** 2 <= radius * radius:
                cells.append((ix, iy))
    return cells


def sense(truth: OccupancyGrid, pose: Sequence[float], sense_radius: float,
          params: MapParams = DEFAULT_MAP_PARAMS) -> Tuple[Tuple[Cell, bool], ...]:
    """Disc range sensor with grid ray casting from the centre of the robot's cell.

    A cell is read when no occupied cell lies strictly between it and the
    robot; occupied cells report a hit, the rest a miss.
    """
    origin = truth.clamp_cell(truth.world_to_cell(pose))
    key = (truth.digest, origin, round(sense_radius, 6))
    cached = sense_cache.get(key)
    if cached is not None:
        return cached

    occupied = truth.classify(params) == CellState.OCCUPIED
    readings = []
    for cell in disc_cells(truth, truth.cell_center(origin), sense_radius):
        ray = line_cells(origin, cell)
        if any(occupied[iy, ix] for ix, iy in ray[:-1]):
            continue
        readings.append((cell, bool(occupied[cell[1], cell[0]])))
    result = tuple(readings)
    if len(sense_cache) > 50000:
        sense_cache.clear()
    sense_cache[key] = result
    return result


def mark_covered(grid: OccupancyGrid, centers: Iterable[Sequence[float]], radius: float,
                 params: MapParams = DEFAULT_MAP_PARAMS) -> OccupancyGrid:
    """Believed coverage: unknown cells inside each disc become free."""
    free_value = min(params.miss_increment, params.free_threshold - 0.01)
    states = None
    arr = None
    for center in centers:
        for ix, iy in disc_cells(grid, center, radius):
            if states is None:
                states = grid.classify(params)
            if states[iy, ix] == CellState.UNKNOWN:
                if arr is None:
                    arr = grid.log_odds.copy()
                arr[iy, ix] = free_value
    if arr is None:
        return grid
    return grid.with_log_odds(arr)
