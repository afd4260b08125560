"""Map export: ASCII text and plain (P2) portable graymap."""

import logging
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np

from gridworld.occupancy import DEFAULT_MAP_PARAMS, Cell, CellState, MapParams, OccupancyGrid

logger = logging.getLogger('episim.gridworld')

# grey levels: free white, unknown mid grey, occupied black
PGM_LEVELS = {CellState.FREE: 255, CellState.UNKNOWN: 128, CellState.OCCUPIED: 0}


def to_pgm(grid: OccupancyGrid, params: MapParams = DEFAULT_MAP_PARAMS,
           marks: Optional[Dict[Cell, int]] = None) -> str:
    """Render as plain PGM text; row iy = 0 comes first like the ASCII form."""
    states = grid.classify(params)
    pixels = np.zeros(states.shape, dtype=np.int64)
    for state, level in PGM_LEVELS.items():
        pixels[states == state] = level
    for (ix, iy), level in (marks or {}).items():
        if grid.in_bounds((ix, iy)):
            pixels[iy, ix] = level
    lines = ["P2", f"# resolution {grid.resolution} origin {grid.origin[0]} {grid.origin[1]}",
             f"{grid.width} {grid.height}", "255"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in pixels)
    return "\n".join(lines) + "\n"


def save_map(grid: OccupancyGrid, path: Union[str, Path], fmt: str = "ascii",
             params: MapParams = DEFAULT_MAP_PARAMS) -> Path:
    path = Path(path)
    if fmt == "ascii":
        text = grid.to_ascii(params) + "\n"
    elif fmt == "pgm":
        text = to_pgm(grid, params)
    else:
        raise ValueError(f"unknown map format: {fmt}")
    path.write_text(text, encoding="utf-8")
    logger.info("wrote %s map to %s", fmt, path)
    return path


def read_pgm(text: str, resolution: float = 1.0, params: MapParams = DEFAULT_MAP_PARAMS) -> OccupancyGrid:
    """Inverse of `to_pgm` for unmarked maps."""
    tokens = [t for line in text.splitlines() if not line.startswith("#") for t in line.split()]
    if not tokens or tokens[0] != "P2":
        raise ValueError("not a plain PGM (P2) document")
    width, height = int(tokens[1]), int(tokens[2])
    values = np.array([int(t) for t in tokens[4:4 + width * height]]).reshape(height, width)
    arr = np.zeros((height, width))
    arr[values >= 192] = -params.l_max
    arr[values < 64] = params.l_max
    return OccupancyGrid(width, height, resolution, log_odds=arr)
