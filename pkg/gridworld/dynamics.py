"""Robot kinematics and the potential-field path follower."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from domain.types import ContractViolation, Point
from gridworld.occupancy import (
    DEFAULT_MAP_PARAMS, CellState, MapParams, OccupancyGrid, disc_cells, line_cells,
)


@dataclass(frozen=True)
class KinematicState:
    position: Point
    heading: float = 0.0
    speed_cap: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


@dataclass(frozen=True)
class ControlGains:
    k_attract: float = 10.0
    k_repulse: float = 0.05
    influence_radius: float = 0.6
    max_repulsion: float = 1.0

    def __post_init__(self):
        if self.k_attract <= 0 or self.k_repulse < 0 or self.influence_radius <= 0:
            raise ContractViolation(f"control gains must be positive, got {self}")

    @classmethod
    def from_config(cls, config: dict) -> "ControlGains":
        control = config.get('control', {})
        return cls(**{k: control[k] for k in cls.__dataclass_fields__ if k in control})


def clamp_magnitude(vector: np.ndarray, cap: float) -> np.ndarray:
    norm = float(np.hypot(vector[0], vector[1]))
    if norm > cap > 0:
        return vector * (cap / norm)
    if cap <= 0:
        return np.zeros(2)
    return vector


def apf_step(pose: Sequence[float], waypoint: Sequence[float], obstacles: Iterable[Sequence[float]],
             gains: ControlGains, speed_cap: float) -> np.ndarray:
    """Attractive pull toward the waypoint plus repulsion from obstacles within d0."""
    p = np.array(pose[:2], dtype=np.float64)
    w = np.array(waypoint[:2], dtype=np.float64)
    attract = gains.k_attract * (w - p)
    command = attract.copy()
    d0 = gains.influence_radius
    for obstacle in obstacles:
        away = p - np.array(obstacle[:2], dtype=np.float64)
        d = float(np.hypot(away[0], away[1]))
        if d >= d0:
            continue
        if d < 1e-9:
            # coincident: push against the attraction, or +x when there is none
            norm = float(np.hypot(attract[0], attract[1]))
            direction = -attract / norm if norm > 1e-12 else np.array([1.0, 0.0])
            command += gains.max_repulsion * direction
            continue
        magnitude = min(gains.k_repulse * (1.0 / d - 1.0 / d0) / (d * d), gains.max_repulsion)
        command += magnitude * away / d
    return clamp_magnitude(command, speed_cap)


def nearby_obstacles(grid: OccupancyGrid, position: Sequence[float], radius: float,
                     params: MapParams = DEFAULT_MAP_PARAMS) -> List[Point]:
    """Centres of occupied cells within `radius` of `position`."""
    states = grid.classify(params)
    return [grid.cell_center(c) for c in disc_cells(grid, position, radius + grid.resolution)
            if states[c[1], c[0]] == CellState.OCCUPIED]


def step_dynamics(state: KinematicState, control: Sequence[float], noise_std: float, dt: float,
                  rng: np.random.Generator, truth: Optional[OccupancyGrid] = None,
                  params: MapParams = DEFAULT_MAP_PARAMS,
                  ignore_obstacles: bool = False) -> Tuple[KinematicState, bool]:
    """Integrate one tick; returns the new state and whether the move was rejected.

    Noise is zero-mean Gaussian with std noise_std * sqrt(dt) per axis. The
    result is clamped to the workspace of `truth`; moves whose swept cells hit
    an occupied truth cell leave the position unchanged.
    """
    if dt <= 0:
        raise ContractViolation(f"dt must be positive, got {dt}")
    u = np.array(control[:2], dtype=np.float64)
    speed = float(np.hypot(u[0], u[1]))
    if speed > state.speed_cap + 1e-9:
        raise ContractViolation(f"control magnitude {speed:.4f} exceeds speed cap {state.speed_cap:.4f}")

    position = np.array(state.position) + u * dt
    if noise_std > 0:
        position = position + rng.normal(0.0, noise_std * math.sqrt(dt), size=2)
    heading = math.atan2(u[1], u[0]) if speed > 0 else state.heading

    if truth is not None:
        xmin, ymin, xmax, ymax = truth.bounds
        eps = 1e-9
        position = np.array([min(max(position[0], xmin), xmax - eps),
                             min(max(position[1], ymin), ymax - eps)])
        if not ignore_obstacles:
            states = truth.classify(params)
            start = truth.world_to_cell(state.position)
            end = truth.world_to_cell(position)
            for ix, iy in line_cells(start, end)[1:]:
                if truth.in_bounds((ix, iy)) and states[iy, ix] == CellState.OCCUPIED:
                    return replace(state, heading=heading), True

    return replace(state, position=(float(position[0]), float(position[1])), heading=heading), False
