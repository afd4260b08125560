from .occupancy import (
    CellState, MapParams, DEFAULT_MAP_PARAMS, OccupancyGrid, FrontierSet,
    bayes_update, extract_frontiers, line_cells, disc_cells, sense, mark_covered,
)
from .planning import (
    plan_path, path_cost, path_length, line_of_sight, string_pull, travel_costs,
    nearest_cell, open_cell,
)
from .dynamics import KinematicState, ControlGains, apf_step, step_dynamics, nearby_obstacles
from .export import to_pgm, read_pgm, save_map
