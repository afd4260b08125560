from .frontier_partition import (
    DEFAULT_PENALTY, FrontierPartition, partition_frontiers, frontier_utility,
    goal_utilities, select_goal, best_goal, meeting_point,
)
