from .particles import (
    Stamp, SYNC, FORK, BeliefError, BeliefParams, PlanItem, Particle, BeliefContext, BeliefStore,
    check_speed_factors, seed_context, init_store, advance_context, propagate, select_tracked,
    advance_belief_rank, snap_to_truth, merge_knowledge, fork_context, reachable_frontiers,
)
