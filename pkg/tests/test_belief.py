"""
tests/test_belief.py

Belief and empathy particles: initialisation, propagation, rank bookkeeping
and the context hand-over that happens at every synchronisation.

Run:
    python -m pytest tests/test_belief.py -v
"""

import math
import unittest
from dataclasses import replace

from belief import (
    FORK, SYNC, BeliefError, BeliefParams, PlanItem, advance_belief_rank, advance_context,
    fork_context, init_store, merge_knowledge, propagate, reachable_frontiers, seed_context,
    select_tracked, snap_to_truth,
)
from domain.types import ContractViolation, Disposition, RobotSpec, Status, StatusKind
from gridworld import CellState, OccupancyGrid

PARAMS = BeliefParams()


def _spec(rid, speed=2.0, start=(0.5, 0.5), sense=1.0):
    return RobotSpec(rid, frozenset({0}), speed, sense, 5.0, start=start)


def _disposition(rid, x, y, status=None):
    return Disposition(rid, (x, y, 0.0), frozenset({0}), 0, status or Status.exploring())


def _row_context(plan=None, width=12, speed=2.0):
    grid = OccupancyGrid.from_cells(width, 1, all_free=True)
    team = {0: _spec(0, speed)}
    ctx = seed_context([_disposition(0, 0.5, 0.5)], (0, SYNC, 0), 0, grid, PARAMS,
                       bases={0: (0.5, 0.5)}, plan=plan)
    return ctx, team


class TestInitStore(unittest.TestCase):

    def setUp(self):
        self.specs = [_spec(0, start=(1.0, 1.0)), _spec(1, start=(2.0, 1.5))]

    def test_particle_and_common_counts(self):
        stores = init_store(self.specs, n_ranks=3, speed_factors=(1.0, 0.6, 0.2))
        self.assertEqual(sorted(stores), [0, 1])
        for store in stores.values():
            self.assertEqual(len(store.particles), 6)
            self.assertEqual(len(store.common), 2)

    def test_particles_start_at_start_poses(self):
        stores = init_store(self.specs)
        for store in stores.values():
            for p in store.particles:
                self.assertEqual(p.pose, self.specs[p.subject].start)
                self.assertEqual(p.status.kind, StatusKind.EXPLORING)

    def test_speed_factors_follow_rank(self):
        store = init_store(self.specs)[0]
        self.assertEqual([p.speed_factor for p in store.empathy()], [1.0, 0.6, 0.2])
        self.assertTrue(all(store.is_empathy(p) for p in store.empathy()))

    def test_stores_share_the_initial_context(self):
        stores = init_store(self.specs)
        self.assertEqual(stores[0].common, stores[1].common)
        self.assertEqual(stores[0].source, stores[1].source)

    def test_bad_speed_factors_raise(self):
        for factors in [(1.0, 0.6), (0.9, 0.6, 0.2), (1.0, 0.6, 0.6), (1.0, 0.2, 0.6)]:
            with self.assertRaises(BeliefError):
                init_store(self.specs, n_ranks=3, speed_factors=factors)


class TestAdvanceContext(unittest.TestCase):

    def test_particle_moves_at_believed_speed(self):
        plan = {0: (PlanItem(task=5, target=(10.5, 0.5), duration=1.0),)}
        ctx, team = _row_context(plan)
        after = advance_context(ctx, 1.0, team, PARAMS)
        self.assertAlmostEqual(after.particles[(0, 1)].pose[0], 2.5)
        self.assertAlmostEqual(after.particles[(0, 2)].pose[0], 0.5 + 1.2)
        self.assertAlmostEqual(after.particles[(0, 3)].pose[0], 0.5 + 0.4)
        self.assertEqual(after.particles[(0, 1)].status, Status.performing(5))
        self.assertEqual(after.tick, ctx.tick + 1)

    def test_rank_one_leads_after_two_steps(self):
        plan = {0: (PlanItem(task=5, target=(10.5, 0.5), duration=1.0),)}
        ctx, team = _row_context(plan)
        for _ in range(2):
            ctx = advance_context(ctx, 1.0, team, PARAMS)
        goal = (10.5, 0.5)
        d1 = math.dist(ctx.particles[(0, 1)].pose, goal)
        d2 = math.dist(ctx.particles[(0, 2)].pose, goal)
        self.assertLess(d1, d2)

    def test_dwell_then_next_plan_item(self):
        plan = {0: (PlanItem(task=1, target=(2.5, 0.5), duration=0.5),
                    PlanItem(task=2, target=(4.5, 0.5), duration=0.0))}
        ctx, team = _row_context(plan)
        ctx = advance_context(ctx, 1.0, team, PARAMS)  # arrives and dwells 1.0 >= 0.5
        p = ctx.particles[(0, 1)]
        self.assertEqual(p.step, 1)
        ctx = advance_context(ctx, 1.0, team, PARAMS)
        self.assertEqual(ctx.particles[(0, 1)].status, Status.performing(2))

    def test_gossip_item_sets_gossiping_status(self):
        plan = {0: (PlanItem(task=9, target=(6.5, 0.5), gossip_target=3, gossip_rank=2),)}
        ctx, team = _row_context(plan)
        after = advance_context(ctx, 0.1, team, PARAMS)
        self.assertEqual(after.particles[(0, 1)].status, Status.gossiping(3, 2))

    def test_unreachable_goal_holds_and_flags(self):
        grid = OccupancyGrid.from_ascii("""
            .....
            ..###
            ..#.#
            ..###
        """)
        plan = {0: (PlanItem(task=1, target=(3.5, 2.5), duration=1.0),)}
        ctx = seed_context([_disposition(0, 0.5, 0.5)], (0, SYNC, 0), 0, grid, PARAMS,
                           bases={0: (0.5, 0.5)}, plan=plan)
        after = advance_context(ctx, 1.0, {0: _spec(0)}, PARAMS)
        p = after.particles[(0, 1)]
        self.assertTrue(p.stalled)
        self.assertEqual(p.pose, (0.5, 0.5))
        self.assertEqual(p.step, 1)

    def test_exploration_grows_believed_coverage(self):
        rows = ["...???????"] * 10
        grid = OccupancyGrid.from_ascii("\n".join(rows))
        ctx = seed_context([_disposition(0, 1.5, 5.5)], (0, SYNC, 0), 0, grid, PARAMS,
                           bases={0: (1.5, 5.5)})
        team = {0: _spec(0, speed=2.0, sense=1.5)}
        before = ctx.grid.known_fraction()
        ctx = advance_context(ctx, 0.5, team, PARAMS)
        self.assertEqual(ctx.particles[(0, 1)].status.kind, StatusKind.EXPLORING)
        for _ in range(9):
            ctx = advance_context(ctx, 0.5, team, PARAMS)
        self.assertGreater(ctx.grid.known_fraction(), before)

    def test_smaller_coverage_disc_pushes_particles_closer_to_frontiers(self):
        grid = OccupancyGrid.from_ascii("." * 6 + "?" * 6)
        team = {0: _spec(0, speed=2.0, sense=4.0)}

        def farthest(params):
            ctx = seed_context([_disposition(0, 0.5, 0.5)], (0, SYNC, 0), 0, grid, params,
                               bases={0: (0.5, 0.5)})
            reached = 0.0
            for _ in range(10):
                ctx = advance_context(ctx, 0.5, team, params)
                reached = max(reached, ctx.particles[(0, 1)].pose[0])
            self.assertEqual(ctx.particles[(0, 1)].status, Status.meeting())
            return reached

        self.assertGreater(farthest(BeliefParams(coverage_scale=0.5)), farthest(BeliefParams(coverage_scale=1.0)))
        with self.assertRaises(BeliefError):
            BeliefParams(coverage_scale=0.0)

    def test_particles_route_over_known_free_cells(self):
        grid = OccupancyGrid.from_ascii("""
            ..?..
            ..?..
            .....
        """)
        plan = {0: (PlanItem(task=1, target=(4.5, 0.5), duration=5.0),)}
        ctx = seed_context([_disposition(0, 0.5, 0.5)], (0, SYNC, 0), 0, grid, PARAMS,
                           bases={0: (0.5, 0.5)}, plan=plan)
        team = {0: _spec(0)}
        poses = []
        for _ in range(40):
            ctx = advance_context(ctx, 0.1, team, PARAMS)
            poses.append(ctx.particles[(0, 1)].pose)
        self.assertTrue(all(grid.world_to_cell(p) not in {(2, 0), (2, 1)} for p in poses))
        self.assertGreater(max(y for _, y in poses), 2.0)
        self.assertAlmostEqual(math.dist(poses[-1], (4.5, 0.5)), 0.0)

    def test_frontiers_on_believed_cells_are_not_goals(self):
        grid = OccupancyGrid.from_ascii("...???")
        ctx = seed_context([_disposition(0, 0.5, 0.5)], (0, SYNC, 0), 0, grid, PARAMS, bases={0: (0.5, 0.5)})
        self.assertEqual(reachable_frontiers(ctx).cells, {2})
        ctx = replace(ctx, grid=OccupancyGrid.from_ascii("....??"))
        self.assertEqual(reachable_frontiers(ctx).cells, frozenset())
        after = advance_context(ctx, 0.1, {0: _spec(0)}, PARAMS)
        self.assertEqual(after.particles[(0, 1)].status, Status.meeting())

    def test_walled_off_frontiers_send_particles_to_meeting(self):
        grid = OccupancyGrid.from_ascii("""
            ..#..??
            ..#....
            #######
        """)
        ctx = seed_context([_disposition(0, 0.5, 0.5)], (0, SYNC, 0), 0, grid, PARAMS, bases={0: (0.5, 0.5)})
        self.assertGreater(len(reachable_frontiers(ctx)), 0)
        after = advance_context(ctx, 0.1, {0: _spec(0)}, PARAMS)
        self.assertEqual(after.particles[(0, 1)].status, Status.meeting())
        self.assertEqual(after.particles[(0, 1)].goal, (0.5, 0.5))

    def test_lower_ranks_share_the_common_goal(self):
        rows = ["...???????"] * 10
        grid = OccupancyGrid.from_ascii("\n".join(rows))
        ctx = seed_context([_disposition(0, 1.5, 5.5)], (0, SYNC, 0), 0, grid, PARAMS,
                           bases={0: (1.5, 5.5)})
        team = {0: _spec(0, speed=2.0, sense=1.5)}
        for _ in range(3):
            ctx = advance_context(ctx, 0.5, team, PARAMS)
            lead = ctx.particles[(0, 1)]
            self.assertEqual(lead.status.kind, StatusKind.EXPLORING)
            for b in (2, 3):
                p = ctx.particles[(0, b)]
                self.assertEqual((p.goal, p.goal_cell, p.utility), (lead.goal, lead.goal_cell, lead.utility))
        self.assertIsNotNone(lead.utility)

    def test_empty_frontier_sends_particles_to_meeting(self):
        grid = OccupancyGrid.from_cells(4, 4, all_free=True)
        ctx = seed_context([_disposition(0, 0.5, 0.5), _disposition(1, 3.5, 3.5)], (0, SYNC, 0), 0,
                           grid, PARAMS, bases={0: (0.5, 0.5), 1: (3.5, 3.5)})
        after = advance_context(ctx, 0.1, {0: _spec(0), 1: _spec(1)}, PARAMS)
        self.assertEqual(ctx.meeting, (2.5, 2.5))
        for p in after.particles.values():
            self.assertEqual(p.status, Status.meeting())
            self.assertEqual(p.goal, (2.5, 2.5))

    def test_returning_heads_for_base(self):
        grid = OccupancyGrid.from_cells(6, 1, all_free=True)
        ctx = seed_context([_disposition(0, 5.5, 0.5)], (0, SYNC, 0), 0, grid, PARAMS,
                           bases={0: (0.5, 0.5)}, returning=True)
        after = advance_context(ctx, 1.0, {0: _spec(0)}, PARAMS)
        p = after.particles[(0, 1)]
        self.assertEqual(p.status, Status.returning())
        self.assertAlmostEqual(p.pose[0], 3.5)

    def test_joint_flag_shares_the_leader_goal(self):
        rows = ["....??????"] * 6
        grid = OccupancyGrid.from_ascii("\n".join(rows))
        ctx = seed_context([_disposition(0, 0.5, 0.5), _disposition(1, 0.5, 5.5)], (0, SYNC, 0), 0,
                           grid, PARAMS, bases={0: (0.5, 0.5), 1: (0.5, 5.5)}, joint=True)
        after = advance_context(ctx, 0.1, {0: _spec(0), 1: _spec(1)}, PARAMS)
        self.assertEqual(after.particles[(0, 1)].goal, after.particles[(1, 1)].goal)

    def test_non_positive_dt_is_contract_violation(self):
        ctx, team = _row_context()
        with self.assertRaises(ContractViolation):
            advance_context(ctx, 0.0, team, PARAMS)


class TestPropagate(unittest.TestCase):

    def setUp(self):
        self.grid = OccupancyGrid.from_ascii("\n".join(["..????????"] * 8))
        self.specs = [_spec(0, start=(0.5, 0.5)), _spec(1, start=(1.5, 6.5))]
        self.team = {s.id: s for s in self.specs}

    def test_deterministic(self):
        a = init_store(self.specs, grid=self.grid)[0]
        b = init_store(self.specs, grid=self.grid)[0]
        for _ in range(5):
            a = propagate(a, 0.1, self.team, PARAMS)
            b = propagate(b, 0.1, self.team, PARAMS)
        self.assertEqual(a.particles, b.particles)

    def test_memo_shares_contexts_between_holders(self):
        stores = init_store(self.specs, grid=self.grid)
        memo = {}
        s0 = propagate(stores[0], 0.1, self.team, PARAMS, memo)
        s1 = propagate(stores[1], 0.1, self.team, PARAMS, memo)
        stamp = s0.source[0]
        self.assertIs(s0.contexts[stamp], s1.contexts[stamp])

    def test_particle_count_is_constant(self):
        store = init_store(self.specs, grid=self.grid)[1]
        for _ in range(5):
            store = propagate(store, 0.2, self.team, PARAMS)
            self.assertEqual(len(store.particles), 6)


class TestRanks(unittest.TestCase):

    def setUp(self):
        self.store = init_store([_spec(0), _spec(1, start=(1.5, 0.5))])[0]

    def test_select_tracked_picks_smallest(self):
        self.assertEqual(select_tracked(self.store, {1, 2, 3}), 1)
        self.assertEqual(select_tracked(self.store, {2, 3}), 2)
        self.assertEqual(select_tracked(self.store, {3}), 3)

    def test_select_tracked_empty_raises(self):
        with self.assertRaisesRegex(BeliefError, "no trackable empathy state"):
            select_tracked(self.store, set())

    def test_select_tracked_out_of_range(self):
        with self.assertRaises(ContractViolation):
            select_tracked(self.store, {4})

    def test_advance_rank_until_exhausted(self):
        store = advance_belief_rank(self.store, 1)
        self.assertEqual(store.believed[1], 2)
        self.assertTrue(store.particle(1, 1).refuted)
        self.assertFalse(store.particle(1, 2).refuted)
        store = advance_belief_rank(store, 1)
        self.assertEqual(store.believed[1], 3)
        with self.assertRaisesRegex(BeliefError, "beliefs exhausted"):
            advance_belief_rank(store, 1)

    def test_advance_rank_leaves_other_subjects(self):
        store = advance_belief_rank(self.store, 1)
        self.assertEqual(store.believed[0], 1)
        self.assertFalse(store.particle(0, 1).refuted)


class TestSnapAndMerge(unittest.TestCase):

    def setUp(self):
        self.grid = OccupancyGrid.from_cells(12, 4, all_free=True)
        self.specs = [_spec(0, start=(0.5, 0.5)), _spec(1, start=(1.5, 0.5)), _spec(2, start=(2.5, 0.5))]
        self.team = {s.id: s for s in self.specs}
        self.stores = init_store(self.specs, grid=self.grid)
        self.bases = {s.id: s.start for s in self.specs}

    def _announce(self, members, tick, positions, plan=None):
        dispositions = [_disposition(j, *positions[j]) for j in members]
        ctx = seed_context(dispositions, (tick, SYNC, min(members)), tick, self.grid, PARAMS,
                           self.bases, plan=plan)
        return dispositions, ctx

    def test_snap_sets_common_to_announced_pose(self):
        dispositions, ctx = self._announce([0, 1], 4, {0: (3.0, 1.0), 1: (4.0, 2.0)})
        store = snap_to_truth(self.stores[0], dispositions, ctx)
        self.assertEqual(store.common[0].pose, (3.0, 1.0))
        self.assertEqual(store.common[1].pose, (4.0, 2.0))
        for b in (2, 3):
            self.assertEqual(store.particle(1, b).pose, (4.0, 2.0))

    def test_same_announce_gives_equal_common_entries(self):
        dispositions, ctx = self._announce([0, 1], 4, {0: (3.0, 1.0), 1: (4.0, 2.0)})
        s0 = snap_to_truth(self.stores[0], dispositions, ctx)
        s1 = snap_to_truth(self.stores[1], dispositions, ctx)
        self.assertEqual(s0.common[0], s1.common[0])
        self.assertEqual(s0.common[1], s1.common[1])

    def test_snap_resets_believed_rank(self):
        store = advance_belief_rank(self.stores[0], 1)
        dispositions, ctx = self._announce([0, 1], 4, {0: (3.0, 1.0), 1: (4.0, 2.0)})
        self.assertEqual(snap_to_truth(store, dispositions, ctx).believed[1], 1)

    def test_rank_two_diverges_at_speed_ratio(self):
        plan = {1: (PlanItem(task=0, target=(11.5, 0.5), duration=5.0),)}
        dispositions, ctx = self._announce([0, 1], 1, {0: (0.5, 0.5), 1: (0.5, 0.5)}, plan)
        store = snap_to_truth(self.stores[0], dispositions, ctx)
        for _ in range(5):
            store = propagate(store, 0.5, self.team, PARAMS)
        d1 = store.particle(1, 1).pose[0] - 0.5
        d2 = store.particle(1, 2).pose[0] - 0.5
        self.assertAlmostEqual(d2 / d1, 0.6)

    def test_snap_without_context_seeds_one(self):
        store = snap_to_truth(self.stores[0], [_disposition(0, 2.0, 2.0)], tick=3)
        self.assertEqual(store.source[0], (3, SYNC, 0))
        self.assertEqual(store.common[0].pose, (2.0, 2.0))

    def test_unused_contexts_are_dropped(self):
        dispositions, ctx = self._announce([0, 1, 2], 4, {0: (1, 1), 1: (2, 1), 2: (3, 1)})
        store = snap_to_truth(self.stores[0], dispositions, ctx)
        self.assertEqual(list(store.contexts), [ctx.stamp])

    def test_merge_adopts_fresher_context(self):
        # robots 1 and 2 gossip; robot 0 later meets robot 1 and learns about robot 2
        dispositions, ctx = self._announce([1, 2], 6, {1: (5.0, 1.0), 2: (6.0, 1.0)})
        s1 = snap_to_truth(self.stores[1], dispositions, ctx)
        merged = merge_knowledge(self.stores[0], [s1])
        self.assertEqual(merged.source[2], ctx.stamp)
        self.assertEqual(merged.common[2].pose, (6.0, 1.0))
        self.assertEqual(merged.source[0], self.stores[0].source[0])

    def test_merge_keeps_highest_rank_for_same_context(self):
        s0 = advance_belief_rank(self.stores[0], 2)
        s1 = advance_belief_rank(advance_belief_rank(self.stores[1], 2), 2)
        merged = merge_knowledge(s0, [s1])
        self.assertEqual(merged.believed[2], 3)

    def test_fork_only_moves_the_owner(self):
        plan = {0: (PlanItem(task=0, target=(8.5, 0.5), duration=1.0),)}
        dispositions, ctx = self._announce([0, 1, 2], 2, {0: (1, 1), 1: (2, 1), 2: (3, 1)}, plan)
        store = snap_to_truth(self.stores[0], dispositions, ctx)
        forked = fork_context(store, (8.5, 0.5), (9, FORK, 0), 9)
        self.assertEqual(forked.source[0], (9, FORK, 0))
        self.assertEqual(forked.source[1], ctx.stamp)
        self.assertEqual(forked.common[0].pose, (8.5, 0.5))
        self.assertNotIn(0, forked.context_for(0).plan)
        self.assertEqual(set(forked.contexts), {ctx.stamp, (9, FORK, 0)})

    def test_fork_with_map_keeps_believed_coverage_and_routes_over_known_cells(self):
        believed = OccupancyGrid.from_ascii("....??")
        ledger = OccupancyGrid.from_ascii("..#???")
        store = init_store([_spec(0)], grid=believed)[0]
        forked = fork_context(store, (0.5, 0.5), (5, FORK, 0), 5, grid=ledger)
        ctx = forked.context_for(0)
        F, U, O = CellState.FREE, CellState.UNKNOWN, CellState.OCCUPIED
        self.assertEqual(ctx.grid.classify().ravel().tolist(), [F, F, O, F, U, U])
        self.assertEqual(ctx.route_grid().classify().ravel().tolist(), [F, F, O, O, O, O])


if __name__ == '__main__':
    unittest.main()
