"""
tests/test_epistemic.py

Epistemic states, formula evaluation and the perceive / announce updates.

Run:
    python -m pytest tests/test_epistemic.py -v
"""

import itertools
import unittest

import numpy as np

from domain.types import ContractViolation, Disposition, Status
from epistemic import (
    And, Announce, EpistemicError, EpistemicState, Knows, Not, Perceive, Present, StatusIs, Track,
    World, holds, initial_state, local_announce, product_update, to_dot, true_world_certain,
)

AGENTS = (0, 1, 2)
STATUS_POOL = [Status.exploring(), Status.performing(0), Status.gossiping(1, 2), Status.meeting()]


def _disposition(robot, status):
    return Disposition(robot, (float(robot), 0.0, 0.0), frozenset({0}), 0, status)


def _world(wid, statuses, facts=()):
    return World(wid, dict(zip(AGENTS, statuses)), frozenset(facts))


def _two_world_state():
    worlds = {
        0: _world(0, [Status.exploring()] * 3, {Present(1)}),
        1: _world(1, [Status.exploring()] * 3),
    }
    access = {0: {(0, 0), (0, 1), (1, 1)}, 1: {(0, 0), (1, 1)}, 2: {(0, 0), (1, 1)}}
    return EpistemicState(AGENTS, worlds, access, {0})


def _random_state(rng):
    n = int(rng.integers(1, 9))
    worlds = {}
    for w in range(n):
        statuses = [STATUS_POOL[int(rng.integers(len(STATUS_POOL)))] for _ in AGENTS]
        facts = {Track(j, int(rng.integers(1, 4))) for j in AGENTS}
        if rng.random() < 0.5:
            facts.add(Present(0))
        worlds[w] = _world(w, statuses, facts)
    access = {a: set() for a in AGENTS}
    for w in range(1, n):
        access[int(rng.integers(3))].add((int(rng.integers(w)), w))
    for a in AGENTS:
        for _ in range(int(rng.integers(0, 2 * n + 1))):
            access[a].add((int(rng.integers(n)), int(rng.integers(n))))
    return EpistemicState(AGENTS, worlds, access, {0})


def _formulas_without(robot):
    others = [a for a in AGENTS if a != robot]
    atoms = [Present(0)]
    atoms += [Track(j, b) for j in others for b in (1, 2, 3)]
    atoms += [StatusIs(j, s) for j in others for s in STATUS_POOL]
    formulas = []
    for j in others:
        for atom in atoms:
            formulas.append(Knows(j, atom))
            formulas.append(Knows(j, Not(atom)))
            for k in others:
                formulas.append(Knows(j, Knows(k, atom)))
    return formulas


class TestHolds(unittest.TestCase):

    def test_atom_by_valuation(self):
        state = _two_world_state()
        self.assertTrue(holds(state, 0, Present(1)))
        self.assertFalse(holds(state, 1, Present(1)))
        self.assertTrue(holds(state, 0, StatusIs(2, Status.exploring())))

    def test_single_reflexive_world_knows(self):
        state = initial_state(AGENTS, facts={Present(3)})
        self.assertTrue(holds(state, 0, Knows(1, Present(3))))
        self.assertTrue(holds(state, 0, Knows(0, Track(2, 1))))

    def test_uncertainty_between_two_worlds(self):
        state = _two_world_state()
        self.assertFalse(holds(state, 0, Knows(0, Present(1))))
        self.assertTrue(holds(state, 0, And((Not(Knows(0, Present(1))), Not(Knows(0, Not(Present(1))))))))
        self.assertTrue(holds(state, 0, Knows(1, Present(1))))

    def test_dangling_world_is_contract_violation(self):
        with self.assertRaises(ContractViolation):
            holds(initial_state(AGENTS), 5, Present(0))


class TestStateInvariants(unittest.TestCase):

    def test_missing_world_in_relation(self):
        worlds = {0: _world(0, [Status.exploring()] * 3)}
        with self.assertRaises(ContractViolation):
            EpistemicState(AGENTS, worlds, {0: {(0, 1)}}, {0})

    def test_unreachable_world(self):
        worlds = {0: _world(0, [Status.exploring()] * 3), 1: _world(1, [Status.meeting()] * 3)}
        with self.assertRaises(ContractViolation):
            EpistemicState(AGENTS, worlds, {0: {(0, 0)}}, {0})

    def test_world_must_cover_every_robot(self):
        with self.assertRaises(ContractViolation):
            EpistemicState(AGENTS, {0: World(0, {0: Status.exploring()})}, {}, {0})

    def test_minimize_merges_bisimilar_worlds(self):
        worlds = {0: _world(0, [Status.exploring()] * 3), 1: _world(1, [Status.exploring()] * 3)}
        state = EpistemicState(AGENTS, worlds, {0: {(0, 1), (1, 1)}, 1: {(0, 0), (1, 1)}, 2: {(0, 0), (1, 1)}}, {0})
        self.assertEqual(len(state.minimize()), 1)

    def test_to_dot_marks_designated_world(self):
        dot = to_dot(_two_world_state())
        self.assertTrue(dot.startswith("digraph"))
        self.assertIn("w0 [shape=doublecircle", dot)
        self.assertIn('w0 -> w1 [label="0"]', dot)


class TestTrueWorldCertain(unittest.TestCase):

    def test_fresh_state_is_certain(self):
        self.assertTrue(true_world_certain(initial_state(AGENTS)))

    def test_second_successor_breaks_certainty(self):
        self.assertFalse(true_world_certain(_two_world_state()))

    def test_needs_exactly_one_designated_world(self):
        worlds = {0: _world(0, [Status.exploring()] * 3), 1: _world(1, [Status.meeting()] * 3)}
        state = EpistemicState(AGENTS, worlds, {a: {(0, 0), (1, 1)} for a in AGENTS}, {0, 1})
        with self.assertRaises(ContractViolation):
            true_world_certain(state)

    def test_perceived_task_breaks_certainty_for_others(self):
        state = product_update(initial_state(AGENTS),
                               Perceive(1, Present(4), new_status=Status.performing(4)))
        self.assertFalse(true_world_certain(state))
        w = state.true_world.id
        self.assertEqual(state.successors(1, w), frozenset({w}))
        self.assertNotIn(w, state.successors(0, w))
        self.assertNotIn(w, state.successors(2, w))


class TestAnnounce(unittest.TestCase):

    def test_global_announce_collapses_to_one_world(self):
        statuses = [Status.exploring(), Status.performing(0), Status.gossiping(0, 2)]
        announce = Announce(0, [_disposition(r, s) for r, s in zip(AGENTS, statuses)], {Present(0)})
        state = product_update(_two_world_state(), announce)
        self.assertEqual(len(state), 1)
        self.assertTrue(true_world_certain(state))
        for i, j in itertools.product(AGENTS, AGENTS):
            self.assertTrue(holds(state, 0, Knows(i, StatusIs(j, statuses[j]))))
            self.assertTrue(holds(state, 0, Knows(i, Knows(j, StatusIs(j, statuses[j])))))
        self.assertTrue(holds(state, 0, Knows(2, Present(0))))

    def test_announce_resets_tracked_rank(self):
        state = product_update(initial_state(AGENTS), Perceive(0, Not(Track(1, 1)), revision=1))
        state = product_update(state, Announce(0, [_disposition(r, Status.exploring()) for r in AGENTS]))
        self.assertTrue(holds(state, 0, Knows(0, Track(1, 1))))

    def test_local_announce_with_everyone_equals_global(self):
        base = _two_world_state()
        announce = Announce(0, [_disposition(r, Status.meeting()) for r in AGENTS])
        self.assertEqual(local_announce(base, AGENTS, announce).canonical(),
                         product_update(base, announce).canonical())

    def test_partial_announce_keeps_outsider_uncertain(self):
        state = initial_state(AGENTS)
        announce = Announce(0, [_disposition(0, Status.performing(3)), _disposition(1, Status.gossiping(2, 1))])
        after = local_announce(state, {0, 1}, announce)
        self.assertFalse(true_world_certain(after))
        w = after.true_world.id
        self.assertTrue(holds(after, w, Knows(0, StatusIs(1, Status.gossiping(2, 1)))))
        self.assertTrue(holds(after, w, Knows(2, StatusIs(0, Status.exploring()))))

    def test_gossip_then_global_equals_global(self):
        state = initial_state(AGENTS)
        gossip = Announce(0, [_disposition(0, Status.performing(3)), _disposition(1, Status.meeting())])
        final = Announce(0, [_disposition(r, Status.exploring()) for r in AGENTS], {Present(3)})
        direct = product_update(state, final)
        composed = product_update(local_announce(state, {0, 1}, gossip), final)
        self.assertEqual(direct.canonical(), composed.canonical())

    def test_local_announce_needs_two_members(self):
        with self.assertRaises(ContractViolation):
            local_announce(initial_state(AGENTS), {0}, Announce(0, [_disposition(0, Status.meeting())]))

    def test_outsider_cannot_announce_locally(self):
        with self.assertRaises(ContractViolation):
            local_announce(initial_state(AGENTS), {0, 1},
                           Announce(0, [_disposition(2, Status.meeting())]))


class TestPerceive(unittest.TestCase):

    def test_absence_moves_belief_to_next_rank(self):
        state = product_update(initial_state(AGENTS), Perceive(0, Not(Track(1, 1)), revision=1))
        w = state.true_world.id
        self.assertTrue(holds(state, w, Knows(0, Track(1, 2))))
        self.assertFalse(holds(state, w, Knows(0, Track(1, 1))))
        self.assertTrue(holds(state, w, Knows(2, Track(1, 1))))
        self.assertTrue(holds(state, w, Knows(1, Track(1, 1))))

    def test_exhausted_ranks_raise(self):
        state = initial_state(AGENTS)
        for _ in range(2):
            state = product_update(state, Perceive(0, Not(Track(1, 1)), revision=1), n_ranks=3)
        with self.assertRaisesRegex(EpistemicError, "belief revision impossible"):
            product_update(state, Perceive(0, Not(Track(1, 3)), revision=1), n_ranks=3)

    def test_task_perception_is_private(self):
        state = product_update(initial_state(AGENTS),
                               Perceive(0, Present(7), new_status=Status.performing(7)))
        w = state.true_world.id
        self.assertTrue(holds(state, w, Knows(0, Present(7))))
        self.assertTrue(holds(state, w, Knows(0, StatusIs(0, Status.performing(7)))))
        self.assertFalse(holds(state, w, Knows(1, Present(7))))
        self.assertTrue(holds(state, w, Knows(1, StatusIs(0, Status.exploring()))))

    def test_modal_perception_is_contract_violation(self):
        with self.assertRaises(ContractViolation):
            product_update(initial_state(AGENTS), Perceive(0, Knows(1, Present(0))))

    def test_other_robots_knowledge_is_unchanged(self):
        rng = np.random.default_rng(5)
        checked = 0
        for _ in range(150):
            state = _random_state(rng)
            actor = int(rng.integers(3))
            if rng.random() < 0.5:
                action = Perceive(actor, Present(0), new_status=Status.performing(0))
            else:
                subject = int(rng.integers(3))
                rank = state.true_world.tracked_rank(subject)
                action = Perceive(actor, Not(Track(subject, rank)), revision=subject)
            try:
                after = product_update(state, action)
            except EpistemicError:
                continue
            w0 = state.true_world.id
            w1 = after.true_world.id
            for formula in _formulas_without(actor):
                self.assertEqual(holds(state, w0, formula), holds(after, w1, formula))
            checked += 1
        self.assertGreater(checked, 30)

    def test_updates_keep_every_world_reachable(self):
        state = initial_state(AGENTS)
        actions = [
            Perceive(2, Present(1), new_status=Status.performing(1)),
            Perceive(0, Not(Track(2, 1)), revision=2),
            Perceive(1, Present(0)),
        ]
        for action in actions:
            state = product_update(state, action)
            self.assertEqual(state.reachable(), set(state.worlds))
            self.assertLessEqual(len(state), len(STATUS_POOL) ** len(AGENTS))


if __name__ == '__main__':
    unittest.main()
