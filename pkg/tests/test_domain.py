"""
tests/test_domain.py

Value objects, capability requirements and task progress.

Run:
    python -m pytest tests/test_domain.py -v
"""

import unittest

from domain import (
    AERIAL, GROUND, ContractViolation, DomainError, RobotSpec, Status, StatusKind, Task, TaskPhase,
    capability_satisfies, task_progress,
)


def _task(required=(1, 0), duration=1.0, phase=TaskPhase.DISCOVERED):
    return Task(0, (5.0, 5.0), required, duration, 0.5, phase)


class TestRobotSpec(unittest.TestCase):

    def test_partition_weight_defaults_to_inverse_speed(self):
        spec = RobotSpec(0, {GROUND}, 2.0, 2.5, 7.0, (1, 2))
        self.assertAlmostEqual(spec.partition_weight, 0.5)
        self.assertEqual(spec.start, (1.0, 2.0))
        self.assertEqual(spec.capability, frozenset({0}))

    def test_invalid_values(self):
        with self.assertRaises(DomainError):
            RobotSpec(0, {GROUND}, 0.0, 2.5, 7.0)
        with self.assertRaises(DomainError):
            RobotSpec(0, set(), 1.0, 2.5, 7.0)
        with self.assertRaises(DomainError):
            RobotSpec(0, {AERIAL}, 1.0, 2.5, -1.0)


class TestStatus(unittest.TestCase):

    def test_labels(self):
        self.assertEqual(Status.exploring().label(), "exploring")
        self.assertEqual(Status.gossiping(2, 3).label(), "gossiping(2,3)")
        self.assertEqual(Status.performing(4).label(), "performing_task(4)")
        self.assertEqual(Status.returning().kind, StatusKind.RETURNING_TO_BASE)

    def test_gossip_needs_target_and_rank(self):
        with self.assertRaises(DomainError):
            Status(StatusKind.GOSSIPING, target=1, rank=0)
        with self.assertRaises(DomainError):
            Status(StatusKind.PERFORMING_TASK)

    def test_sortable(self):
        items = sorted([Status.returning(), Status.exploring(), Status.gossiping(1, 1)])
        self.assertEqual([s.label() for s in items], ["exploring", "gossiping(1,1)", "returning_to_base"])


class TestTask(unittest.TestCase):

    def test_phases_never_regress(self):
        task = _task(phase=TaskPhase.IN_PROGRESS)
        self.assertIs(task.advance(TaskPhase.DISCOVERED), task)
        self.assertEqual(task.advance(TaskPhase.COMPLETE).phase, TaskPhase.COMPLETE)

    def test_open(self):
        self.assertFalse(_task(phase=TaskPhase.UNDISCOVERED).open)
        self.assertTrue(_task(phase=TaskPhase.DISCOVERED).open)
        self.assertFalse(_task(phase=TaskPhase.COMPLETE).open)

    def test_invalid_requirements(self):
        with self.assertRaises(DomainError):
            _task(required=(0, 0))
        with self.assertRaises(DomainError):
            _task(required=(1, -1))
        with self.assertRaises(DomainError):
            _task(duration=-1.0)


class TestCapabilities(unittest.TestCase):

    def test_counts_per_kind(self):
        self.assertTrue(capability_satisfies([{0}, {1}], (1, 1)))
        self.assertFalse(capability_satisfies([{0}, {0}], (1, 1)))
        self.assertTrue(capability_satisfies([{0, 1}, {0}], (2, 1)))
        self.assertFalse(capability_satisfies([], (1, 0)))

    def test_kind_out_of_range(self):
        with self.assertRaises(ContractViolation):
            capability_satisfies([{2}], (1, 0))
        with self.assertRaises(ContractViolation):
            capability_satisfies([{0}], (1, 0), n_kinds=3)


class TestTaskProgress(unittest.TestCase):

    def setUp(self):
        self.caps = {0: frozenset({GROUND}), 1: frozenset({AERIAL})}

    def test_dwell_accumulates_until_complete(self):
        task, dwell = _task(required=(1, 1), duration=0.3), 0.0
        positions = {0: (5.0, 5.2), 1: (5.1, 5.0)}
        phases = []
        for _ in range(3):
            task, dwell = task_progress(task, positions, self.caps, None, dwell, 0.1)
            phases.append(task.phase)
        self.assertEqual(phases, [TaskPhase.IN_PROGRESS, TaskPhase.IN_PROGRESS, TaskPhase.COMPLETE])

    def test_dwell_resets_when_a_partner_leaves(self):
        task = _task(required=(1, 1), duration=1.0)
        task, dwell = task_progress(task, {0: (5.0, 5.0), 1: (5.0, 5.0)}, self.caps, None, 0.0, 0.1)
        self.assertAlmostEqual(dwell, 0.1)
        task, dwell = task_progress(task, {0: (5.0, 5.0), 1: (9.0, 9.0)}, self.caps, None, dwell, 0.1)
        self.assertEqual(dwell, 0.0)
        self.assertEqual(task.phase, TaskPhase.IN_PROGRESS)

    def test_only_assigned_robots_count(self):
        task = _task(required=(1, 0), duration=0.0)
        positions = {0: (5.0, 5.0)}
        unchanged, _ = task_progress(task, positions, self.caps, [1], 0.0, 0.1)
        self.assertEqual(unchanged.phase, TaskPhase.DISCOVERED)
        done, _ = task_progress(task, positions, self.caps, [0], 0.0, 0.1)
        self.assertEqual(done.phase, TaskPhase.COMPLETE)

    def test_closed_task_rejected(self):
        with self.assertRaises(ContractViolation):
            task_progress(_task(phase=TaskPhase.COMPLETE), {}, {}, None, 0.0, 0.1)


if __name__ == "__main__":
    unittest.main()
