"""Chromosome decoding, constraint checking and the makespan fitness.

A chromosome is a flat 0/1 vector over (epoch, robot, task), bit
(e * R + r) * T + t. Reading a robot's bits in epoch order gives its task
sequence; the scheduler then walks all sequences together so multi-robot
tasks start when the last assigned robot arrives and robots found by a
gossip task only join after that gossip ends.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from alloc.problem import AllocationError, AllocProblem, arrival_time
from domain.types import ContractViolation, Point, capability_satisfies

logger = logging.getLogger('episim.alloc')


class ViolationKind(Enum):
    MALFORMED = "malformed"
    CAPABILITY = "capability"
    UNSCHEDULED = "unscheduled"
    NO_GOSSIP = "no_gossip"
    PRECEDENCE = "precedence"
    NEGATIVE_TIME = "negative_time"
    UNREACHABLE = "unreachable"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    task: Optional[int] = None
    robot: Optional[int] = None
    detail: str = ""


class MalformedChromosome(AllocationError):
    pass


@dataclass
class Policy:
    sequences: Dict[int, Tuple[int, ...]]
    precedence: frozenset
    schedule: Dict[Tuple[int, int], Tuple[float, float]]
    meeting_points: Dict[int, Point] = field(default_factory=dict)
    makespans: Dict[int, float] = field(default_factory=dict)
    unscheduled: Tuple[int, ...] = ()
    fitness: float = 0.0
    violations: Tuple[Violation, ...] = ()
    chromosome: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    history: Tuple[Tuple[int, float, float], ...] = field(default=(), repr=False, compare=False)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def assigned(self, task_id: int) -> List[int]:
        return [r for r, seq in sorted(self.sequences.items()) if task_id in seq]

    def start_of(self, task_id: int) -> Optional[float]:
        starts = [s for (r, t), (s, _) in self.schedule.items() if t == task_id]
        return min(starts) if starts else None


def as_bits(chrom, problem: AllocProblem) -> np.ndarray:
    bits = np.asarray(chrom, dtype=np.uint8).ravel()
    if bits.size != problem.chromosome_length:
        raise ContractViolation(f"chromosome has {bits.size} bits, expected {problem.chromosome_length}")
    return bits


def _epochs(bits: np.ndarray, problem: AllocProblem) -> np.ndarray:
    return bits.reshape(problem.shape)


def _malformed(tensor: np.ndarray, problem: AllocProblem) -> List[Violation]:
    out = []
    per_epoch = tensor.sum(axis=2)
    for e, r in zip(*np.nonzero(per_epoch > 1)):
        out.append(Violation(ViolationKind.MALFORMED, robot=problem.robots[r].id,
                             detail=f"{int(per_epoch[e, r])} tasks in epoch {int(e)}"))
    repeats = tensor.sum(axis=0)
    for r, t in zip(*np.nonzero(repeats > 1)):
        out.append(Violation(ViolationKind.MALFORMED, task=problem.tasks[t].id, robot=problem.robots[r].id,
                             detail="task repeated in a sequence"))
    return out


def _read_sequences(tensor: np.ndarray, problem: AllocProblem) -> Tuple[Dict[int, Tuple[int, ...]], Dict[Tuple[int, int], int]]:
    sequences = {}
    epoch_of = {}
    for r, robot in enumerate(problem.robots):
        seq = []
        for e in range(tensor.shape[0]):
            for t in np.flatnonzero(tensor[e, r]):
                tid = problem.tasks[t].id
                seq.append(tid)
                epoch_of[(robot.id, tid)] = e
        sequences[robot.id] = tuple(seq)
    return sequences, epoch_of


def _precedence(sequences: Mapping[int, Sequence[int]], problem: AllocProblem) -> frozenset:
    edges = set()
    for seq in sequences.values():
        edges.update(zip(seq, seq[1:]))
    for g in problem.gossip_tasks:
        if any(g.id in seq for seq in sequences.values()):
            for tid in sequences.get(g.gossip_target, ()):
                edges.add((g.id, tid))
    return frozenset(edges)


def _schedule(sequences: Mapping[int, Sequence[int]], problem: AllocProblem):
    """Walk all sequences together; returns schedule, meeting points, makespans and leftovers."""
    tasks = {t.id: t for t in problem.tasks}
    pointer = {r: 0 for r in sequences}
    ready = {r.id: 0.0 for r in problem.robots if r.id in problem.connected}
    position = {r.id: r.position for r in problem.robots}
    assigned = {tid: [r for r in sorted(sequences) if tid in sequences[r]] for tid in tasks}
    schedule: Dict[Tuple[int, int], Tuple[float, float]] = {}
    meeting: Dict[int, Point] = {}
    done = set()

    progress = True
    while progress:
        progress = False
        for tid in sorted(tasks):
            robots = assigned[tid]
            if tid in done or not robots:
                continue
            if not all(r in ready and pointer[r] < len(sequences[r]) and sequences[r][pointer[r]] == tid
                       for r in robots):
                continue
            task = tasks[tid]
            arrivals = []
            target = task.position
            for r in robots:
                t, target = arrival_time(problem, problem.robot(r), position[r], ready[r], task)
                arrivals.append(t)
            start = max(arrivals)
            end = start + task.duration
            for r in robots:
                schedule[(r, tid)] = (start, end)
                ready[r] = end
                position[r] = target
                pointer[r] += 1
            if task.is_gossip:
                j = task.gossip_target
                if j not in ready:
                    ready[j] = end
                    position[j] = target
                meeting[tid] = target
            done.add(tid)
            progress = True

    makespans = {}
    for r, seq in sequences.items():
        ends = [schedule[(r, tid)][1] for tid in seq if (r, tid) in schedule]
        makespans[r] = max(ends) if ends else 0.0
    leftovers = tuple(sorted(tid for tid in tasks if assigned[tid] and tid not in done))
    return schedule, meeting, makespans, leftovers


def decode_policy(chrom, problem: AllocProblem, penalty_weight: float = 1e6) -> Policy:
    """Sequences, precedence, schedule and fitness of a chromosome.

    Raises MalformedChromosome when some robot holds two tasks in one epoch
    or the same task twice.
    """
    bits = as_bits(chrom, problem)
    tensor = _epochs(bits, problem)
    malformed = _malformed(tensor, problem)
    if malformed:
        raise MalformedChromosome(f"{len(malformed)} malformed assignments, first: {malformed[0].detail}")
    sequences, epoch_of = _read_sequences(tensor, problem)
    schedule, meeting, makespans, leftovers = _schedule(sequences, problem)
    policy = Policy(sequences=sequences, precedence=_precedence(sequences, problem), schedule=schedule,
                    meeting_points=meeting, makespans=makespans, unscheduled=leftovers)
    policy.violations = tuple(_violations(tensor, problem, policy, epoch_of))
    policy.fitness = _score(policy, penalty_weight)
    return policy


def _violations(tensor: np.ndarray, problem: AllocProblem, policy: Policy,
                epoch_of: Mapping[Tuple[int, int], int]) -> List[Violation]:
    out = []
    caps = {r.id: r.capability for r in problem.robots}
    gossip_epoch: Dict[int, int] = {}
    for g in problem.gossip_tasks:
        robots = policy.assigned(g.id)
        for r in robots:
            if r == g.gossip_target:
                out.append(Violation(ViolationKind.CAPABILITY, g.id, r, "robot assigned to gossip with itself"))
            elif r not in problem.connected:
                out.append(Violation(ViolationKind.CAPABILITY, g.id, r, "gossip seeker outside the connected team"))
        if robots:
            gossip_epoch[g.gossip_target] = min(epoch_of[(r, g.id)] for r in robots)

    for task in problem.tasks:
        if not policy.assigned(task.id):
            out.append(Violation(ViolationKind.UNSCHEDULED, task.id))
    for task in problem.real_tasks:
        robots = policy.assigned(task.id)
        if robots and not capability_satisfies([caps[r] for r in robots], task.required, problem.n_kinds):
            out.append(Violation(ViolationKind.CAPABILITY, task.id, None, "assigned robots lack capability"))

    blocked = set()
    for r in problem.disconnected:
        for tid in policy.sequences.get(r, ()):
            if r not in gossip_epoch or gossip_epoch[r] >= epoch_of[(r, tid)]:
                out.append(Violation(ViolationKind.NO_GOSSIP, tid, r, "no earlier gossip reaches this robot"))
                blocked.add(tid)

    for tid in policy.unscheduled:
        if tid not in blocked:
            out.append(Violation(ViolationKind.PRECEDENCE, tid, None, "sequences wait on each other"))
    for (r, tid), (start, end) in sorted(policy.schedule.items()):
        if start < 0 or end < 0:
            out.append(Violation(ViolationKind.NEGATIVE_TIME, tid, r))
        if math.isinf(end):
            out.append(Violation(ViolationKind.UNREACHABLE, tid, r))
    return out


def _score(policy: Policy, penalty_weight: float) -> float:
    makespan = sum(m for m in policy.makespans.values() if not math.isinf(m))
    return float(makespan + penalty_weight * len(policy.violations))


def check_constraints(chrom, problem: AllocProblem) -> List[Violation]:
    bits = as_bits(chrom, problem)
    malformed = _malformed(_epochs(bits, problem), problem)
    if malformed:
        return malformed
    return list(decode_policy(bits, problem).violations)


def fitness(chrom, problem: AllocProblem, penalty_weight: float = 1e6) -> float:
    """Sum of robot makespans plus the penalty per violation; lower is better."""
    bits = as_bits(chrom, problem)
    try:
        return decode_policy(bits, problem, penalty_weight).fitness
    except MalformedChromosome:
        return float(penalty_weight * bits.size)


def encode_policy(sequences: Mapping[int, Sequence[int]], problem: AllocProblem) -> np.ndarray:
    """Chromosome whose decode reproduces `sequences`; tasks take epochs in dependency order."""
    robot_index = {r.id: k for k, r in enumerate(problem.robots)}
    task_index = {t.id: k for k, t in enumerate(problem.tasks)}
    tensor = np.zeros(problem.shape, dtype=np.uint8)
    pointer = {r: 0 for r in sequences}
    remaining = {tid for seq in sequences.values() for tid in seq}
    epoch = 0
    while remaining:
        placed = False
        for tid in sorted(remaining):
            robots = [r for r, seq in sequences.items() if tid in seq]
            if all(pointer[r] < len(sequences[r]) and sequences[r][pointer[r]] == tid for r in robots):
                if epoch >= problem.n_epochs:
                    raise AllocationError(f"sequences need more than {problem.n_epochs} epochs")
                for r in robots:
                    tensor[epoch, robot_index[r], task_index[tid]] = 1
                    pointer[r] += 1
                remaining.discard(tid)
                epoch += 1
                placed = True
                break
        if not placed:
            raise AllocationError("sequences order shared tasks inconsistently")
    return tensor.ravel()
