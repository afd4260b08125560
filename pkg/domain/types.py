"""Core vocabulary shared by every other package: robots, statuses, tasks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import Iterable, Mapping, Optional, Sequence, Tuple

Point = Tuple[float, float]

GROUND = 0
AERIAL = 1


class ContractViolation(Exception):
    """A caller broke an operation's precondition."""
    pass


class DomainError(Exception):
    """A value object was constructed with invalid fields."""
    pass


@dataclass(frozen=True)
class RobotSpec:
    id: int
    capability: frozenset
    max_speed: float
    sense_radius: float
    comm_radius: float
    start: Point = (0.0, 0.0)
    partition_weight: Optional[float] = None
    kind: str = ""

    def __post_init__(self):
        if self.max_speed <= 0:
            raise DomainError(f"robot {self.id}: max_speed must be positive, got {self.max_speed}")
        if self.sense_radius <= 0:
            raise DomainError(f"robot {self.id}: sense_radius must be positive, got {self.sense_radius}")
        if self.comm_radius <= 0:
            raise DomainError(f"robot {self.id}: comm_radius must be positive, got {self.comm_radius}")
        if not self.capability:
            raise DomainError(f"robot {self.id}: capability set is empty")
        object.__setattr__(self, "capability", frozenset(int(k) for k in self.capability))
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))
        if self.partition_weight is None:
            # faster robots claim farther frontiers
            object.__setattr__(self, "partition_weight", 1.0 / self.max_speed)
        elif self.partition_weight <= 0:
            raise DomainError(f"robot {self.id}: partition_weight must be positive")


class StatusKind(Enum):
    EXPLORING = "exploring"
    GOSSIPING = "gossiping"
    PERFORMING_TASK = "performing_task"
    RETURNING_TO_BASE = "returning_to_base"
    AT_MEETING = "at_meeting"


@dataclass(frozen=True)
class Status:
    kind: StatusKind = field(compare=False, default=StatusKind.EXPLORING)
    target: Optional[int] = None
    rank: Optional[int] = None
    task: Optional[int] = None
    # ordering key so worlds and trace rows sort deterministically
    sort_key: str = field(default="", repr=False, init=False)

    def __post_init__(self):
        if self.kind is StatusKind.GOSSIPING:
            if self.target is None or self.rank is None or self.rank < 1:
                raise DomainError(f"gossiping status needs a target and a rank >= 1, got {self}")
        if self.kind is StatusKind.PERFORMING_TASK and self.task is None:
            raise DomainError("performing_task status needs a task id")
        object.__setattr__(self, "sort_key", self.label())

    @classmethod
    def exploring(cls) -> "Status":
        return cls(StatusKind.EXPLORING)

    @classmethod
    def gossiping(cls, target: int, rank: int) -> "Status":
        return cls(StatusKind.GOSSIPING, target=target, rank=rank)

    @classmethod
    def performing(cls, task: int) -> "Status":
        return cls(StatusKind.PERFORMING_TASK, task=task)

    @classmethod
    def returning(cls) -> "Status":
        return cls(StatusKind.RETURNING_TO_BASE)

    @classmethod
    def meeting(cls) -> "Status":
        return cls(StatusKind.AT_MEETING)

    def __lt__(self, other: "Status") -> bool:
        return self.sort_key < other.sort_key

    def label(self) -> str:
        if self.kind is StatusKind.GOSSIPING:
            return f"gossiping({self.target},{self.rank})"
        if self.kind is StatusKind.PERFORMING_TASK:
            return f"performing_task({self.task})"
        return self.kind.value


class TaskPhase(IntEnum):
    UNDISCOVERED = 0
    DISCOVERED = 1
    IN_PROGRESS = 2
    COMPLETE = 3


@dataclass(frozen=True)
class Task:
    id: int
    position: Point
    required: Tuple[int, ...]
    duration: float
    radius: float = 0.5
    phase: TaskPhase = TaskPhase.UNDISCOVERED

    def __post_init__(self):
        if self.duration < 0:
            raise DomainError(f"task {self.id}: duration must be >= 0")
        if self.radius <= 0:
            raise DomainError(f"task {self.id}: radius must be positive")
        object.__setattr__(self, "required", tuple(int(r) for r in self.required))
        if any(r < 0 for r in self.required) or sum(self.required) < 1:
            raise DomainError(f"task {self.id}: required counts must be >= 0 and sum to at least 1")
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        object.__setattr__(self, "phase", TaskPhase(self.phase))

    def advance(self, phase: TaskPhase) -> "Task":
        """Return a copy in `phase`; phases never regress."""
        if phase < self.phase:
            return self
        return replace(self, phase=TaskPhase(phase))

    @property
    def open(self) -> bool:
        return self.phase in (TaskPhase.DISCOVERED, TaskPhase.IN_PROGRESS)


@dataclass(frozen=True)
class Disposition:
    """What a robot announces about itself at a synchronisation."""
    robot: int
    pose: Tuple[float, float, float]
    capability: frozenset
    map_version: int
    status: Status

    @property
    def position(self) -> Point:
        return (self.pose[0], self.pose[1])


def capability_satisfies(assigned: Iterable[frozenset], required: Sequence[int],
                         n_kinds: Optional[int] = None) -> bool:
    """True iff, for every kind k, at least required[k] of the assigned robots hold k."""
    if n_kinds is not None and len(required) != n_kinds:
        raise ContractViolation(
            f"required has {len(required)} entries, scenario defines {n_kinds} capability kinds")
    counts = [0] * len(required)
    for caps in assigned:
        for k in caps:
            if k >= len(required) or k < 0:
                raise ContractViolation(f"capability kind {k} outside [0, {len(required)})")
            counts[k] += 1
    return all(c >= r for c, r in zip(counts, required))


def task_progress(task: Task,
                  positions: Mapping[int, Point],
                  capabilities: Mapping[int, frozenset],
                  assigned: Optional[Iterable[int]],
                  dwell: float,
                  dt: float) -> Tuple[Task, float]:
    """Advance one task by one tick.

    Dwell accumulates only while every requirement is met simultaneously by
    robots inside the completion radius, and resets to zero when that lapses.
    Returns the (possibly advanced) task and the new dwell.
    """
    if not task.open:
        raise ContractViolation(f"task {task.id} is {task.phase.name}, expected DISCOVERED or IN_PROGRESS")
    candidates = positions.keys() if assigned is None else [r for r in assigned if r in positions]
    present = [
        capabilities[r] for r in sorted(candidates)
        if math.dist(positions[r], task.position) <= task.radius
    ]
    if not present or not capability_satisfies(present, task.required):
        return task, 0.0

    task = task.advance(TaskPhase.IN_PROGRESS)
    if task.duration <= 0:
        return task.advance(TaskPhase.COMPLETE), dwell
    dwell += dt
    if dwell >= task.duration - 1e-9:
        task = task.advance(TaskPhase.COMPLETE)
    return task, dwell
