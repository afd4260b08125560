"""Epistemic states: worlds, per-robot accessibility and formula evaluation."""

from __future__ import annotations

import hashlib
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from domain.types import ContractViolation, Status

logger = logging.getLogger('episim.epistemic')


class EpistemicError(Exception):
    pass


# ── formulas ─────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Present:
    """A task exists and has been seen."""
    task: int


@dataclass(frozen=True)
class Track:
    """`subject` is following its rank-`rank` particle."""
    subject: int
    rank: int


@dataclass(frozen=True)
class StatusIs:
    robot: int
    status: Status


@dataclass(frozen=True)
class Not:
    part: "Formula"


@dataclass(frozen=True)
class And:
    parts: Tuple["Formula", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


@dataclass(frozen=True)
class Knows:
    agent: int
    part: "Formula"


@dataclass(frozen=True)
class Believes:
    agent: int
    part: "Formula"


Fact = Union[Present, Track]
Atom = Union[Present, Track, StatusIs]
Formula = Union[Present, Track, StatusIs, Not, And, Knows, Believes]

TRUE = And(())
ATOMS = (Present, Track, StatusIs)


def Or(*parts: Formula) -> Formula:
    return Not(And(tuple(Not(p) for p in parts)))


def is_propositional(formula: Formula) -> bool:
    if isinstance(formula, ATOMS):
        return True
    if isinstance(formula, Not):
        return is_propositional(formula.part)
    if isinstance(formula, And):
        return all(is_propositional(p) for p in formula.parts)
    return False


def mentions(formula: Formula, robot: int) -> bool:
    """True when the formula names `robot` in an atom or a modality."""
    if isinstance(formula, (Knows, Believes)):
        return formula.agent == robot or mentions(formula.part, robot)
    if isinstance(formula, Not):
        return mentions(formula.part, robot)
    if isinstance(formula, And):
        return any(mentions(p, robot) for p in formula.parts)
    if isinstance(formula, StatusIs):
        return formula.robot == robot
    if isinstance(formula, Track):
        return formula.subject == robot
    return False


# ── worlds and states ────────────────────────────────────────────────────────

def _fact_key(fact) -> str:
    return repr(fact)


@dataclass(frozen=True)
class World:
    id: int
    statuses: Tuple[Tuple[int, Status], ...]
    facts: FrozenSet = frozenset()

    def __post_init__(self):
        if isinstance(self.statuses, Mapping):
            object.__setattr__(self, "statuses", tuple(sorted(self.statuses.items())))
        object.__setattr__(self, "statuses", tuple(sorted(self.statuses, key=lambda kv: kv[0])))
        object.__setattr__(self, "facts", frozenset(self.facts))

    def status_of(self, robot: int) -> Status:
        for r, s in self.statuses:
            if r == robot:
                return s
        raise ContractViolation(f"world {self.id} has no status for robot {robot}")

    def tracked_rank(self, subject: int) -> Optional[int]:
        ranks = [f.rank for f in self.facts if isinstance(f, Track) and f.subject == subject]
        return min(ranks) if ranks else None

    def valuation_key(self) -> str:
        statuses = ";".join(f"{r}={s.label()}" for r, s in self.statuses)
        facts = ";".join(sorted(_fact_key(f) for f in self.facts))
        return f"{statuses}|{facts}"

    def relabel(self, new_id: int) -> "World":
        return World(new_id, self.statuses, self.facts)


@dataclass(frozen=True)
class EpistemicState:
    """Pointed multi-agent Kripke structure.

    `access[i]` holds the ordered (from, to) world-id pairs of robot i. Every
    world must be reachable from a designated world.
    """
    agents: Tuple[int, ...]
    worlds: Mapping[int, World]
    access: Mapping[int, FrozenSet[Tuple[int, int]]]
    designated: FrozenSet[int]
    _successors: Dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(sorted(self.agents)))
        object.__setattr__(self, "designated", frozenset(self.designated))
        object.__setattr__(self, "access", {a: frozenset(self.access.get(a, ())) for a in self.agents})
        if not self.designated:
            raise ContractViolation("an epistemic state needs at least one designated world")
        if not self.designated <= set(self.worlds):
            raise ContractViolation(f"designated worlds {sorted(self.designated - set(self.worlds))} do not exist")
        for a, pairs in self.access.items():
            for u, v in pairs:
                if u not in self.worlds or v not in self.worlds:
                    raise ContractViolation(f"relation of robot {a} references a missing world ({u}, {v})")
        for w in self.worlds.values():
            robots = {r for r, _ in w.statuses}
            if robots != set(self.agents):
                raise ContractViolation(f"world {w.id} covers robots {sorted(robots)}, expected {list(self.agents)}")
        succ = {a: {} for a in self.agents}
        for a, pairs in self.access.items():
            for u, v in pairs:
                succ[a].setdefault(u, set()).add(v)
        object.__setattr__(self, "_successors", {a: {u: frozenset(vs) for u, vs in m.items()} for a, m in succ.items()})
        unreachable = set(self.worlds) - self.reachable()
        if unreachable:
            raise ContractViolation(f"worlds {sorted(unreachable)} are unreachable from the designated worlds")

    def successors(self, agent: int, world: int) -> FrozenSet[int]:
        if agent not in self._successors:
            raise ContractViolation(f"unknown robot {agent}")
        return self._successors[agent].get(world, frozenset())

    def reachable(self) -> set:
        seen = set(self.designated)
        queue = deque(sorted(self.designated))
        while queue:
            u = queue.popleft()
            for a in self.agents:
                for v in sorted(self.successors(a, u)):
                    if v not in seen:
                        seen.add(v)
                        queue.append(v)
        return seen

    def valuation(self, world: int) -> FrozenSet:
        w = self.world(world)
        return frozenset(w.facts) | frozenset(StatusIs(r, s) for r, s in w.statuses)

    def world(self, world: int) -> World:
        try:
            return self.worlds[world]
        except KeyError:
            raise ContractViolation(f"world {world} is not part of this state") from None

    @property
    def true_world(self) -> World:
        if len(self.designated) != 1:
            raise ContractViolation(f"expected one designated world, found {len(self.designated)}")
        return self.worlds[next(iter(self.designated))]

    # ── bisimulation ────────────────────────────────────────────────────────

    def _signatures(self) -> Dict[int, str]:
        sig = {w: hashlib.sha1(self.worlds[w].valuation_key().encode()).hexdigest() for w in self.worlds}
        n_classes = len(set(sig.values()))
        while True:
            refined = {}
            for w in self.worlds:
                parts = [sig[w]]
                for a in self.agents:
                    parts.append(f"{a}:" + ",".join(sorted({sig[v] for v in self.successors(a, w)})))
                refined[w] = hashlib.sha1("|".join(parts).encode()).hexdigest()
            count = len(set(refined.values()))
            sig = refined
            if count == n_classes:
                return sig
            n_classes = count

    def minimize(self) -> "EpistemicState":
        """Bisimulation contraction; world ids follow the smallest original id in each class."""
        sig = self._signatures()
        representative = {}
        for w in sorted(self.worlds):
            representative.setdefault(sig[w], w)
        ids = {s: k for k, s in enumerate(sorted(representative, key=lambda s: representative[s]))}
        worlds = {ids[s]: self.worlds[w].relabel(ids[s]) for s, w in representative.items()}
        access = {a: frozenset((ids[sig[u]], ids[sig[v]]) for u, v in pairs) for a, pairs in self.access.items()}
        designated = frozenset(ids[sig[w]] for w in self.designated)
        return EpistemicState(self.agents, worlds, access, designated)

    def canonical(self) -> tuple:
        """Id-free form: equal for bisimilar states once both are minimised."""
        sig = self._signatures()
        worlds = frozenset((sig[w], self.worlds[w].valuation_key()) for w in self.worlds)
        access = tuple((a, frozenset((sig[u], sig[v]) for u, v in self.access[a])) for a in self.agents)
        return self.agents, worlds, access, frozenset(sig[w] for w in self.designated)

    def __len__(self) -> int:
        return len(self.worlds)


def initial_state(agents: Iterable[int], statuses: Optional[Mapping[int, Status]] = None,
                  facts: Iterable = ()) -> EpistemicState:
    """Single world, every robot tracking its first particle, all relations reflexive."""
    agents = tuple(sorted(agents))
    if not agents:
        raise ContractViolation("an epistemic state needs at least one robot")
    statuses = {a: (statuses or {}).get(a, Status.exploring()) for a in agents}
    world = World(0, statuses, frozenset(facts) | {Track(a, 1) for a in agents})
    return EpistemicState(agents, {0: world}, {a: {(0, 0)} for a in agents}, {0})


# ── evaluation ───────────────────────────────────────────────────────────────

def holds(state: EpistemicState, world: int, formula: Formula) -> bool:
    w = state.world(world)
    if isinstance(formula, StatusIs):
        return w.status_of(formula.robot) == formula.status
    if isinstance(formula, (Present, Track)):
        return formula in w.facts
    if isinstance(formula, Not):
        return not holds(state, world, formula.part)
    if isinstance(formula, And):
        return all(holds(state, world, p) for p in formula.parts)
    if isinstance(formula, (Knows, Believes)):
        return all(holds(state, v, formula.part) for v in state.successors(formula.agent, world))
    raise ContractViolation(f"not a formula: {formula!r}")


def true_world_certain(state: EpistemicState) -> bool:
    """Every robot considers exactly the true world possible from the true world."""
    w = state.true_world.id
    return all(state.successors(a, w) == frozenset({w}) for a in state.agents)


def to_dot(state: EpistemicState) -> str:
    lines = ["digraph epistemic {", "  rankdir=LR;"]
    for wid in sorted(state.worlds):
        w = state.worlds[wid]
        label = "\\n".join([f"{r}:{s.label()}" for r, s in w.statuses] +
                           sorted(_fact_key(f) for f in w.facts))
        shape = "doublecircle" if wid in state.designated else "circle"
        lines.append(f'  w{wid} [shape={shape}, label="w{wid}\\n{label}"];')
    for a in state.agents:
        for u, v in sorted(state.access[a]):
            lines.append(f'  w{u} -> w{v} [label="{a}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
