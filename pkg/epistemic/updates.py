"""Product updates for the two actions robots take: perceive and announce.

Announce publishes dispositions. A global announce leaves a single world
everybody knows. A local announce rewrites only the members' view, with
outsiders keeping the worlds they had. Perceive is a private event of one robot:
the perceiver moves to updated copies of its worlds while every other robot keeps
pointing at untouched copies, so nobody else's knowledge changes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple, Union

from domain.types import ContractViolation, Disposition, Status
from epistemic.logic import (
    And, EpistemicError, EpistemicState, Fact, Formula, Not, Present, StatusIs, Track, World,
    holds, is_propositional,
)

logger = logging.getLogger('episim.epistemic')

EVENT = 0
SKIP = 1


@dataclass(frozen=True)
class Announce:
    actor: int
    dispositions: Tuple[Disposition, ...]
    facts: FrozenSet = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "dispositions", tuple(sorted(self.dispositions, key=lambda d: d.robot)))
        object.__setattr__(self, "facts", frozenset(self.facts))
        robots = [d.robot for d in self.dispositions]
        if len(set(robots)) != len(robots):
            raise ContractViolation(f"announce carries more than one disposition per robot: {robots}")

    @property
    def statuses(self) -> Dict[int, Status]:
        return {d.robot: d.status for d in self.dispositions}


@dataclass(frozen=True)
class Perceive:
    """Robot `actor` observes `formula` (a conjunction of literals).

    `new_status` replaces the actor's own status; `revision` names a subject
    whose tracked rank moves one step down the likelihood order.
    """
    actor: int
    formula: Formula
    new_status: Optional[Status] = None
    revision: Optional[int] = None


Action = Union[Announce, Perceive]


def _literals(formula: Formula):
    """(positive facts, negative facts) of a conjunction of literals."""
    if isinstance(formula, (Present, Track)):
        return {formula}, set()
    if isinstance(formula, Not) and isinstance(formula.part, (Present, Track)):
        return set(), {formula.part}
    if isinstance(formula, StatusIs):
        return set(), set()
    if isinstance(formula, And):
        pos, neg = set(), set()
        for part in formula.parts:
            p, n = _literals(part)
            pos |= p
            neg |= n
        return pos, neg
    raise ContractViolation(f"perceived formula must be a conjunction of literals, got {formula!r}")


def _revise(facts: FrozenSet, subject: int, n_ranks: int) -> Optional[FrozenSet]:
    ranks = sorted(f.rank for f in facts if isinstance(f, Track) and f.subject == subject)
    if not ranks:
        return facts
    rank = ranks[0]
    if rank >= n_ranks:
        return None
    kept = frozenset(f for f in facts if not (isinstance(f, Track) and f.subject == subject))
    return kept | {Track(subject, rank + 1)}


def _finish(state: EpistemicState, worlds: Dict[Tuple[int, int], World],
            access: Dict[int, set], designated: Iterable[Tuple[int, int]]) -> EpistemicState:
    """Renumber product worlds, drop the unreachable ones and contract."""
    designated = sorted(designated)
    keep = set(designated)
    queue = list(designated)
    succ = {}
    for a, pairs in access.items():
        for u, v in pairs:
            succ.setdefault(u, set()).add(v)
    while queue:
        u = queue.pop()
        for v in sorted(succ.get(u, ())):
            if v not in keep:
                keep.add(v)
                queue.append(v)
    ids = {key: k for k, key in enumerate(sorted(keep))}
    new_worlds = {ids[key]: worlds[key].relabel(ids[key]) for key in keep}
    new_access = {a: frozenset((ids[u], ids[v]) for u, v in pairs if u in keep and v in keep)
                  for a, pairs in access.items()}
    result = EpistemicState(state.agents, new_worlds, new_access, frozenset(ids[d] for d in designated))
    return result.minimize()


def _private_event(state: EpistemicState, insiders: Iterable[int], post) -> EpistemicState:
    """Two-event product: insiders see the event, everyone else sees nothing happen.

    `post(world)` returns the updated world or None when the event cannot happen there.
    """
    insiders = set(insiders)
    worlds: Dict[Tuple[int, int], World] = {}
    for wid, w in state.worlds.items():
        worlds[(wid, SKIP)] = w
        updated = post(w)
        if updated is not None:
            worlds[(wid, EVENT)] = updated

    access = {a: set() for a in state.agents}
    for a in state.agents:
        for u, v in state.access[a]:
            access[a].add(((u, SKIP), (v, SKIP)))
            if (u, EVENT) not in worlds:
                continue
            if a in insiders:
                if (v, EVENT) in worlds:
                    access[a].add(((u, EVENT), (v, EVENT)))
            else:
                access[a].add(((u, EVENT), (v, SKIP)))

    designated = []
    for w in sorted(state.designated):
        if (w, EVENT) not in worlds:
            raise EpistemicError("belief revision impossible")
        for a in insiders:
            if not any(u == (w, EVENT) for u, _ in access[a]):
                raise EpistemicError("belief revision impossible")
        designated.append((w, EVENT))
    return _finish(state, worlds, access, designated)


def _announced_world(state: EpistemicState, action: Announce, world: World) -> World:
    statuses = dict(world.statuses)
    statuses.update(action.statuses)
    facts = frozenset(f for f in world.facts
                      if not (isinstance(f, Track) and f.subject in action.statuses))
    facts |= {Track(r, 1) for r in action.statuses} | action.facts
    return World(world.id, statuses, facts)


def product_update(state: EpistemicState, action: Action, n_ranks: int = 3) -> EpistemicState:
    if isinstance(action, Announce):
        return _global_announce(state, action)
    if isinstance(action, Perceive):
        return _perceive(state, action, n_ranks)
    raise ContractViolation(f"unknown action {action!r}")


def _global_announce(state: EpistemicState, action: Announce) -> EpistemicState:
    """Collapse to the true world updated with the announcement, known to everybody."""
    world = _announced_world(state, action, state.true_world.relabel(0))
    return EpistemicState(state.agents, {0: world}, {a: {(0, 0)} for a in state.agents}, {0})


def _perceive(state: EpistemicState, action: Perceive, n_ranks: int) -> EpistemicState:
    if action.actor not in state.agents:
        raise ContractViolation(f"unknown robot {action.actor}")
    if not is_propositional(action.formula):
        raise ContractViolation("perceived formulas may not contain modalities")
    positive, negative = _literals(action.formula)

    def post(world: World) -> Optional[World]:
        facts = world.facts
        if action.revision is not None:
            facts = _revise(facts, action.revision, n_ranks)
            if facts is None:
                return None
        facts = (facts - negative) | positive
        statuses = dict(world.statuses)
        if action.new_status is not None:
            statuses[action.actor] = action.new_status
        updated = World(world.id, statuses, facts)
        single = EpistemicState(state.agents, {world.id: updated},
                                {a: {(world.id, world.id)} for a in state.agents}, {world.id})
        if not holds(single, world.id, action.formula):
            return None
        return updated

    result = _private_event(state, {action.actor}, post)
    logger.debug("robot %d perceived %r: %d -> %d worlds", action.actor, action.formula, len(state), len(result))
    return result


def local_announce(state: EpistemicState, members: Iterable[int], payload: Announce) -> EpistemicState:
    """Announce heard only by `members`; outsiders keep their previous view."""
    members = frozenset(members)
    if len(members) < 2:
        raise ContractViolation(f"a local announce needs at least two robots, got {sorted(members)}")
    if not members <= set(state.agents):
        raise ContractViolation(f"unknown robots {sorted(members - set(state.agents))}")
    extra = set(payload.statuses) - members
    if extra:
        raise ContractViolation(f"robots {sorted(extra)} announce without being connected")
    if members == set(state.agents):
        return product_update(state, payload)
    return _private_event(state, members, lambda w: _announced_world(state, payload, w))
