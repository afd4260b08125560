"""Belief and empathy particles.

Every synchronisation opens a shared, immutable `BeliefContext` holding the
particles of the robots that took part, the merged map and the plan they agreed
on. All holders advance a context with the same deterministic rules, so a robot
predicting itself and a peer predicting that robot compute identical particles.
A `BeliefStore` is one robot's view: for each subject it names the freshest
context carrying that subject's state and the rank it currently believes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, MutableMapping, Optional, Sequence, Tuple

import numpy as np

from domain.types import ContractViolation, Disposition, Point, RobotSpec, Status, StatusKind, Task
from gridworld.occupancy import (
    DEFAULT_MAP_PARAMS, CellState, FrontierSet, MapParams, OccupancyGrid, extract_frontiers,
    mark_covered,
)
from gridworld.planning import open_cell, plan_path
from coverage_planning.frontier_partition import (
    DEFAULT_PENALTY, FrontierPartition, best_goal, meeting_point, partition_frontiers,
)

logger = logging.getLogger('episim.belief')

# (created tick, origin kind, origin robot): origin kind 0 is a sync, 1 a private fork
Stamp = Tuple[int, int, int]

SYNC = 0
FORK = 1


class BeliefError(Exception):
    pass


@dataclass(frozen=True)
class BeliefParams:
    n_ranks: int = 3
    speed_factors: Tuple[float, ...] = (1.0, 0.6, 0.2)
    penalty: float = DEFAULT_PENALTY
    map_params: MapParams = DEFAULT_MAP_PARAMS
    coverage_scale: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "speed_factors", tuple(float(f) for f in self.speed_factors))
        check_speed_factors(self.n_ranks, self.speed_factors)
        if not 0.0 < self.coverage_scale <= 1.0:
            raise BeliefError(f"coverage_scale must lie in (0, 1], got {self.coverage_scale}")

    @classmethod
    def from_config(cls, config: dict) -> "BeliefParams":
        belief = config.get('belief', {})
        return cls(n_ranks=belief.get('n_ranks', 3),
                   speed_factors=tuple(belief.get('speed_factors', (1.0, 0.6, 0.2))),
                   penalty=config.get('coverage', {}).get('out_of_region_penalty', DEFAULT_PENALTY),
                   map_params=MapParams.from_config(config),
                   coverage_scale=belief.get('coverage_scale', 0.5))


def check_speed_factors(n_ranks: int, speed_factors: Sequence[float]):
    if n_ranks < 1:
        raise BeliefError(f"n_ranks must be >= 1, got {n_ranks}")
    if len(speed_factors) != n_ranks:
        raise BeliefError(f"expected {n_ranks} speed factors, got {len(speed_factors)}")
    if abs(speed_factors[0] - 1.0) > 1e-12:
        raise BeliefError(f"first speed factor must be 1.0, got {speed_factors[0]}")
    if any(b >= a for a, b in zip(speed_factors, speed_factors[1:])) or speed_factors[-1] <= 0:
        raise BeliefError(f"speed factors must be positive and strictly decreasing, got {list(speed_factors)}")


@dataclass(frozen=True)
class PlanItem:
    """One entry of an agreed task sequence, as particles execute it."""
    task: int
    target: Point
    duration: float = 0.0
    gossip_target: Optional[int] = None
    gossip_rank: int = 1

    @property
    def is_gossip(self) -> bool:
        return self.gossip_target is not None

    def status(self) -> Status:
        if self.is_gossip:
            return Status.gossiping(self.gossip_target, self.gossip_rank)
        return Status.performing(self.task)


@dataclass(frozen=True)
class Particle:
    subject: int
    rank: int
    pose: Point
    speed_factor: float
    status: Status = field(default_factory=Status.exploring)
    goal: Optional[Point] = None
    goal_cell: Optional[int] = None
    utility: Optional[float] = None
    path: Tuple[Point, ...] = ()
    step: int = 0
    dwell: float = 0.0
    stalled: bool = False
    refuted: bool = False


@dataclass(frozen=True)
class BeliefContext:
    stamp: Stamp
    created: int
    tick: int
    members: frozenset
    grid: OccupancyGrid
    particles: Mapping[Tuple[int, int], Particle]
    meeting: Point
    bases: Mapping[int, Point]
    tasks: Tuple[Task, ...] = ()
    plan: Mapping[int, Tuple[PlanItem, ...]] = field(default_factory=dict)
    returning: bool = False
    joint: bool = False
    fresh: bool = True
    # cells known free when the context opened; particles only travel these
    routes: Optional[OccupancyGrid] = None

    def route_grid(self, params: MapParams = DEFAULT_MAP_PARAMS) -> OccupancyGrid:
        return self.routes if self.routes is not None else self.grid.known_free(params)


@dataclass(frozen=True)
class BeliefStore:
    owner: int
    n_ranks: int
    speed_factors: Tuple[float, ...]
    contexts: Mapping[Stamp, BeliefContext]
    source: Mapping[int, Stamp]
    believed: Mapping[int, int]

    def context_for(self, subject: int) -> BeliefContext:
        try:
            return self.contexts[self.source[subject]]
        except KeyError:
            raise ContractViolation(f"robot {self.owner} holds no belief about robot {subject}") from None

    def particle(self, subject: int, rank: int) -> Particle:
        if not 1 <= rank <= self.n_ranks:
            raise ContractViolation(f"rank {rank} outside [1, {self.n_ranks}]")
        p = self.context_for(subject).particles[(subject, rank)]
        if rank < self.believed.get(subject, 1):
            p = replace(p, refuted=True)
        return p

    def believed_particle(self, subject: int) -> Particle:
        return self.particle(subject, self.believed.get(subject, 1))

    @property
    def particles(self) -> List[Particle]:
        return [self.particle(j, b) for j in sorted(self.source) for b in range(1, self.n_ranks + 1)]

    @property
    def common(self) -> Dict[int, Particle]:
        return {j: self.particle(j, 1) for j in sorted(self.source)}

    def empathy(self) -> List[Particle]:
        return [self.particle(self.owner, b) for b in range(1, self.n_ranks + 1)]

    def is_empathy(self, particle: Particle) -> bool:
        return particle.subject == self.owner


# ── context construction ─────────────────────────────────────────────────────

def seed_context(dispositions: Iterable[Disposition], stamp: Stamp, tick: int, grid: OccupancyGrid,
                 params: BeliefParams, bases: Mapping[int, Point], tasks: Sequence[Task] = (),
                 plan: Optional[Mapping[int, Sequence[PlanItem]]] = None,
                 meeting: Optional[Point] = None, returning: bool = False,
                 joint: bool = False) -> BeliefContext:
    """Open a context with every rank of every announcing robot at its announced pose."""
    dispositions = sorted(dispositions, key=lambda d: d.robot)
    if not dispositions:
        raise ContractViolation("a context needs at least one disposition")
    particles = {}
    for d in dispositions:
        for b in range(1, params.n_ranks + 1):
            particles[(d.robot, b)] = Particle(d.robot, b, d.position, params.speed_factors[b - 1], d.status)
    if meeting is None:
        meeting = meeting_point([d.position for d in dispositions], grid, params.map_params)
    return BeliefContext(
        stamp=stamp, created=tick, tick=tick,
        members=frozenset(d.robot for d in dispositions),
        grid=grid, particles=particles, meeting=meeting, bases=dict(bases),
        tasks=tuple(sorted(tasks, key=lambda t: t.id)),
        plan={r: tuple(items) for r, items in sorted((plan or {}).items()) if items},
        returning=returning, joint=joint, fresh=True, routes=grid.known_free(params.map_params),
    )


def init_store(specs: Sequence[RobotSpec], start_poses: Optional[Mapping[int, Point]] = None,
               n_ranks: int = 3, speed_factors: Sequence[float] = (1.0, 0.6, 0.2),
               grid: Optional[OccupancyGrid] = None) -> Dict[int, BeliefStore]:
    """One store per robot, all sharing the pre-deployment context.

    Without a grid the context gets an all-free map covering the start poses.
    """
    check_speed_factors(n_ranks, speed_factors)
    params = BeliefParams(n_ranks, tuple(speed_factors))
    specs = sorted(specs, key=lambda s: s.id)
    if not specs:
        raise ContractViolation("init_store needs at least one robot")
    poses = {s.id: tuple(start_poses[s.id]) if start_poses else s.start for s in specs}
    if grid is None:
        width = int(math.ceil(max(p[0] for p in poses.values()) + 1.0))
        height = int(math.ceil(max(p[1] for p in poses.values()) + 1.0))
        grid = OccupancyGrid.from_cells(max(width, 1), max(height, 1), all_free=True)
    dispositions = [Disposition(s.id, (poses[s.id][0], poses[s.id][1], 0.0), s.capability, 0,
                                Status.exploring()) for s in specs]
    stamp = (0, SYNC, specs[0].id)
    context = seed_context(dispositions, stamp, 0, grid, params, bases=poses)
    return {
        s.id: BeliefStore(s.id, n_ranks, tuple(speed_factors), {stamp: context},
                          {t.id: stamp for t in specs}, {t.id: 1 for t in specs})
        for s in specs
    }


# ── propagation ──────────────────────────────────────────────────────────────

def _route(p: Particle, goal: Point, grid: OccupancyGrid, params: MapParams) -> Particle:
    """Plan from the particle to `goal` over `grid`; a particle with no route holds and is flagged.

    A goal whose own cell is closed is replaced by the nearest open cell centre.
    """
    start = open_cell(grid, grid.clamp_cell(grid.world_to_cell(p.pose)), params)
    goal_cell = grid.world_to_cell(goal)
    target = open_cell(grid, grid.clamp_cell(goal_cell), params)
    if start is None or target is None:
        return replace(p, goal=goal, path=(), stalled=True)
    cells = plan_path(grid, start, target, params)
    if cells is None:
        return replace(p, goal=goal, path=(), stalled=True)
    waypoints = [grid.cell_center(c) for c in cells[1:-1]]
    waypoints.append(goal if target == goal_cell else grid.cell_center(target))
    return replace(p, goal=goal, path=tuple(waypoints), stalled=False)


def _walk(p: Particle, distance: float) -> Particle:
    x, y = p.pose
    path = list(p.path)
    while path and distance > 1e-12:
        tx, ty = path[0]
        d = math.hypot(tx - x, ty - y)
        if d <= distance:
            x, y = tx, ty
            distance -= d
            path.pop(0)
        else:
            x += (tx - x) * distance / d
            y += (ty - y) * distance / d
            distance = 0.0
    return replace(p, pose=(x, y), path=tuple(path))


def _objective(p: Particle, ctx: BeliefContext, frontiers: FrontierSet,
               partition: Optional[FrontierPartition], team: Mapping[int, RobotSpec],
               params: BeliefParams, joint_goal: Optional[Tuple[Point, int, Optional[float]]],
               routes: OccupancyGrid, common: Optional[Particle] = None):
    """(status, goal point, goal frontier cell, frontier utility) for a particle this tick.

    Lower-ranked particles that are done with the plan head wherever the
    subject's common particle is heading.
    """
    items = ctx.plan.get(p.subject, ())
    if p.step < len(items):
        item = items[p.step]
        return item.status(), item.target, None, None
    if ctx.returning:
        return Status.returning(), ctx.bases[p.subject], None, None
    if joint_goal is not None:
        return (Status.exploring(),) + joint_goal
    if (common is not None and common.step >= len(items) and common.goal is not None
            and common.status.kind in (StatusKind.EXPLORING, StatusKind.AT_MEETING)):
        return common.status, common.goal, common.goal_cell, common.utility
    if partition is not None and len(frontiers):
        keep = (not ctx.fresh and p.status.kind is StatusKind.EXPLORING
                and p.goal_cell is not None and p.goal_cell in frontiers and not p.stalled)
        if keep:
            return p.status, p.goal, p.goal_cell, p.utility
        speed = team[p.subject].max_speed * p.speed_factor
        best = best_goal(frontiers, partition, p.subject, routes, p.pose, speed,
                         params.penalty, params.map_params, reachable_only=True)
        if best is not None:
            cell, utility = best
            return Status.exploring(), routes.cell_center(routes.cell_of(cell)), cell, utility
    return Status.meeting(), ctx.meeting, None, None


def _joint_goal(ctx: BeliefContext, frontiers: FrontierSet, partition: Optional[FrontierPartition],
                team: Mapping[int, RobotSpec], params: BeliefParams,
                routes: OccupancyGrid) -> Optional[Tuple[Point, int, Optional[float]]]:
    """Flocking teams all head for the leader's common-particle goal."""
    if not ctx.joint or partition is None or not len(frontiers) or ctx.returning:
        return None
    leader = min(ctx.members)
    lead = ctx.particles[(leader, 1)]
    if ctx.plan.get(leader) and lead.step < len(ctx.plan[leader]):
        return None
    if (not ctx.fresh and lead.goal_cell is not None and lead.goal_cell in frontiers
            and lead.status.kind is StatusKind.EXPLORING):
        return lead.goal, lead.goal_cell, lead.utility
    best = best_goal(frontiers, partition, leader, routes, lead.pose, team[leader].max_speed,
                     params.penalty, params.map_params, reachable_only=True)
    if best is None:
        return None
    return routes.cell_center(routes.cell_of(best[0])), best[0], best[1]


def reachable_frontiers(ctx: BeliefContext, params: MapParams = DEFAULT_MAP_PARAMS) -> FrontierSet:
    """Frontier cells of the believed map that were known free when the context opened."""
    frontiers = extract_frontiers(ctx.grid, params)
    open_cells = ctx.route_grid(params).classify(params).ravel() == CellState.FREE
    return FrontierSet(frozenset(c for c in frontiers.cells if open_cells[c]), frontiers.width)


def advance_context(ctx: BeliefContext, dt: float, team: Mapping[int, RobotSpec],
                    params: BeliefParams) -> BeliefContext:
    """Advance every particle of a context by one noiseless tick.

    Particles travel only over the context's known-free cells; believed
    coverage is marked on the context map around each common particle, over
    a disc of `coverage_scale` times the sensor range, widened to two cells
    when the sensor reaches that far.
    """
    if dt <= 0:
        raise ContractViolation(f"dt must be positive, got {dt}")
    mp = params.map_params
    routes = ctx.route_grid(mp)
    frontiers = reachable_frontiers(ctx, mp)
    partition = None
    if len(frontiers):
        members = sorted(ctx.members)
        partition = partition_frontiers(
            frontiers, {j: ctx.particles[(j, 1)].pose for j in members},
            {j: team[j].partition_weight for j in members}, ctx.grid)
    joint_goal = _joint_goal(ctx, frontiers, partition, team, params, routes)

    advanced = {}
    for key in sorted(ctx.particles):
        p = ctx.particles[key]
        common = advanced.get((p.subject, 1)) if p.rank > 1 else None
        status, goal, goal_cell, utility = _objective(p, ctx, frontiers, partition, team, params,
                                                      joint_goal, routes, common)
        if goal != p.goal or status != p.status or (not p.path and p.stalled):
            p = _route(replace(p, status=status, goal_cell=goal_cell, utility=utility), goal, routes, mp)
            if status != ctx.particles[key].status:
                p = replace(p, dwell=0.0)
        if not p.stalled:
            p = _walk(p, team[p.subject].max_speed * p.speed_factor * dt)

        items = ctx.plan.get(p.subject, ())
        if p.step < len(items) and p.stalled:
            logger.debug("particle %s cannot reach plan item %d; skipping it", key, p.step)
            p = replace(p, step=p.step + 1, dwell=0.0, goal=None, goal_cell=None)
        elif p.step < len(items) and not p.path:
            dwell = p.dwell + dt
            if dwell >= items[p.step].duration - 1e-9:
                p = replace(p, step=p.step + 1, dwell=0.0, goal=None, goal_cell=None)
            else:
                p = replace(p, dwell=dwell)
        advanced[key] = p

    grid = ctx.grid
    for j in sorted(ctx.members):
        sense = team[j].sense_radius
        radius = min(sense, max(params.coverage_scale * sense, 2.0 * grid.resolution))
        grid = mark_covered(grid, [advanced[(j, 1)].pose], radius, mp)
    return replace(ctx, particles=advanced, grid=grid, tick=ctx.tick + 1, fresh=False)


def propagate(store: BeliefStore, dt: float, team: Mapping[int, RobotSpec], params: BeliefParams,
              memo: Optional[MutableMapping[Stamp, BeliefContext]] = None) -> BeliefStore:
    """Advance each context the store holds; `memo` shares results between robots within a tick."""
    contexts = {}
    for stamp in sorted(store.contexts):
        ctx = store.contexts[stamp]
        if memo is not None and stamp in memo and memo[stamp].tick == ctx.tick + 1:
            contexts[stamp] = memo[stamp]
            continue
        contexts[stamp] = advance_context(ctx, dt, team, params)
        if memo is not None:
            memo[stamp] = contexts[stamp]
    return replace(store, contexts=contexts)


# ── rank bookkeeping ─────────────────────────────────────────────────────────

def select_tracked(store: BeliefStore, feasible_ranks: Iterable[int]) -> int:
    """The most likely feasible empathy rank, i.e. the smallest."""
    ranks = set(feasible_ranks)
    if not ranks:
        raise BeliefError("no trackable empathy state")
    if any(not 1 <= b <= store.n_ranks for b in ranks):
        raise ContractViolation(f"feasible ranks {sorted(ranks)} outside [1, {store.n_ranks}]")
    return min(ranks)


def advance_belief_rank(store: BeliefStore, subject: int) -> BeliefStore:
    rank = store.believed.get(subject, 1)
    if rank >= store.n_ranks:
        raise BeliefError("beliefs exhausted")
    believed = dict(store.believed)
    believed[subject] = rank + 1
    logger.debug("robot %d now believes robot %d at rank %d", store.owner, subject, rank + 1)
    return replace(store, believed=believed)


def _prune(contexts: Mapping[Stamp, BeliefContext], source: Mapping[int, Stamp]) -> Dict[Stamp, BeliefContext]:
    live = set(source.values())
    return {s: contexts[s] for s in sorted(live)}


def snap_to_truth(store: BeliefStore, dispositions: Sequence[Disposition],
                  context: Optional[BeliefContext] = None, *, stamp: Optional[Stamp] = None,
                  tick: int = 0, grid: Optional[OccupancyGrid] = None, params: Optional[BeliefParams] = None,
                  **seed_kwargs) -> BeliefStore:
    """Point every announcing robot at a context seeded from its announced disposition.

    Pass the already-seeded `context` when several robots share one announce;
    otherwise one is seeded here from the keyword arguments.
    """
    dispositions = list(dispositions)
    if not dispositions:
        return store
    if context is None:
        params = params or BeliefParams(store.n_ranks, store.speed_factors)
        base_ctx = store.context_for(store.owner) if store.owner in store.source else next(iter(store.contexts.values()))
        context = seed_context(
            dispositions, stamp or (tick, SYNC, min(d.robot for d in dispositions)), tick,
            grid or base_ctx.grid, params, seed_kwargs.pop('bases', base_ctx.bases), **seed_kwargs)
    missing = {d.robot for d in dispositions} - set(context.members)
    if missing:
        raise ContractViolation(f"context {context.stamp} does not carry robots {sorted(missing)}")
    contexts = dict(store.contexts)
    contexts[context.stamp] = context
    source = dict(store.source)
    believed = dict(store.believed)
    for d in dispositions:
        source[d.robot] = context.stamp
        believed[d.robot] = 1
    return replace(store, contexts=_prune(contexts, source), source=source, believed=believed)


def merge_knowledge(store: BeliefStore, peers: Iterable[BeliefStore]) -> BeliefStore:
    """Adopt, per subject, the freshest context any peer holds and the highest rank believed from it."""
    peers = [store] + [p for p in peers if p.owner != store.owner]
    contexts = dict(store.contexts)
    source = {}
    believed = {}
    subjects = sorted(set().union(*(p.source.keys() for p in peers)))
    for j in subjects:
        options = []
        for p in peers:
            if j in p.source:
                stamp = p.source[j]
                options.append(((p.contexts[stamp].created, stamp), p.believed.get(j, 1), p))
        freshest = max(o[0] for o in options)
        chosen = [o for o in options if o[0] == freshest]
        stamp = freshest[1]
        source[j] = stamp
        believed[j] = max(o[1] for o in chosen)
        contexts.setdefault(stamp, chosen[0][2].contexts[stamp])
    return replace(store, contexts=_prune(contexts, source), source=source, believed=believed)


def fork_context(store: BeliefStore, pose: Point, stamp: Stamp, tick: int,
                 status: Optional[Status] = None, grid: Optional[OccupancyGrid] = None,
                 params: MapParams = DEFAULT_MAP_PARAMS) -> BeliefStore:
    """Private re-seed of the owner's particles at `pose`, dropping its agreed plan.

    Other subjects keep their shared contexts; peers never see the fork. With
    `grid` the fork routes over the owner's current map, keeping the believed
    coverage of the context it replaces.
    """
    ctx = store.context_for(store.owner)
    particles = dict(ctx.particles)
    for b in range(1, store.n_ranks + 1):
        particles[(store.owner, b)] = Particle(store.owner, b, (float(pose[0]), float(pose[1])),
                                               store.speed_factors[b - 1], status or Status.exploring())
    plan = {r: items for r, items in ctx.plan.items() if r != store.owner}
    forked = replace(ctx, stamp=stamp, created=tick, particles=particles, plan=plan, fresh=True)
    if grid is not None:
        believed = (grid.classify(params) == CellState.UNKNOWN) & (ctx.grid.classify(params) == CellState.FREE)
        merged = grid.with_log_odds(np.where(believed, ctx.grid.log_odds, grid.log_odds))
        forked = replace(forked, grid=merged, routes=grid.known_free(params))
    contexts = dict(store.contexts)
    contexts[stamp] = forked
    source = dict(store.source)
    source[store.owner] = stamp
    believed_ranks = dict(store.believed)
    believed_ranks[store.owner] = 1
    return replace(store, contexts=_prune(contexts, source), source=source, believed=believed_ranks)
