"""Fixed-tick mission simulator for the epistemic planner and its two baselines.

Each tick runs, in order: failures, sensing, connectivity, synchronisation of
connected components, perception (task discovery and particle absence),
particle propagation, control and dynamics, task progress and metrics. All
randomness comes from generators seeded by (scenario seed, purpose, robot), and
every per-robot loop runs in robot-id order, so a scenario and seed always
produce the same trace.

- proposed: limited range; robots predict each other with belief particles and
  gossip to share plans with robots they cannot reach.
- flock: limited range, but any move that would split the team is refused.
- ideal: unlimited range and a full synchronisation every tick.
"""

from __future__ import annotations

import logging
import math
from dataclasses import replace
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from alloc.genetic import GAParams, ga_solve
from alloc.problem import AllocationError, AllocProblem, AllocRobot, AllocTask, Trajectory, synthesize_gossip_tasks
from belief.particles import (
    FORK, SYNC, BeliefError, BeliefParams, PlanItem, advance_belief_rank, fork_context, init_store,
    merge_knowledge, propagate, seed_context, select_tracked, snap_to_truth,
)
from config import DEFAULT_CONFIG, merge_configs, validate_config
from domain.types import (
    AERIAL, Disposition, Point, Status, StatusKind, Task, TaskPhase, capability_satisfies, task_progress,
)
from epistemic.logic import EpistemicError, EpistemicState, Not, Present, Track, initial_state, true_world_certain
from epistemic.updates import Announce, Perceive, local_announce, product_update
from gridworld.dynamics import ControlGains, KinematicState, apf_step, nearby_obstacles, step_dynamics
from gridworld.occupancy import CellState, MapParams, OccupancyGrid, extract_frontiers, sense
from gridworld.planning import open_cell, travel_costs
from sim.agents import MapLedger, RobotAgent, TrackingMode, combine, next_waypoint
from sim.connectivity import ConnectivityGraph, connectivity
from sim.metrics import RunMetrics
from sim.scenario import METHODS, Scenario, ScenarioError, validate_scenario
from sim.trace import TraceLog

logger = logging.getLogger('episim.sim')

ProgressCallback = Callable[[int, str], None]


class MissionSimulator:
    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = merge_configs(DEFAULT_CONFIG, config or {})
        validate_config(self.config)
        self.map_params = MapParams.from_config(self.config)
        self.gains = ControlGains.from_config(self.config)
        self.ga_params = GAParams.from_config(self.config)

        control = self.config['control']
        self.headroom = control['speed_headroom']
        self.noise_std = control['noise_std']
        self.aerial_ignores_obstacles = control['aerial_ignores_obstacles']

        sim = self.config['sim']
        self.default_tick = sim['tick']
        self.sync_interval = sim['sync_interval']
        self.max_time = sim['max_time']
        self.sample_interval = sim['position_sample_interval']
        self.hold_timeout = sim['hold_timeout']
        self.max_worlds = sim['max_worlds']

        self.penalty = self.config['coverage']['out_of_region_penalty']
        self.coverage_scale = self.config['belief']['coverage_scale']
        self.arrival_radius = self.config['coverage']['arrival_radius']
        self.fixed_point_iterations = self.config['alloc']['fixed_point_iterations']
        self.trace = TraceLog()

    # ── public entry point ──────────────────────────────────────────────────

    def run(self, scenario: Scenario, method: Optional[str] = None,
            progress_callback: Optional[ProgressCallback] = None,
            time_cap: Optional[float] = None) -> RunMetrics:
        """Simulate until the mission completes or `time_cap` seconds pass.

        Args:
            scenario: a validated scenario; its own method is used unless `method` is given
            method: one of proposed, flock, ideal
            progress_callback: Optional callback for progress updates (progress_percent, status_message)
            time_cap: simulated seconds; defaults to sim.max_time

        Returns:
            RunMetrics with the trace attached; mission_time is None when the cap was hit
        """
        method = method or scenario.method
        if method not in METHODS:
            raise ScenarioError(f"unknown method '{method}', expected one of {', '.join(METHODS)}")
        validate_scenario(scenario, self.map_params)

        self._update_progress(progress_callback, 0, f"Starting {scenario.name} ({method})...")
        self._setup(scenario, method)
        cap = float(time_cap if time_cap is not None else self.max_time)
        n_ticks = max(1, int(math.ceil(cap / self.dt - 1e-9)))

        complete = False
        reported = 0
        while self.tick < n_ticks:
            complete = self._step()
            self.tick += 1
            if complete:
                break
            percent = int(100 * self.tick / n_ticks)
            if percent >= reported + 10:
                reported = percent - percent % 10
                self._update_progress(progress_callback, reported, f"t = {self.tick * self.dt:.1f} s")

        self._finish(complete)
        self._update_progress(progress_callback, 100, "Mission complete" if complete else "Time cap reached")
        return self.metrics

    def _update_progress(self, progress_callback: Optional[Callable], percent: int, message: str):
        """Update progress if callback is provided."""
        if progress_callback:
            progress_callback(percent, message)

    # ── setup ───────────────────────────────────────────────────────────────

    def _setup(self, scenario: Scenario, method: str):
        mp = self.map_params
        self.scenario = scenario
        self.method = method
        self.dt = scenario.tick if scenario.tick is not None else self.default_tick
        self.team = scenario.team
        self.n_ranks = scenario.n_ranks
        self.belief_params = BeliefParams(scenario.n_ranks, scenario.speed_factors, self.penalty, mp,
                                          self.coverage_scale)
        self.truth = scenario.truth_grid(mp)
        self.prior = scenario.prior_grid(mp)
        self.truth_free = self.truth.classify(mp) == CellState.FREE
        self.bases: Dict[int, Point] = {r.id: r.start for r in scenario.robots}

        stores = init_store(scenario.robots, self.bases, scenario.n_ranks, scenario.speed_factors, self.prior)
        self.agents: Dict[int, RobotAgent] = {}
        for spec in sorted(scenario.robots, key=lambda r: r.id):
            self.agents[spec.id] = RobotAgent(
                spec=spec,
                state=KinematicState(spec.start, 0.0, spec.max_speed),
                ledger=MapLedger(spec.id, self.prior, mp),
                store=stores[spec.id],
                rng=np.random.default_rng([scenario.seed, 1, spec.id]),
                base=spec.start,
            )
        self.truth_tasks: Dict[int, Task] = {t.id: t for t in scenario.tasks}
        self.dwell: Dict[int, float] = {t.id: 0.0 for t in scenario.tasks}
        self.pending = sorted(scenario.failures, key=lambda f: (f.time, f.robot))
        self.knowledge: EpistemicState = initial_state(self.agents)
        self.tick = 0
        self.returned: set = set()
        self.world_cap_hit = False

        self.trace = TraceLog()
        self.metrics = RunMetrics(scenario.name, method, scenario.seed, len(scenario.failures), len(scenario.tasks))
        self.metrics.trace = self.trace
        self.trace.emit(0, "start", scenario=scenario.name, method=method, seed=scenario.seed,
                        robots=[[r.id, r.kind, sorted(r.capability), r.start] for r in scenario.robots],
                        tasks=[[t.id, t.position, list(t.required)] for t in scenario.tasks],
                        size=[self.truth.width, self.truth.height], resolution=scenario.resolution,
                        failures=len(scenario.failures))
        logger.info("simulating %s with %d robots, %d tasks, method %s, seed %d",
                    scenario.name, len(self.agents), len(self.truth_tasks), method, scenario.seed)

    def _agents(self) -> List[Tuple[int, RobotAgent]]:
        return sorted(self.agents.items())

    def _poses(self) -> Dict[int, Point]:
        return {i: a.position for i, a in self._agents()}

    # ── one tick ────────────────────────────────────────────────────────────

    def _step(self) -> bool:
        self._apply_failures()
        self._sense()
        graph = connectivity(self._poses(), self.team, unlimited=self.method == "ideal")
        self._synchronise(graph)
        self._perceive(graph)
        self._propagate()
        self._control(graph)
        self._progress()
        self._record()
        return self._mission_complete()

    def _apply_failures(self):
        now = self.tick * self.dt
        while self.pending and self.pending[0].time <= now + 1e-9:
            failure = self.pending.pop(0)
            agent = self.agents[failure.robot]
            agent.level = failure.level
            agent.tracked = max(agent.tracked, failure.level)
            self.trace.emit(self.tick, "failure", robot=failure.robot, level=failure.level)
            logger.info("robot %d degraded to level %d at t=%.1f", failure.robot, failure.level, now)

    def _sense(self):
        for _, agent in self._agents():
            agent.readings = sense(self.truth, agent.position, agent.spec.sense_radius, self.map_params)
            agent.ledger.record(agent.position, agent.readings, agent.spec.sense_radius)

    # ── synchronisation ─────────────────────────────────────────────────────

    def _synchronise(self, graph: ConnectivityGraph):
        interval = max(1, int(round(self.sync_interval / self.dt)))
        whole = frozenset(self.agents)
        for component in graph.components:
            component = frozenset(component)
            if len(component) < 2 and component != whole:
                continue
            members = [self.agents[i] for i in sorted(component)]
            changed = any(a.last_component != component for a in members)
            triggered = any(a.trigger for a in members)
            due = self.method == "ideal" or any(self.tick - a.last_sync >= interval for a in members)
            if changed or triggered or due:
                self._sync_component(component, changed, triggered)
        for i, agent in self._agents():
            agent.last_component = frozenset(graph.component_of(i))

    def _sync_component(self, component: frozenset, changed: bool, triggered: bool):
        """Pool maps, tasks and beliefs across a connected component.

        A full-team sync always opens a fresh shared context. A partial one
        keeps the members on the contexts outsiders still predict them by,
        unless the members agree on a new plan or one of them has left its
        particle to chase a peer or wait at a task.
        """
        ids = sorted(component)
        leader = ids[0]
        members = [self.agents[i] for i in ids]
        whole = component == frozenset(self.agents)

        for a in members:
            for b in members:
                if a is not b:
                    a.ledger.absorb(b.ledger)
        known: Dict[int, Task] = {}
        for a in members:
            for tid, task in a.known_tasks.items():
                if tid not in known or task.phase > known[tid].phase:
                    known[tid] = task
        exhausted = set().union(*(a.exhausted for a in members)) - component
        peers = [a.store for a in members]
        merged = [merge_knowledge(a.store, peers) for a in members]
        for a, store in zip(members, merged):
            a.known_tasks = dict(known)
            a.exhausted = set(exhausted)
            a.store = store

        dispositions = [self._disposition(a) for a in members]
        announce = Announce(leader, tuple(dispositions), frozenset(Present(tid) for tid in known))
        if whole:
            self._epistemic(lambda s: product_update(s, announce, self.n_ranks), collapsing=True)
        elif changed or triggered:
            self._epistemic(lambda s: local_announce(s, component, announce))

        open_tasks = [known[tid] for tid in sorted(known) if known[tid].open]
        reallocated = bool(open_tasks) and (changed or triggered)
        plan = self._allocate(ids, leader, open_tasks) if reallocated else None
        if plan is None:
            reallocated = False
            plan = {a.id: self._carry_plan(a, known, component) for a in members}

        reseeded = whole or reallocated or any(self._off_plan(a, plan[a.id]) for a in members)
        returning = False
        if reseeded:
            grid = self.agents[leader].ledger.grid()
            returning = whole and not open_tasks and not self._frontier_left(grid, [a.position for a in members])
            context = seed_context(dispositions, (self.tick, SYNC, leader), self.tick, grid, self.belief_params,
                                   self.bases, tasks=[known[tid] for tid in sorted(known)], plan=plan,
                                   meeting=None if whole else self.agents[leader].rendezvous,
                                   returning=returning, joint=self.method == "flock")
            for a in members:
                a.store = snap_to_truth(a.store, dispositions, context)
                a.tracked = a.level
                a.mode = TrackingMode.FOLLOW
                a.chase_target = None
                a.hold_task = None
                if whole:
                    a.rendezvous = context.meeting
        else:
            tracked = {b.id: b.tracked for b in members}
            for a in members:
                a.store = replace(a.store, believed={**a.store.believed, **tracked})
        for a in members:
            a.trigger = False
            a.last_sync = self.tick

        self.metrics.syncs += 1
        self.metrics.message_count += len(ids)
        self.trace.emit(self.tick, "sync", members=ids, leader=leader, worlds=len(self.knowledge),
                        reallocated=reallocated, reseeded=reseeded, returning=returning)
        if returning:
            for i in ids:
                if i not in self.returned:
                    self.returned.add(i)
                    self.trace.emit(self.tick, "return", robot=i)

    def _off_plan(self, agent: RobotAgent, carried: Sequence[PlanItem]) -> bool:
        """True when the robot is not simply following its particle through its agreed plan."""
        if agent.chase_target is not None or agent.hold_task is not None:
            return True
        return tuple(carried) != self._remaining_after(agent, lambda it: False)

    def _disposition(self, agent: RobotAgent) -> Disposition:
        if agent.chase_target is not None:
            status = Status.gossiping(agent.chase_target, agent.store.believed.get(agent.chase_target, 1))
        elif agent.hold_task is not None:
            status = Status.performing(agent.hold_task)
        else:
            status = agent.store.particle(agent.id, agent.tracked).status
        x, y = agent.position
        return Disposition(agent.id, (x, y, agent.state.heading), agent.spec.capability,
                           agent.ledger.version, status)

    def _carry_plan(self, agent: RobotAgent, known: Mapping[int, Task],
                    component: frozenset) -> Tuple[PlanItem, ...]:
        """What is left of the robot's agreed sequence, minus finished tasks and gossip now moot."""
        ctx = agent.store.context_for(agent.id)
        items = ctx.plan.get(agent.id, ())
        step = ctx.particles[(agent.id, agent.tracked)].step
        remaining = list(items[step:])
        if agent.hold_task is not None and all(it.task != agent.hold_task or it.is_gossip for it in remaining):
            remaining = [it for it in items if it.task == agent.hold_task and not it.is_gossip][:1] + remaining
        kept = []
        for it in remaining:
            if it.is_gossip and it.gossip_target in component:
                continue
            if not it.is_gossip and it.task in known and not known[it.task].open:
                continue
            kept.append(it)
        return tuple(kept)

    def _remaining_after(self, agent: RobotAgent, done: Callable[[PlanItem], bool]) -> Tuple[PlanItem, ...]:
        items = agent.store.context_for(agent.id).plan.get(agent.id, ())
        for k, it in enumerate(items):
            if done(it):
                return tuple(items[k + 1:])
        step = agent.store.particle(agent.id, agent.tracked).step
        return tuple(items[step:])

    def _epistemic(self, update: Callable[[EpistemicState], EpistemicState], collapsing: bool = False):
        if not collapsing and len(self.knowledge) * 2 > self.max_worlds:
            if not self.world_cap_hit:
                logger.warning("epistemic state reached %d worlds; private updates suspended until the next "
                               "full synchronisation", len(self.knowledge))
                self.world_cap_hit = True
            return
        try:
            self.knowledge = update(self.knowledge)
        except EpistemicError as e:
            logger.debug("epistemic update skipped at tick %d: %s", self.tick, e)
            return
        if collapsing:
            self.world_cap_hit = False

    # ── allocation ──────────────────────────────────────────────────────────

    def _allocate(self, ids: Sequence[int], leader: int,
                  open_tasks: Sequence[Task]) -> Optional[Dict[int, Tuple[PlanItem, ...]]]:
        """Run the GA for the robots in `ids`; None when no feasible policy exists.

        Under the proposed method every robot outside `ids` that the leader
        still has a belief about joins through a gossip task seeking its
        believed particle. Connected robots plan at their actual speed.
        """
        lead = self.agents[leader]
        component = frozenset(ids)
        tasks = [AllocTask(t.id, t.position, t.required, t.duration, t.radius) for t in open_tasks]
        robots = [AllocRobot(i, self.agents[i].position, self.team[i].capability,
                             self.team[i].max_speed * self.scenario.speed_factors[self.agents[i].level - 1])
                  for i in ids]
        trajectories: Dict[int, Trajectory] = {}
        outsiders = []
        if self.method == "proposed":
            outsiders = [j for j in sorted(self.team) if j not in component and j not in lead.exhausted]
        for j in outsiders:
            p = lead.store.believed_particle(j)
            speed = self.team[j].max_speed * p.speed_factor
            robots.append(AllocRobot(j, p.pose, self.team[j].capability, speed))
            trajectories[j] = Trajectory(p.pose, p.path, speed)
        if outsiders:
            first_id = max(self.truth_tasks, default=-1) + 1
            tasks += synthesize_gossip_tasks(robots, component, trajectories, first_id, lead.store.believed)
        elif not all(capability_satisfies([self.team[i].capability for i in ids], t.required) for t in open_tasks):
            logger.warning("robots %s cannot cover the open tasks on their own", ids)
            return None

        problem = AllocProblem(tuple(tasks), tuple(robots), component, trajectories, lead.ledger.grid(),
                               self.map_params, n_kinds=self.scenario.n_kinds,
                               fixed_point_iterations=self.fixed_point_iterations)
        rng = np.random.default_rng([self.scenario.seed, self.tick, leader])
        try:
            policy = ga_solve(problem, self.ga_params, rng)
        except AllocationError as e:
            logger.warning("allocation by robot %d at t=%.1f failed: %s", leader, self.tick * self.dt, e)
            return None

        plan: Dict[int, Tuple[PlanItem, ...]] = {}
        gossip = []
        for i in ids:
            items = []
            for tid in policy.sequences.get(i, ()):
                task = problem.task(tid)
                if task.is_gossip:
                    meet = policy.meeting_points.get(tid, task.position)
                    items.append(PlanItem(tid, meet, 0.0, task.gossip_target, task.gossip_rank))
                    gossip.append((i, task.gossip_target, task.gossip_rank, meet))
                else:
                    items.append(PlanItem(tid, task.position, task.duration))
            plan[i] = tuple(items)

        self.metrics.allocations += 1
        self.trace.emit(self.tick, "alloc", leader=leader, members=list(ids),
                        sequences={i: [t for t in policy.sequences.get(i, ()) if t in self.truth_tasks]
                                   for i in ids},
                        fitness=policy.fitness)
        for seeker, target, rank, meet in gossip:
            self.trace.emit(self.tick, "gossip", seeker=seeker, target=target, rank=rank, meeting=meet)
        return plan

    def _fork(self, agent: RobotAgent, items: Sequence[PlanItem] = (), status: Optional[Status] = None):
        """Privately re-seed the robot's own particles here, optionally with a new plan."""
        stamp = (self.tick, FORK, agent.id)
        store = fork_context(agent.store, agent.position, stamp, self.tick, status, agent.ledger.grid(),
                             self.map_params)
        if items:
            ctx = store.contexts[stamp]
            plan = dict(ctx.plan)
            plan[agent.id] = tuple(items)
            store = replace(store, contexts={**store.contexts, stamp: replace(ctx, plan=plan)})
        agent.store = store
        agent.tracked = agent.level
        agent.mode = TrackingMode.FOLLOW
        agent.chase_target = None
        agent.hold_task = None

    # ── perception ──────────────────────────────────────────────────────────

    def _perceive(self, graph: ConnectivityGraph):
        for i, agent in self._agents():
            component = graph.component_of(i)
            self._discover(agent)
            if self.method == "proposed":
                self._check_absence(agent, component)
            if agent.trigger and len(component) == 1 and len(self.agents) > 1:
                self._solo_allocate(agent)

    def _discover(self, agent: RobotAgent):
        seen = {cell for cell, _ in agent.readings}
        for tid in sorted(self.truth_tasks):
            task = self.truth_tasks[tid]
            if self.truth.world_to_cell(task.position) not in seen:
                continue
            if tid in agent.known_tasks:
                if task.phase > agent.known_tasks[tid].phase:
                    agent.known_tasks[tid] = task
                continue
            if task.phase is TaskPhase.UNDISCOVERED:
                task = task.advance(TaskPhase.DISCOVERED)
                self.truth_tasks[tid] = task
            agent.known_tasks[tid] = task
            agent.trigger = agent.trigger or task.open
            self.trace.emit(self.tick, "discover", robot=agent.id, task=tid)
            if self.method == "ideal":
                announce = Announce(agent.id, (self._disposition(agent),), frozenset({Present(tid)}))
                self._epistemic(lambda s: product_update(s, announce, self.n_ranks), collapsing=True)
            else:
                seen_task = Perceive(agent.id, Present(tid))
                self._epistemic(lambda s: product_update(s, seen_task, self.n_ranks))

    def _check_absence(self, agent: RobotAgent, component: frozenset):
        """A robot chasing a peer that reaches the peer's believed spot without a link revises that belief."""
        j = agent.chase_target
        if j is None or j in component or j in agent.exhausted:
            return
        believed = agent.store.believed_particle(j)
        reach = min(agent.spec.comm_radius, self.team[j].comm_radius) - self.scenario.resolution
        if math.dist(agent.position, believed.pose) > reach:
            return
        rank = agent.store.believed.get(j, 1)
        self.trace.emit(self.tick, "absence", robot=agent.id, subject=j, rank=rank)
        try:
            agent.store = advance_belief_rank(agent.store, j)
        except BeliefError:
            agent.exhausted.add(j)
            self.trace.emit(self.tick, "exhausted", robot=agent.id, subject=j)
            logger.info("robot %d lost track of robot %d", agent.id, j)
            self._fork(agent, self._remaining_after(agent, lambda it: it.gossip_target == j))
            return
        revised = Perceive(agent.id, Not(Track(j, rank)), revision=j)
        self._epistemic(lambda s: product_update(s, revised, self.n_ranks))
        if agent.open_tasks():
            agent.trigger = True

    def _solo_allocate(self, agent: RobotAgent):
        agent.trigger = False
        open_tasks = list(agent.open_tasks().values())
        if not open_tasks:
            return
        plan = self._allocate([agent.id], agent.id, open_tasks)
        if plan is not None:
            self._fork(agent, plan.get(agent.id, ()))

    # ── motion ──────────────────────────────────────────────────────────────

    def _propagate(self):
        memo: Dict = {}
        for _, agent in self._agents():
            agent.store = propagate(agent.store, self.dt, self.team, self.belief_params, memo)

    def _select_rank(self, agent: RobotAgent):
        """Most likely empathy rank the robot can still follow at its failure level."""
        agent.tracked = select_tracked(agent.store, range(max(agent.tracked, agent.level), self.n_ranks + 1))

    def _update_mode(self, agent: RobotAgent, component: frozenset):
        if agent.chase_target is not None and agent.chase_target in component:
            agent.chase_target = None
        if agent.hold_task is not None:
            task = self.truth_tasks[agent.hold_task]
            if (self.tick - agent.hold_since) * self.dt > self.hold_timeout:
                self.trace.emit(self.tick, "hold_timeout", robot=agent.id, task=task.id)
                logger.info("robot %d gave up waiting at task %d", agent.id, task.id)
                self._fork(agent, self._remaining_after(agent, lambda it: it.task == task.id and not it.is_gossip))
            return
        if agent.chase_target is not None:
            return

        self._select_rank(agent)
        p = agent.store.particle(agent.id, agent.tracked)
        if p.status.kind is StatusKind.GOSSIPING:
            target = p.status.target
            if self.method == "proposed" and target not in component and target not in agent.exhausted:
                agent.chase_target = target
        elif p.status.kind is StatusKind.PERFORMING_TASK:
            task = self.truth_tasks.get(p.status.task)
            if task is not None and task.open and math.dist(agent.position, task.position) <= task.radius:
                agent.hold_task = task.id
                agent.hold_since = self.tick

    def _command(self, agent: RobotAgent, component: frozenset) -> KinematicState:
        self._update_mode(agent, component)
        nominal = self.scenario.speed_factors[agent.level - 1] * agent.spec.max_speed
        if agent.hold_task is not None:
            agent.mode = TrackingMode.DIRECT
            goal, cap = self.truth_tasks[agent.hold_task].position, nominal
        elif agent.chase_target is not None:
            agent.mode = TrackingMode.DIRECT
            goal, cap = agent.store.believed_particle(agent.chase_target).pose, nominal
        else:
            agent.mode = TrackingMode.FOLLOW
            goal = agent.store.particle(agent.id, agent.tracked).pose
            cap = self.headroom * self.scenario.speed_factors[agent.tracked - 1] * agent.spec.max_speed

        grid = agent.ledger.grid()
        waypoint = next_waypoint(grid, agent.position, goal, self.map_params)
        ignore = self.aerial_ignores_obstacles and AERIAL in agent.spec.capability
        obstacles = [] if ignore else nearby_obstacles(grid, agent.position, self.gains.influence_radius,
                                                       self.map_params)
        command = apf_step(agent.position, waypoint, obstacles, self.gains, cap)
        state = replace(agent.state, speed_cap=cap)
        moved, _ = step_dynamics(state, command, self.noise_std, self.dt, agent.rng, self.truth,
                                 self.map_params, ignore)
        return moved

    def _control(self, graph: ConnectivityGraph):
        moves = {i: self._command(agent, graph.component_of(i)) for i, agent in self._agents()}
        if self.method == "flock":
            self._hold_flock(moves)
        for i, agent in self._agents():
            agent.distance += math.dist(agent.position, moves[i].position)
            agent.state = moves[i]

    def _hold_flock(self, moves: Dict[int, KinematicState]):
        """Accept moves in id order; a move that would split the team is replaced by standing still."""
        poses = self._poses()
        for i in sorted(moves):
            trial = dict(poses)
            trial[i] = moves[i].position
            if connectivity(trial, self.team).is_connected:
                poses = trial
            else:
                moves[i] = replace(self.agents[i].state, speed_cap=moves[i].speed_cap)

    # ── tasks, metrics, completion ──────────────────────────────────────────

    def _progress(self):
        positions = self._poses()
        caps = {i: self.team[i].capability for i in positions}
        for tid in sorted(self.truth_tasks):
            task = self.truth_tasks[tid]
            if not task.open:
                continue
            updated, self.dwell[tid] = task_progress(task, positions, caps, None, self.dwell[tid], self.dt)
            self.truth_tasks[tid] = updated
            if updated.phase is not TaskPhase.COMPLETE:
                continue
            present = [i for i in sorted(positions) if math.dist(positions[i], updated.position) <= updated.radius]
            self.metrics.tasks_completed += 1
            self.trace.emit(self.tick, "task_complete", task=tid, robots=present)
            logger.info("task %d completed at t=%.1f by robots %s", tid, (self.tick + 1) * self.dt, present)
            for i in present:
                agent = self.agents[i]
                agent.known_tasks[tid] = updated
                if agent.hold_task == tid:
                    self._fork(agent, self._remaining_after(agent, lambda it: it.task == tid and not it.is_gossip))
                    agent.trigger = bool(agent.open_tasks())

    def _union_grid(self) -> OccupancyGrid:
        return combine(self.prior, [a.ledger.contribution for _, a in self._agents()], self.map_params)

    def coverage_fraction(self, grid: Optional[OccupancyGrid] = None) -> float:
        """Share of the truly free cells the team has mapped as free."""
        grid = grid or self._union_grid()
        total = int(self.truth_free.sum())
        if total == 0:
            return 1.0
        known = (grid.classify(self.map_params) == CellState.FREE) & self.truth_free
        return float(known.sum()) / total

    def _frontier_left(self, grid: OccupancyGrid, positions: Iterable[Point]) -> bool:
        """True when some frontier cell of `grid` can be reached from one of `positions`."""
        frontiers = extract_frontiers(grid, self.map_params)
        if not len(frontiers):
            return False
        reach = np.zeros(grid.width * grid.height, dtype=bool)
        for pos in positions:
            start = open_cell(grid, grid.clamp_cell(grid.world_to_cell(pos)), self.map_params)
            if start is not None:
                reach |= np.isfinite(travel_costs(grid, start, self.map_params)).ravel()
        return any(reach[c] for c in frontiers)

    def _record(self):
        sample = max(1, int(round(self.sample_interval / self.dt)))
        if self.tick % sample == 0:
            t = (self.tick + 1) * self.dt
            self.metrics.coverage.append((t, self.coverage_fraction()))
            for i, agent in self._agents():
                x, y = agent.position
                self.trace.emit(self.tick, "pose", robot=i, x=x, y=y, rank=agent.tracked, mode=agent.mode.value)
            for i, agent in self._agents():
                for p in agent.store.particles:
                    self.trace.emit(self.tick, "particle", owner=i, subject=p.subject, rank=p.rank,
                                    x=p.pose[0], y=p.pose[1], status=p.status.label())
        for i, agent in self._agents():
            p = agent.store.particle(i, agent.tracked)
            if p.goal_cell is not None and p.goal_cell != agent.last_goal:
                gx, gy = p.goal if p.goal is not None else agent.ledger.grid().cell_center(p.goal_cell)
                self.trace.emit(self.tick, "goal", robot=i, cell=p.goal_cell, rank=agent.tracked, x=gx, y=gy,
                                utility=p.utility)
            agent.last_goal = p.goal_cell
        self._audit_empathy()
        if not true_world_certain(self.knowledge):
            self.metrics.uncertain_ticks += 1

    def _audit_empathy(self):
        """Count observer/subject pairs sharing a context whose rank-1 particle strays beyond one cell."""
        for i, observer in self._agents():
            for j, subject in self._agents():
                if i == j or subject.level != 1 or subject.mode is not TrackingMode.FOLLOW or subject.tracked != 1:
                    continue
                if observer.store.source.get(j) != subject.store.source.get(j):
                    continue
                self.metrics.empathy_checks += 1
                if math.dist(subject.position, observer.store.particle(j, 1).pose) > self.scenario.resolution:
                    self.metrics.empathy_violations += 1

    def _mission_complete(self) -> bool:
        if any(t.phase is not TaskPhase.COMPLETE for t in self.truth_tasks.values()):
            return False
        if any(math.dist(a.position, a.base) > self.arrival_radius for _, a in self._agents()):
            return False
        return not self._frontier_left(self._union_grid(), [a.position for _, a in self._agents()])

    def _finish(self, complete: bool):
        elapsed = round(self.tick * self.dt, 6)
        union = self._union_grid()
        coverage = self.coverage_fraction(union)
        if not self.metrics.coverage or self.metrics.coverage[-1][0] < elapsed:
            self.metrics.coverage.append((elapsed, coverage))
        self.metrics.elapsed = elapsed
        self.metrics.mission_time = elapsed if complete else None
        self.metrics.distance = {i: a.distance for i, a in self._agents()}
        self.trace.emit(self.tick, "end", complete=complete, time=elapsed,
                        tasks_completed=self.metrics.tasks_completed, coverage=coverage,
                        map=union.to_ascii(self.map_params).splitlines())
        if complete:
            logger.info("%s (%s) complete at t=%.1f s", self.scenario.name, self.method, elapsed)
        else:
            logger.warning("%s (%s) hit the time cap at t=%.1f s with %d/%d tasks done", self.scenario.name,
                           self.method, elapsed, self.metrics.tasks_completed, self.metrics.n_tasks)


def run_scenario(scenario: Scenario, config: Optional[Dict[str, Any]] = None,
                 progress_callback: Optional[ProgressCallback] = None,
                 time_cap: Optional[float] = None) -> RunMetrics:
    return MissionSimulator(config).run(scenario, scenario.method, progress_callback, time_cap)


def run_baseline_flock(scenario: Scenario, config: Optional[Dict[str, Any]] = None,
                       progress_callback: Optional[ProgressCallback] = None,
                       time_cap: Optional[float] = None) -> RunMetrics:
    return MissionSimulator(config).run(scenario, "flock", progress_callback, time_cap)


def run_baseline_ideal(scenario: Scenario, config: Optional[Dict[str, Any]] = None,
                       progress_callback: Optional[ProgressCallback] = None,
                       time_cap: Optional[float] = None) -> RunMetrics:
    return MissionSimulator(config).run(scenario, "ideal", progress_callback, time_cap)
