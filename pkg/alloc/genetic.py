"""Warm-started genetic search over allocation chromosomes."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import partial
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from alloc.policy import MalformedChromosome, Policy, decode_policy, fitness
from alloc.problem import AllocationError, AllocProblem, AllocTask
from domain.types import capability_satisfies

logger = logging.getLogger('episim.alloc')


@dataclass(frozen=True)
class GAParams:
    population: int = 50
    generations: int = 100
    mutation_rate: Optional[float] = None
    crossover_rate: float = 0.9
    penalty_weight: float = 1e6
    gossip_threshold: float = 0.5
    selection_epsilon: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        if self.population < 2:
            raise ValueError(f"population must be at least 2, got {self.population}")
        if self.generations < 0:
            raise ValueError(f"generations must be >= 0, got {self.generations}")
        if self.mutation_rate is not None and not 0.0 <= self.mutation_rate <= 1.0:
            raise ValueError(f"mutation_rate must lie in [0, 1], got {self.mutation_rate}")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError(f"crossover_rate must lie in [0, 1], got {self.crossover_rate}")
        if self.penalty_weight <= 0 or self.selection_epsilon <= 0:
            raise ValueError("penalty_weight and selection_epsilon must be positive")

    @classmethod
    def from_config(cls, config: dict) -> "GAParams":
        alloc = dict(config.get('alloc', {}))
        threads = config.get('runtime', {}).get('threads', 1)
        env = os.environ.get('EPISIM_THREADS')
        if env:
            threads = int(env)
        fields = {k: alloc[k] for k in cls.__dataclass_fields__ if k in alloc}
        return cls(threads=max(1, int(threads)), **{k: v for k, v in fields.items() if k != 'threads'})


def _pick_robots(task: AllocTask, pool: Sequence[int], problem: AllocProblem,
                 rng: np.random.Generator) -> List[int]:
    """Uniformly chosen robots covering every required kind; one robot may cover several kinds."""
    caps = {r.id: r.capability for r in problem.robots}
    chosen: List[int] = []
    for kind, count in enumerate(task.required):
        need = count - sum(1 for r in chosen if kind in caps[r])
        if need <= 0:
            continue
        holders = [r for r in pool if kind in caps[r] and r not in chosen]
        picks = rng.choice(len(holders), size=need, replace=False)
        chosen.extend(holders[i] for i in sorted(int(p) for p in picks))
    return sorted(chosen)


def gen_feasible(problem: AllocProblem, rng: np.random.Generator, threshold: float = 0.5) -> np.ndarray:
    """Random zero-violation chromosome.

    Tasks are taken in random order. When the robots reachable so far can
    cover a task (and, while someone is still out of reach, a coin flip says
    so) capable robots are drawn for it; otherwise a connected robot is sent
    to gossip with a robot not yet reached. Gossip tasks still open once the
    real tasks are placed go to random connected robots. Every step takes a
    fresh epoch.
    """
    team = [r.capability for r in problem.robots]
    real = problem.real_tasks
    for task in real:
        if not capability_satisfies(team, task.required, problem.n_kinds):
            raise AllocationError("goal formula unsatisfiable")

    robot_index = {r.id: k for k, r in enumerate(problem.robots)}
    task_index = {t.id: k for k, t in enumerate(problem.tasks)}
    gossip_for = {g.gossip_target: g for g in problem.gossip_tasks}
    seekers = sorted(problem.connected)
    reachable = set(problem.connected)
    tensor = np.zeros(problem.shape, dtype=np.uint8)
    queue = [real[int(k)] for k in rng.permutation(len(real))]
    epoch = 0
    while True:
        outside = [j for j in problem.robot_ids if j not in reachable and j in gossip_for]
        if not queue and not outside:
            break
        if epoch >= problem.n_epochs:
            raise AllocationError(f"ran out of epochs ({problem.n_epochs}) while building a feasible chromosome")
        coverable = False
        if queue:
            pool = sorted(reachable)
            coverable = capability_satisfies([problem.robot(r).capability for r in pool], queue[0].required,
                                             problem.n_kinds)
        if queue and coverable and (not outside or rng.random() < threshold):
            for r in _pick_robots(queue[0], pool, problem, rng):
                tensor[epoch, robot_index[r], task_index[queue[0].id]] = 1
            queue.pop(0)
        elif outside:
            target = outside[int(rng.integers(len(outside)))]
            seeker = seekers[int(rng.integers(len(seekers)))]
            tensor[epoch, robot_index[seeker], task_index[gossip_for[target].id]] = 1
            reachable.add(target)
        else:
            raise AllocationError("goal formula unsatisfiable")
        epoch += 1
    return tensor.ravel()


def _evaluate(population: Sequence[np.ndarray], problem: AllocProblem, params: GAParams,
              executor: Optional[ThreadPoolExecutor]) -> np.ndarray:
    score = partial(fitness, problem=problem, penalty_weight=params.penalty_weight)
    if executor is None:
        return np.array([score(c) for c in population])
    return np.array(list(executor.map(score, population)))


def _roulette(fits: np.ndarray, epsilon: float) -> np.ndarray:
    weights = fits.max() - fits + epsilon
    return weights / weights.sum()


def ga_solve(problem: AllocProblem, params: GAParams = GAParams(),
             rng: Optional[np.random.Generator] = None) -> Policy:
    """Best zero-violation policy found; `policy.history` holds (generation, best, mean) rows."""
    rng = rng if rng is not None else np.random.default_rng()
    length = problem.chromosome_length
    if not problem.tasks:
        policy = decode_policy(np.zeros(length, dtype=np.uint8), problem, params.penalty_weight)
        return replace(policy, chromosome=np.zeros(length, dtype=np.uint8), history=())

    population = [gen_feasible(problem, rng, params.gossip_threshold) for _ in range(params.population)]
    rate = params.mutation_rate if params.mutation_rate is not None else 1.0 / length
    history: List[Tuple[int, float, float]] = []

    executor = ThreadPoolExecutor(max_workers=params.threads) if params.threads > 1 else None
    try:
        fits = _evaluate(population, problem, params, executor)
        history.append((0, float(fits.min()), float(fits.mean())))
        for generation in range(1, params.generations + 1):
            elite = population[int(np.argmin(fits))].copy()
            probs = _roulette(fits, params.selection_epsilon)
            offspring = [elite]
            while len(offspring) < params.population:
                i, j = rng.choice(len(population), size=2, p=probs)
                a, b = population[int(i)].copy(), population[int(j)].copy()
                if length > 1 and rng.random() < params.crossover_rate:
                    cut = int(rng.integers(1, length))
                    a[cut:], b[cut:] = population[int(j)][cut:], population[int(i)][cut:]
                for child in (a, b):
                    child ^= (rng.random(length) < rate).astype(np.uint8)
                    if len(offspring) < params.population:
                        offspring.append(child)
            population = offspring
            fits = _evaluate(population, problem, params, executor)
            history.append((generation, float(fits.min()), float(fits.mean())))
            logger.debug("generation %d: best %.4f mean %.4f", generation, fits.min(), fits.mean())
    finally:
        if executor is not None:
            executor.shutdown()

    for k in np.argsort(fits, kind="stable"):
        try:
            policy = decode_policy(population[int(k)], problem, params.penalty_weight)
        except MalformedChromosome:
            continue
        if policy.feasible:
            logger.info("allocation: fitness %.3f after %d generations", policy.fitness, params.generations)
            return replace(policy, chromosome=population[int(k)].copy(), history=tuple(history))
        break
    raise AllocationError("no feasible allocation found")


def history_frame(policy: Policy) -> pd.DataFrame:
    return pd.DataFrame(list(policy.history), columns=['generation', 'best', 'mean'])


def save_history(policy: Policy, path: Union[str, Path]) -> Path:
    path = Path(path)
    history_frame(policy).to_csv(path, index=False)
    return path
