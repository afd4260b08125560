"""Per-run metrics and the method-comparison summary."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid

from sim.trace import TraceLog

logger = logging.getLogger('episim.sim')

METRIC_COLUMNS = ['scenario', 'method', 'seed', 'faults', 'mission_time', 'complete', 'elapsed', 'coverage_auc',
                  'coverage_final', 'messages', 'tasks_completed', 'n_tasks', 'syncs', 'allocations',
                  'empathy_violations', 'distance']


@dataclass
class RunMetrics:
    scenario: str
    method: str
    seed: int
    faults: int
    n_tasks: int
    mission_time: Optional[float] = None
    elapsed: float = 0.0
    coverage: List[Tuple[float, float]] = field(default_factory=list)
    distance: Dict[int, float] = field(default_factory=dict)
    message_count: int = 0
    tasks_completed: int = 0
    syncs: int = 0
    allocations: int = 0
    empathy_violations: int = 0
    empathy_checks: int = 0
    uncertain_ticks: int = 0
    trace: Optional[TraceLog] = field(default=None, repr=False, compare=False)

    @property
    def complete(self) -> bool:
        return self.mission_time is not None

    @property
    def coverage_final(self) -> float:
        return self.coverage[-1][1] if self.coverage else 0.0

    @property
    def tasks_incomplete(self) -> int:
        return self.n_tasks - self.tasks_completed

    def coverage_auc(self) -> float:
        """Time-averaged covered fraction over the run."""
        if len(self.coverage) < 2:
            return self.coverage_final
        t, frac = np.array(self.coverage).T
        span = t[-1] - t[0]
        if span <= 0:
            return float(frac[-1])
        return float(trapezoid(frac, t) / span)

    def row(self) -> dict:
        return {
            'scenario': self.scenario,
            'method': self.method,
            'seed': self.seed,
            'faults': self.faults,
            'mission_time': self.mission_time if self.complete else np.nan,
            'complete': self.complete,
            'elapsed': round(self.elapsed, 4),
            'coverage_auc': round(self.coverage_auc(), 6),
            'coverage_final': round(self.coverage_final, 6),
            'messages': self.message_count,
            'tasks_completed': self.tasks_completed,
            'n_tasks': self.n_tasks,
            'syncs': self.syncs,
            'allocations': self.allocations,
            'empathy_violations': self.empathy_violations,
            'distance': round(sum(self.distance.values()), 4),
        }


def metrics_frame(runs: Iterable[RunMetrics]) -> pd.DataFrame:
    return pd.DataFrame([r.row() for r in runs], columns=METRIC_COLUMNS)


def save_metrics(runs: Union[Iterable[RunMetrics], pd.DataFrame], path: Union[str, Path]) -> Path:
    frame = runs if isinstance(runs, pd.DataFrame) else metrics_frame(runs)
    path = Path(path)
    frame.to_csv(path, index=False)
    logger.info("%d metric rows written to %s", len(frame), path)
    return path


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean mission time per method and fault count, one row per fault level.

    Incomplete runs count with the time they were cut off at.
    """
    if frame.empty:
        return pd.DataFrame(columns=['faults'])
    data = frame.assign(time=frame['mission_time'].fillna(frame['elapsed']),
                        complete=frame['complete'].astype(float))
    table = data.pivot_table(index='faults', columns='method', values='time', aggfunc='mean')
    completed = data.pivot_table(index='faults', columns='method', values='complete', aggfunc='mean')
    table.columns = [f"{m}_mean_time" for m in table.columns]
    completed.columns = [f"{m}_completion" for m in completed.columns]
    return table.join(completed).reset_index()
