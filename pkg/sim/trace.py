"""Newline-delimited JSON event log of a run."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Union

import numpy as np

logger = logging.getLogger('episim.sim')

EVENT_KINDS = (
    "start", "failure", "sync", "discover", "absence", "exhausted", "alloc", "gossip",
    "task_complete", "hold_timeout", "return", "goal", "pose", "particle", "end",
)


def _plain(value: Any) -> Any:
    """JSON-ready copy with floats rounded to four places and sets sorted."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = round(float(value), 4)
        return 0.0 if v == 0 else v
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (set, frozenset)):
        return [_plain(v) for v in sorted(value)]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if value is None or isinstance(value, str):
        return value
    return str(value)


class TraceLog:
    def __init__(self):
        self.records: List[Dict[str, Any]] = []

    def emit(self, tick: int, event: str, **payload):
        if event not in EVENT_KINDS:
            raise ValueError(f"unknown trace event '{event}'")
        record = {'tick': int(tick), 'event': event}
        record.update((k, _plain(v)) for k, v in payload.items())
        self.records.append(record)
        logger.debug("trace %s", record)

    def events(self, *kinds: str) -> List[Dict[str, Any]]:
        return [r for r in self.records if not kinds or r['event'] in kinds]

    def first(self, kind: str, **match) -> Optional[Dict[str, Any]]:
        for r in self.records:
            if r['event'] == kind and all(r.get(k) == v for k, v in match.items()):
                return r
        return None

    def lines(self) -> Iterator[str]:
        for r in self.records:
            yield json.dumps(r, separators=(',', ':'))

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text(self.text(), encoding="utf-8")
        logger.info("trace with %d events written to %s", len(self.records), path)
        return path

    def __len__(self) -> int:
        return len(self.records)


def load_trace(path: Union[str, Path]) -> TraceLog:
    trace = TraceLog()
    with open(path, 'r', encoding='utf-8') as f:
        for n, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                trace.records.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{n}: not a trace record: {e}") from e
    return trace
