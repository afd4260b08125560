"""Render a saved trace: ASCII, PGM or a PNG plot of the final map and robot tracks."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np

from gridworld.export import save_map, to_pgm
from gridworld.occupancy import OccupancyGrid
from sim.trace import TraceLog

logger = logging.getLogger('episim.sim')

RENDER_FORMATS = ("ascii", "pgm", "png")


class ReplayError(Exception):
    pass


def _header(trace: TraceLog) -> Tuple[dict, dict]:
    start = trace.first("start")
    end = trace.first("end")
    if start is None or end is None:
        raise ReplayError("trace has no start or end record; was the run interrupted?")
    return start, end


def final_map(trace: TraceLog) -> OccupancyGrid:
    start, end = _header(trace)
    return OccupancyGrid.from_ascii("\n".join(end['map']), resolution=start['resolution'])


def tracks(trace: TraceLog) -> Dict[int, List[Tuple[float, float]]]:
    out: Dict[int, List[Tuple[float, float]]] = {}
    for r in trace.events("pose"):
        out.setdefault(r['robot'], []).append((r['x'], r['y']))
    return out


def render_ascii(trace: TraceLog) -> str:
    """Final union map with robot bases (digits) and tasks (letters) drawn on top."""
    start, end = _header(trace)
    grid = final_map(trace)
    overlay = {}
    for tid, position, _ in start['tasks']:
        overlay[grid.clamp_cell(grid.world_to_cell(position))] = chr(ord('A') + tid % 26)
    for rid, _, _, base in start['robots']:
        overlay[grid.clamp_cell(grid.world_to_cell(base))] = str(rid % 10)
    rows = grid.to_ascii(overlay=overlay).splitlines()
    status = "complete" if end['complete'] else "incomplete"
    summary = (f"{start['scenario']} ({start['method']}, seed {start['seed']}): {status} at "
               f"t={end['time']} s, {end['tasks_completed']}/{len(start['tasks'])} tasks, "
               f"coverage {end['coverage']:.3f}")
    # top row is the largest y
    return "\n".join([summary] + rows[::-1]) + "\n"


def render_pgm(trace: TraceLog) -> str:
    return to_pgm(final_map(trace))


def save_final_map(trace: TraceLog, path: Union[str, Path]) -> Path:
    """Write the final union map on its own: PGM for a .pgm suffix, ASCII otherwise."""
    fmt = "pgm" if Path(path).suffix.lower() == ".pgm" else "ascii"
    return save_map(final_map(trace), path, fmt)


def render_png(trace: TraceLog, path: Union[str, Path]) -> Path:
    import matplotlib
    matplotlib.use("Agg")
    from matplotlib.figure import Figure

    start, end = _header(trace)
    grid = final_map(trace)
    levels = np.array([0.5, 1.0, 0.0])[grid.classify()]
    xmin, ymin, xmax, ymax = grid.bounds

    fig = Figure(figsize=(6, 6 * (ymax - ymin) / max(xmax - xmin, 1e-9)))
    ax = fig.add_subplot(111)
    ax.imshow(levels, cmap="gray", vmin=0.0, vmax=1.0, origin="lower", extent=(xmin, xmax, ymin, ymax),
              interpolation="nearest")
    for rid, points in sorted(tracks(trace).items()):
        xs, ys = zip(*points)
        ax.plot(xs, ys, linewidth=1.2, label=f"robot {rid}")
    for rid, _, _, base in start['robots']:
        ax.plot(base[0], base[1], marker="s", color="black", markersize=4)
    for tid, position, _ in start['tasks']:
        ax.plot(position[0], position[1], marker="*", color="red", markersize=10)
        ax.annotate(f"task {tid}", position, textcoords="offset points", xytext=(4, 4), fontsize=8)
    status = "complete" if end['complete'] else "incomplete"
    ax.set_title(f"{start['scenario']} / {start['method']} / seed {start['seed']}: {status} at {end['time']} s")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(loc="upper right", fontsize=8)

    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    logger.info("replay plot written to %s", path)
    return path


def render(trace: TraceLog, fmt: str, out: Union[str, Path, None] = None) -> Union[str, Path]:
    """Text for ascii/pgm (also written to `out` when given); png always needs `out`."""
    if fmt not in RENDER_FORMATS:
        raise ReplayError(f"unknown render format '{fmt}', expected one of {', '.join(RENDER_FORMATS)}")
    if fmt == "png":
        if out is None:
            raise ReplayError("png rendering needs an output path")
        return render_png(trace, out)
    if fmt == "pgm" and out is not None:
        save_map(final_map(trace), out, "pgm")
        return render_pgm(trace)
    text = render_ascii(trace) if fmt == "ascii" else render_pgm(trace)
    if out is not None:
        Path(out).write_text(text, encoding="utf-8")
    return text
