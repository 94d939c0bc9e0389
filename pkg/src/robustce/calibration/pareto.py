"""Sweep the robustness budget and record the distance it costs."""
from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..engine import solve_robust_ce
from ..formulations import DistanceSpec, EngineConfig, UncertaintySet
from ..results import RunStatus

CSV_COLUMNS = ("rho", "distance", "wall_time_ms", "status")


@dataclass
class ParetoPoint:
    rho: float
    distance: float
    wall_time: float
    status: RunStatus
    point: np.ndarray | None = None
    iterations: int = 0

    def row(self) -> dict:
        d = self.distance
        return {"rho": repr(float(self.rho)),
                "distance": "" if not np.isfinite(d) else repr(float(d)),
                "wall_time_ms": f"{1000.0 * self.wall_time:.3f}",
                "status": self.status.value}


def _check_grid(rho_grid) -> list[float]:
    grid = [float(r) for r in rho_grid]
    if not grid:
        raise ValueError("rho grid is empty")
    if any(r < 0 or not np.isfinite(r) for r in grid):
        raise ValueError("rho values must be finite and nonnegative")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("rho grid must be sorted ascending")
    return grid


def pareto_front(model, factual, rho_grid, dist: DistanceSpec | None = None,
                 cfg: EngineConfig | None = None, norm: str = "linf",
                 workers: int | None = None) -> list[ParetoPoint]:
    """One engine run per radius; failures are kept as points with their status.

    ``workers > 1`` runs grid points on a thread pool. Output order follows
    the grid either way.
    """
    grid = _check_grid(rho_grid)
    cfg = cfg or EngineConfig()
    dist = dist or DistanceSpec()

    def run(rho: float) -> ParetoPoint:
        t0 = time.perf_counter()
        try:
            res = solve_robust_ce(model, factual, UncertaintySet(norm, rho), dist, cfg)
        except Exception:  # one bad point should not sink the sweep
            return ParetoPoint(rho, float("nan"), time.perf_counter() - t0, RunStatus.INFEASIBLE)
        return ParetoPoint(rho, res.distance, time.perf_counter() - t0, res.status,
                           res.point, res.iterations)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, grid))
    return [run(r) for r in grid]


def write_csv(points, fh=None) -> str:
    """Write the sweep as CSV to ``fh`` (a path or file object) and return the text."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for p in points:
        w.writerow(p.row())
    text = buf.getvalue()
    if isinstance(fh, (str, bytes)) or hasattr(fh, "__fspath__"):
        with open(fh, "w", newline="") as out:
            out.write(text)
    elif fh is not None:
        fh.write(text)
    return text
