"""Result records shared by the engine, the linear closed form and the CLI."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class RunStatus(str, Enum):
    CONVERGED = "converged"
    TIME_LIMIT = "time_limit"
    INFEASIBLE = "infeasible"


def _f(v):
    if v is None:
        return None
    v = float(v)
    return v if np.isfinite(v) else (None if np.isnan(v) else ("inf" if v > 0 else "-inf"))


@dataclass
class IterationRecord:
    index: int
    mp_objective: float
    mp_wall_time: float
    ap_violation: float | None
    ap_wall_time: float
    scenario_added: np.ndarray | None
    rho_bar: float | None
    point: np.ndarray | None = None
    polish_added: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "mp_objective": _f(self.mp_objective),
            "mp_wall_time": self.mp_wall_time,
            "ap_violation": _f(self.ap_violation),
            "ap_wall_time": self.ap_wall_time,
            "scenario_added": None if self.scenario_added is None else np.asarray(self.scenario_added).tolist(),
            "rho_bar": _f(self.rho_bar),
            "point": None if self.point is None else np.asarray(self.point).tolist(),
            "polish_added": None if self.polish_added is None else np.asarray(self.polish_added).tolist(),
        }


@dataclass
class RceResult:
    point: np.ndarray | None
    distance: float
    rho_requested: float
    rho_certified: float
    status: RunStatus
    trace: list[IterationRecord] = field(default_factory=list)
    incumbents: list[tuple[np.ndarray, float, float | None]] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    method: str = "adversarial"
    wall_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def converged(self) -> bool:
        return self.status == RunStatus.CONVERGED

    def to_dict(self, include_trace: bool = False) -> dict:
        out = {
            "status": self.status.value,
            "point": None if self.point is None else np.asarray(self.point).tolist(),
            "distance": _f(self.distance),
            "rho_requested": self.rho_requested,
            "rho_certified": _f(self.rho_certified),
            "iterations": self.iterations,
            "method": self.method,
            "wall_time": self.wall_time,
            "diagnostics": list(self.diagnostics),
            "incumbents": [{"point": np.asarray(p).tolist(), "distance": _f(d), "rho_bar": _f(r)}
                           for p, d, r in self.incumbents],
        }
        if include_trace:
            out["trace"] = [rec.to_dict() for rec in self.trace]
        return out

    def write_trace(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for rec in self.trace:
                fh.write(json.dumps(rec.to_dict()) + "\n")
