"""Reference LP / MILP solver built on the dense simplex.

Binary variables are handled by best-first branch-and-bound. Conic rows
``||s||_2 <= rho`` are enforced lazily: whenever a relaxation solution
violates one by more than ``conic_tol``, the tangent cut
``s @ (s_hat / ||s_hat||) <= rho`` is added to a global pool and the node
is re-solved.
"""
from __future__ import annotations

import heapq
import itertools
import time

import numpy as np

from .model import BranchRule, MilpModel, SolveOutcome, SolverConfig, Status
from .simplex import LE, LPResult, SolverError, solve_standard

DEFAULT_CONFIG = SolverConfig()


class _CutPool:
    def __init__(self, n: int):
        self.n = n
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []

    def add(self, row: np.ndarray, rhs: float):
        self.rows.append(row)
        self.rhs.append(rhs)

    def stack(self, A, senses, b):
        if not self.rows:
            return A, senses, b
        return (np.vstack([A, np.array(self.rows)]),
                np.concatenate([senses, np.full(len(self.rows), LE)]),
                np.concatenate([b, np.array(self.rhs)]))


def _conic_violations(x, conic_rows):
    out = []
    for row in conic_rows:
        s = x[list(row.indices)]
        norm = float(np.linalg.norm(s))
        cap = x[row.radius_var] if row.radius_var is not None else row.radius
        out.append((norm - cap, s, norm))
    return out


def _relax(arrays, lb, ub, pool, conic_rows, cfg) -> tuple[LPResult, float, list[str]]:
    c, A, senses, b = arrays
    notes: list[str] = []
    residual = 0.0
    for n_cuts in range(cfg.max_cuts_per_node + 1):
        A2, s2, b2 = pool.stack(A, senses, b)
        res = solve_standard(c, A2, s2, b2, lb, ub, feas_tol=cfg.feas_tol)
        if res.status != "optimal" or not conic_rows:
            return res, 0.0, notes
        viol = _conic_violations(res.x, conic_rows)
        residual = max(v for v, _, _ in viol)
        if residual <= cfg.conic_tol:
            return res, max(residual, 0.0), notes
        if n_cuts == cfg.max_cuts_per_node:
            break
        for (v, s, norm), row in zip(viol, conic_rows):
            if v > cfg.conic_tol and norm > 0:
                cut = np.zeros(pool.n)
                cut[list(row.indices)] = s / norm
                if row.radius_var is not None:
                    cut[row.radius_var] -= 1.0
                    pool.add(cut, 0.0)
                else:
                    pool.add(cut, row.radius)
    notes.append(f"conic cut cap reached; residual violation {residual:.3e}")
    return res, residual, notes


def _finish(model, status, x, nodes, start, warnings, residual=0.0):
    if x is None:
        return SolveOutcome(status, float("nan"), None, nodes, time.perf_counter() - start,
                            warnings, residual)
    return SolveOutcome(status, model.evaluate_objective(x), x, nodes,
                        time.perf_counter() - start, warnings, residual)


def solve_lp(model: MilpModel, cfg: SolverConfig = DEFAULT_CONFIG, relax: bool = False) -> SolveOutcome:
    """Solve a model without binaries (or its relaxation with ``relax=True``)."""
    if model.n_binaries and not relax:
        raise ValueError("solve_lp given binary variables; use solve_milp or relax=True")
    start = time.perf_counter()
    c, A, senses, b, lb, ub = model.to_arrays()
    pool = _CutPool(model.n_vars)
    res, residual, notes = _relax((c, A, senses, b), lb, ub, pool, model.conic_rows, cfg)
    status = Status(res.status)
    return _finish(model, status, res.x if status == Status.OPTIMAL else None, 1, start,
                   notes, residual)


class _PseudoCosts:
    def __init__(self, n):
        self.sum = np.zeros((2, n))
        self.cnt = np.zeros((2, n))

    def update(self, var, direction, gain, frac):
        dist = frac if direction == 0 else 1.0 - frac
        if dist > 1e-12:
            self.sum[direction, var] += max(gain, 0.0) / dist
            self.cnt[direction, var] += 1

    def score(self, cand, fracs):
        known = self.cnt > 0
        avg = np.where(known.any(axis=1), self.sum.sum(axis=1) / np.maximum(self.cnt.sum(axis=1), 1), 1.0)
        down = np.where(known[0, cand], self.sum[0, cand] / np.maximum(self.cnt[0, cand], 1), avg[0])
        up = np.where(known[1, cand], self.sum[1, cand] / np.maximum(self.cnt[1, cand], 1), avg[1])
        return np.maximum(down * fracs, 1e-6) * np.maximum(up * (1 - fracs), 1e-6)


def solve_milp(model: MilpModel, cfg: SolverConfig = DEFAULT_CONFIG,
               time_limit: float | None = None) -> SolveOutcome:
    """Branch-and-bound over the binary variables of ``model``.

    Deterministic: ties in branching are broken by lowest variable index and
    nodes with equal bounds are explored deepest-first, then FIFO.
    """
    start = time.perf_counter()
    limit = cfg.time_limit if time_limit is None else min(time_limit, cfg.time_limit)
    c, A, senses, b, lb0, ub0 = model.to_arrays()
    arrays = (c, A, senses, b)
    bins = model.binary_indices
    pool = _CutPool(model.n_vars)
    pseudo = _PseudoCosts(model.n_vars)
    counter = itertools.count()

    incumbent_x = None
    incumbent = np.inf
    warnings: list[str] = []
    residual = 0.0
    nodes = 0
    heap = [(-np.inf, 0, next(counter), lb0, ub0, None)]
    timed_out = False

    while heap:
        bound, neg_depth, _, lb, ub, origin = heapq.heappop(heap)
        if bound >= incumbent - 1e-9 * max(1.0, abs(incumbent)):
            continue
        if time.perf_counter() - start > limit:
            timed_out = True
            break
        nodes += 1
        res, res_violation, notes = _relax(arrays, lb, ub, pool, model.conic_rows, cfg)
        for note in notes:
            if note not in warnings:
                warnings.append(note)
        if res.status == "unbounded":
            if nodes == 1:
                return _finish(model, Status.UNBOUNDED, None, nodes, start, warnings)
            raise SolverError("unbounded relaxation below a bounded root")
        if res.status != "optimal":
            continue
        obj = res.objective
        if origin is not None:
            pseudo.update(origin[0], origin[1], obj - origin[2], origin[3])
        if obj >= incumbent - 1e-9 * max(1.0, abs(incumbent)):
            continue
        x = res.x
        if bins.size:
            vals = x[bins]
            fracs = vals - np.floor(vals)
            frac_mask = np.minimum(fracs, 1 - fracs) > cfg.int_tol
        else:
            frac_mask = np.zeros(0, dtype=bool)
        if not frac_mask.any():
            if bins.size:
                # re-solve with binaries pinned: rounding alone leaves big-M rows violated
                lbf, ubf = lb.copy(), ub.copy()
                lbf[bins] = ubf[bins] = np.round(vals)
                fixed, fixed_violation, _ = _relax(arrays, lbf, ubf, pool, model.conic_rows, cfg)
                if fixed.status != "optimal":
                    frac_mask = np.minimum(fracs, 1 - fracs) > 0
                    if not frac_mask.any():
                        continue
                else:
                    res, obj, res_violation = fixed, fixed.objective, fixed_violation
            if not frac_mask.any():
                if obj < incumbent:
                    incumbent, incumbent_x = obj, res.x
                    residual = res_violation
                continue
        cand = bins[frac_mask]
        cf = fracs[frac_mask]
        if cfg.branching == BranchRule.PSEUDO_COST:
            k = int(np.argmax(pseudo.score(cand, cf)))
        else:
            k = int(np.argmax(np.minimum(cf, 1 - cf)))
        var = int(cand[k])
        depth = -neg_depth + 1
        for direction in (1, 0):
            lb2, ub2 = lb.copy(), ub.copy()
            lb2[var] = ub2[var] = float(direction)
            heapq.heappush(heap, (obj, -depth, next(counter), lb2, ub2,
                                  (var, direction, obj, float(cf[k]))))

    if timed_out:
        return _finish(model, Status.TIME_LIMIT, incumbent_x, nodes, start, warnings, residual)
    if incumbent_x is None:
        return _finish(model, Status.INFEASIBLE, None, nodes, start, warnings)
    return _finish(model, Status.OPTIMAL, incumbent_x, nodes, start, warnings, residual)


def solve(model: MilpModel, cfg: SolverConfig = DEFAULT_CONFIG, time_limit: float | None = None) -> SolveOutcome:
    """Dispatch to :func:`solve_lp` or :func:`solve_milp`."""
    if model.n_binaries:
        return solve_milp(model, cfg, time_limit)
    return solve_lp(model, cfg)
