"""Cutting-plane engine: alternate master and adversarial solves until the
worst perturbation of the current candidate no longer flips its class.
Also hosts the single-leaf heuristic for trees and ensembles."""
from __future__ import annotations

import logging
import time

import numpy as np

from .adversarial import PreconditionError, adversarial, radius_witness, robustness_radius
from .formulations import (
    DistanceSpec,
    EngineConfig,
    MasterProblem,
    NoCounterfactualError,
    ScenarioSet,
    UncertaintySet,
    _x_names,
    encode_distance,
    robust_linear_ce,
)
from .milp import MilpModel, Status, solve
from .models import (
    DecisionTree,
    LinearModel,
    ReluNetwork,
    TrainedModel,
    TreeEnsemble,
    negate,
    predict_class,
)
from .results import IterationRecord, RceResult, RunStatus

log = logging.getLogger(__name__)

DEDUP_TOL = 1e-9
POLISH_TOL = 1e-10


def _check_factual(model: TrainedModel, factual, cfg: EngineConfig) -> tuple[TrainedModel, np.ndarray]:
    factual = np.asarray(factual, dtype=float)
    if predict_class(model, factual, clamp=False) == 1:
        if not cfg.negate_positive:
            raise PreconditionError(
                "factual is already predicted +1; negate the model (negate_positive=True) "
                "to search for a robust -1 counterfactual")
        model = negate(model)
    return model, factual


def _radius(model, x, norm, cfg):
    try:
        return robustness_radius(model, x, norm, cfg)
    except PreconditionError:
        return 0.0


def _witness(model, x, norm, cfg):
    try:
        return radius_witness(model, x, norm, cfg)
    except PreconditionError:
        return 0.0, None


def _polish_scenario(uset: UncertaintySet, s):
    """Stretch the direction to the nearest negative point out to the ball's surface."""
    if s is None:
        return None
    size = uset.size(s)
    if size <= 0:
        return None
    return uset.project(np.asarray(s) * (uset.rho / size))


def solve_robust_ce(model: TrainedModel, factual, uset: UncertaintySet,
                    dist: DistanceSpec | None = None, cfg: EngineConfig | None = None) -> RceResult:
    """Closest point to ``factual`` that stays +1 under every perturbation in ``uset``."""
    cfg = cfg or EngineConfig()
    dist = dist or DistanceSpec()
    start = time.perf_counter()
    model, factual = _check_factual(model, factual, cfg)

    if isinstance(model.params, LinearModel) and cfg.linear_closed_form:
        res = robust_linear_ce(model.params, model.tau, factual, uset, dist, model.space, cfg)
        if cfg.trace_path:
            res.write_trace(cfg.trace_path)
        return res

    track = cfg.track_radius
    if track is None:
        track = not isinstance(model.params, ReluNetwork)

    try:
        mp = MasterProblem(model, factual, dist, cfg)
    except NoCounterfactualError as exc:
        return RceResult(None, float("nan"), uset.rho, float("nan"), RunStatus.INFEASIBLE,
                         diagnostics=[str(exc)], wall_time=time.perf_counter() - start)
    Z = ScenarioSet(model.dim, uset)
    mp.add_scenario(Z[0])

    trace: list[IterationRecord] = []
    incumbents = []
    diagnostics: list[str] = []
    status = RunStatus.TIME_LIMIT
    x = None
    dist_val = float("nan")
    polished = 0
    fallback = None

    for it in range(cfg.max_iterations):
        left = cfg.time_limit - (time.perf_counter() - start)
        if left <= 0:
            diagnostics.append("time limit reached before the next master solve")
            break
        t0 = time.perf_counter()
        out = mp.solve(left)
        mp_time = time.perf_counter() - t0
        for w in out.warnings:
            if w not in diagnostics:
                diagnostics.append(w)
        if out.status == Status.INFEASIBLE:
            status = RunStatus.INFEASIBLE
            diagnostics.append(f"master problem infeasible with {len(Z)} scenarios")
            break
        if not out.has_solution:
            diagnostics.append("master solve stopped without a solution")
            break
        x = mp.point(out)
        dist_val = dist.measure(x, factual)
        if out.status == Status.TIME_LIMIT:
            diagnostics.append("master solve hit the time limit; candidate not proven optimal")
            rbar = _radius(model, x, uset.norm, cfg) if track else None
            trace.append(IterationRecord(it, float(out.objective), mp_time, None, 0.0, None, rbar, x.copy()))
            incumbents.append((x.copy(), dist_val, rbar))
            break

        t1 = time.perf_counter()
        ap = adversarial(model, x, uset, cfg)
        ap_time = time.perf_counter() - t1
        for w in ap.notes:
            if w not in diagnostics:
                diagnostics.append(w)
        rbar, wit = _witness(model, x, uset.norm, cfg) if track else (None, None)
        added = None
        done = ap.violation <= cfg.epsilon
        if not done:
            if predict_class(model, x + ap.scenario, clamp=False) != -1:
                diagnostics.append(f"iteration {it}: adversarial objective {ap.violation:.3g} "
                                   "but the exact model keeps class +1 at x* + s*")
            if Z.nearest(ap.scenario) <= DEDUP_TOL:
                diagnostics.append(f"iteration {it}: stalled, scenario repeats an existing one")
            else:
                added = Z.add(ap.scenario)
        polish = None
        if done:
            fallback = (x.copy(), dist_val)
            if (rbar is not None and rbar < uset.rho - POLISH_TOL * max(1.0, uset.rho)
                    and polished < cfg.polish_steps):
                # within epsilon but short of rho: also cut off the nearest negative point
                cand = _polish_scenario(uset, wit)
                if cand is not None and Z.nearest(cand) > DEDUP_TOL:
                    polish = Z.add(cand)
                    polished += 1
        trace.append(IterationRecord(it, float(out.objective), mp_time, float(ap.violation), ap_time,
                                     None if added is None else added.copy(), rbar, x.copy(),
                                     None if polish is None else polish.copy()))
        incumbents.append((x.copy(), dist_val, rbar))
        log.debug("iter %d obj %.6g violation %.3g", it, out.objective, ap.violation)
        if done and polish is None:
            status = RunStatus.CONVERGED
            break
        if added is None and polish is None:
            break
        mp.add_scenario(added if added is not None else polish)
    else:
        diagnostics.append(f"iteration cap {cfg.max_iterations} reached")

    for w in mp.warnings:
        if w not in diagnostics:
            diagnostics.append(w)
    if fallback is not None and status == RunStatus.INFEASIBLE:
        # every polishing scenario lies in S, so an exactly robust point would have stayed feasible
        diagnostics.append(
            f"no point is robust at rho={uset.rho:g}; the epsilon-converged candidate "
            f"{np.round(fallback[0], 9).tolist()} (distance {fallback[1]:.9g}) is only epsilon-robust "
            "and is kept in incumbents")
    elif fallback is not None and status != RunStatus.CONVERGED:
        # polishing was cut short; the earlier epsilon-converged candidate stands
        x, dist_val = fallback
        diagnostics.append("polishing stopped early; kept the epsilon-converged point")
        status = RunStatus.CONVERGED
    if status == RunStatus.INFEASIBLE:
        certified = float("nan")
        point = None
        dist_val = float("nan")
    else:
        point = x
        certified = float("nan") if x is None else _radius(model, x, uset.norm, cfg)
    res = RceResult(point, dist_val, uset.rho, certified, status, trace, incumbents, diagnostics,
                    method="adversarial", wall_time=time.perf_counter() - start)
    if cfg.trace_path:
        res.write_trace(cfg.trace_path)
    return res


def _tightened_rows(m, x_idx, leaf, uset, mutable, cfg, indicator=None, big_m=0.0):
    for h in leaf.constraints:
        shift = uset.rho * uset.dual(np.where(mutable, h.a, 0.0))
        row = {k: float(c) for k, c in zip(x_idx, h.a) if c}
        rhs = h.b - shift - (cfg.strict_eps if h.strict else cfg.margin)
        if indicator is not None:
            row[indicator] = big_m
            rhs += big_m
        m.add_constr(row, "<=", rhs)


def solve_heuristic_tree(model: TrainedModel, factual, uset: UncertaintySet,
                         dist: DistanceSpec | None = None, cfg: EngineConfig | None = None) -> RceResult:
    """Robust against a single leaf only: the whole ball must fit inside one positive leaf.

    Trees solve one LP per positive leaf; ensembles one MILP with a leaf
    indicator per tree and ball-tightened leaf rows.
    """
    cfg = cfg or EngineConfig()
    dist = dist or DistanceSpec()
    start = time.perf_counter()
    p = model.params
    if not isinstance(p, (DecisionTree, TreeEnsemble)):
        raise TypeError("the heuristic applies to trees and tree ensembles")
    model, factual = _check_factual(model, factual, cfg)
    p = model.params
    sp = model.space

    def fresh():
        m = MilpModel("heuristic")
        x_idx = [m.add_var(nm, sp.lower[i], sp.upper[i]) for i, nm in enumerate(_x_names(sp.dim))]
        encode_distance(m, x_idx, factual, dist, sp.mutable)
        return m, x_idx

    best_x, best_obj = None, float("inf")
    if isinstance(p, DecisionTree):
        for lf in p.leaves:
            if lf.weight < model.tau:
                continue
            m, x_idx = fresh()
            _tightened_rows(m, x_idx, lf, uset, sp.mutable, cfg)
            out = solve(m, cfg.solver)
            if out.status == Status.OPTIMAL and out.objective < best_obj - 1e-12:
                best_obj, best_x = float(out.objective), out.values(x_idx)
    else:
        m, x_idx = fresh()
        K = len(p.trees)
        vote = {}
        for t, tree in enumerate(p.trees):
            pick = {}
            for lf in tree.leaves:
                z = m.add_var(f"l[{t},{lf.id}]", 0, 1, binary=True)
                pick[z] = 1.0
                if lf.weight:
                    vote[z] = lf.weight / K
                _tightened_rows(m, x_idx, lf, uset, sp.mutable, cfg, z, cfg.big_m_tree)
            m.add_constr(pick, "=", 1.0)
        m.add_constr(vote, ">=", model.tau)
        out = solve(m, cfg.solver, cfg.time_limit)
        if out.has_solution:
            best_obj, best_x = float(out.objective), out.values(x_idx)

    elapsed = time.perf_counter() - start
    if best_x is None:
        rec = IterationRecord(0, float("nan"), elapsed, None, 0.0, None, None, None)
        return RceResult(None, float("nan"), uset.rho, float("nan"), RunStatus.INFEASIBLE, [rec],
                         diagnostics=["no single leaf holds the whole uncertainty set"],
                         method="heuristic", wall_time=elapsed)
    x = np.clip(best_x, sp.lower, sp.upper)
    x[sp.immutable_mask] = factual[sp.immutable_mask]
    d = dist.measure(x, factual)
    rbar = _radius(model, x, uset.norm, cfg)
    rec = IterationRecord(0, best_obj, elapsed, None, 0.0, None, rbar, x.copy())
    res = RceResult(x, d, uset.rho, rbar, RunStatus.CONVERGED, [rec], [(x.copy(), d, rbar)],
                    method="heuristic", wall_time=time.perf_counter() - start)
    if cfg.trace_path:
        res.write_trace(cfg.trace_path)
    return res
