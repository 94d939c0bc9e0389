"""Adversarial problems (worst perturbation of a candidate) and certified radii.

Leaf regions are treated as closed here: a perturbation that reaches the
boundary of a negative leaf counts with depth zero, which matches the
supremum of the surrogate violation over the ball.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .formulations import EngineConfig, Norm, UncertaintySet, linear_radius, relu_layers
from .milp import MilpModel, ModelBlock, Status, add_scenario_block, solve
from .models import (
    DecisionTree,
    LinearModel,
    ReluNetwork,
    TrainedModel,
    TreeEnsemble,
    predict_class,
)


class PreconditionError(ValueError):
    """An operation was called on a point of the wrong predicted class."""


@dataclass
class ApOutcome:
    violation: float
    scenario: np.ndarray
    witness_leaf: int | None = None
    notes: tuple[str, ...] = ()


def _s_bounds(dim, uset: UncertaintySet, mutable, x_star=None, box=None):
    lo = np.full(dim, -uset.rho)
    hi = np.full(dim, uset.rho)
    if box is not None:
        lo = np.maximum(lo, box[0] - x_star)
        hi = np.minimum(hi, box[1] - x_star)
        hi = np.maximum(hi, lo)
    if mutable is not None:
        lo[~mutable] = hi[~mutable] = 0.0
    return lo, hi


def _add_s(m: MilpModel, lo, hi, uset: UncertaintySet):
    idx = [m.add_var(f"s[{i}]", lo[i], hi[i]) for i in range(lo.size)]
    if uset.norm == Norm.L2 and uset.rho > 0:
        m.add_conic(idx, uset.rho)
    return idx


def _ap_solver(cfg: EngineConfig):
    # worst cases sit on the sphere; a loose cut tolerance leaves slivers unseen
    return replace(cfg.solver, conic_tol=min(cfg.solver.conic_tol, 1e-11),
                   max_cuts_per_node=max(cfg.solver.max_cuts_per_node, 400))


def _finish_s(s, uset):
    # cut-loop residue can overshoot the ball by conic_tol
    return uset.project(np.asarray(s, dtype=float))


def ap_tree(tree: DecisionTree, tau: float, x_star, uset: UncertaintySet,
            cfg: EngineConfig | None = None, mutable=None, box=None) -> ApOutcome:
    """Deepest reachable point of any negative leaf, one LP per leaf."""
    cfg = cfg or EngineConfig()
    x_star = np.asarray(x_star, dtype=float)
    dim = x_star.size
    lo, hi = _s_bounds(dim, uset, mutable, x_star, box)
    best = ApOutcome(0.0, np.zeros(dim), None)
    if uset.rho == 0:
        lo = hi = np.zeros(dim)
    for lf in tree.leaves:
        if lf.weight >= tau or not lf.constraints:
            if lf.weight < tau and not lf.constraints:
                return ApOutcome(float("inf"), np.zeros(dim), lf.id)
            continue
        m = MilpModel(f"ap_leaf_{lf.id}")
        s_idx = _add_s(m, lo, hi, uset)
        slack0 = np.array([h.b - h.a @ x_star for h in lf.constraints])
        reach = np.array([uset.dual(np.where(hi > lo, h.a, 0.0)) for h in lf.constraints]) * uset.rho
        cap = float(np.min(slack0 + reach))
        if cap < 0:
            continue  # leaf out of reach of the ball
        alpha = m.add_var("alpha", 0.0, cap + 1.0)
        for h, b0 in zip(lf.constraints, slack0):
            row = {k: float(c) for k, c in zip(s_idx, h.a) if c}
            row[alpha] = 1.0
            m.add_constr(row, "<=", float(b0))
        m.set_objective({alpha: 1.0}, "max")
        out = solve(m, _ap_solver(cfg))
        if out.status != Status.OPTIMAL:
            continue
        s = _finish_s(out.values(s_idx), uset)
        depth = float(lf.slack(x_star + s)[0])
        if depth > best.violation:
            best = ApOutcome(depth, s, lf.id)
    return best


def _ensemble_rows(m: MilpModel, ens: TreeEnsemble, point_idx, offset, alpha, big_m, name):
    """Leaf-selection rows ``alpha <= b - a @ (offset + point)`` on selected leaves.

    ``big_m(h)`` gives the deactivation constant for halfspace ``h``.
    """
    K = len(ens.trees)
    vote = {}
    for t, tree in enumerate(ens.trees):
        pick = {}
        for lf in tree.leaves:
            z = m.add_var(f"{name}[{t},{lf.id}]", 0, 1, binary=True)
            pick[z] = 1.0
            if lf.weight:
                vote[z] = lf.weight / K
            for h in lf.constraints:
                row = {k: float(c) for k, c in zip(point_idx, h.a) if c}
                if alpha is not None:
                    row[alpha] = 1.0
                M = big_m(h)
                row[z] = M
                m.add_constr(row, "<=", float(h.b - h.a @ offset) + M)
        m.add_constr(pick, "=", 1.0)
    return vote


def _reach(h, x, lo, hi):
    """max over the s-box of a @ (x + s) - b."""
    return float(h.a @ x - h.b + np.sum(np.maximum(h.a * lo, h.a * hi)))


def ap_ensemble(ens: TreeEnsemble, tau: float, x_star, uset: UncertaintySet,
                cfg: EngineConfig | None = None, mutable=None, box=None) -> ApOutcome:
    """One MILP: pick a leaf per tree, average below tau, maximise the min active slack.

    Each row gets the smallest big-M valid over the perturbation box (capped
    by ``cfg.big_m_tree``), which keeps the relaxation tight.
    """
    cfg = cfg or EngineConfig()
    x_star = np.asarray(x_star, dtype=float)
    dim = x_star.size
    lo, hi = _s_bounds(dim, uset, mutable, x_star, box)
    # alpha never exceeds the deepest reachable slack of any tree's best leaf
    cap = min(max((min((-_reach_neg(h, x_star, lo, hi) for h in lf.constraints), default=0.0)
                   for lf in tree.leaves), default=0.0) for tree in ens.trees)
    cap = max(cap, 0.0)
    m = MilpModel("ap_ensemble")
    s_idx = _add_s(m, lo, hi, uset)
    alpha = m.add_var("alpha", 0.0, cap)
    vote = _ensemble_rows(m, ens, s_idx, x_star, alpha,
                          lambda h: min(cfg.big_m_tree, max(cap + _reach(h, x_star, lo, hi), 0.0) + 1e-6),
                          "z")
    m.add_constr(vote, "<=", tau - cfg.strict_eps, "negative_vote")
    m.set_objective({alpha: 1.0}, "max")
    out = solve(m, _ap_solver(cfg))
    if not out.has_solution:
        return ApOutcome(0.0, np.zeros(dim), None)
    s = _finish_s(out.values(s_idx), uset)
    slack = min((float(lf.slack(x_star + s)[0])
                 for k, tree in enumerate(ens.trees) for lf in tree.leaves
                 if lf.constraints and out.assignment[m.var(f"z[{k},{lf.id}]")] > 0.5),
                default=float("inf"))
    notes = ()
    if out.status == Status.TIME_LIMIT:
        notes = ("ensemble adversarial solve hit the time limit",)
    return ApOutcome(max(min(slack, float(out.objective)), 0.0), s, None, notes)


def _reach_neg(h, x, lo, hi):
    """min over the s-box of a @ (x + s) - b (negated deepest slack)."""
    return float(h.a @ x - h.b + np.sum(np.minimum(h.a * lo, h.a * hi)))


def ap_relu(net: ReluNetwork, tau: float, x_star, uset: UncertaintySet,
            cfg: EngineConfig | None = None, mutable=None, box=None) -> ApOutcome:
    """Minimise the network output over the ball; violation is ``tau - h(x* + s*)``."""
    cfg = cfg or EngineConfig()
    x_star = np.asarray(x_star, dtype=float)
    dim = x_star.size
    lo, hi = _s_bounds(dim, uset, mutable, x_star, box)
    m = MilpModel("ap_relu")
    s_idx = _add_s(m, lo, hi, uset)
    block = ModelBlock()
    out_expr, const = relu_layers(block, net, [({f"s[{i}]": 1.0}, float(x_star[i])) for i in range(dim)],
                                  "ap", cfg)
    add_scenario_block(m, block)
    if not out_expr:
        # network output ignores the inputs
        return ApOutcome(tau - const, np.zeros(dim), None)
    m.set_objective({m.var(nm): c for nm, c in out_expr.items()}, "min", const)
    res = solve(m, _ap_solver(cfg))
    notes = list(res.warnings)
    if not res.has_solution:
        return ApOutcome(tau - float(net.forward(x_star)[0]), np.zeros(dim), None,
                         ("adversarial MILP found no solution",))
    s = _finish_s(res.values(s_idx), uset)
    if res.status == Status.TIME_LIMIT:
        notes.append("network adversarial solve hit the time limit")
    _, pre = net.forward(x_star + s, return_preactivations=True)
    worst = max((float(np.abs(z).max()) for z in pre), default=0.0)
    if worst > min(cfg.big_m_nn_lb, cfg.big_m_nn_ub) - 1e-6:
        notes.append(f"big-M may be insufficient: |pre-activation| reaches {worst:.4g}")
    return ApOutcome(tau - float(net.forward(x_star + s)[0]), s, None, tuple(notes))


def ap_linear(lin: LinearModel, tau: float, x_star, uset: UncertaintySet, mutable=None) -> ApOutcome:
    """Closed-form worst perturbation of a linear score."""
    beta = lin.beta if mutable is None else np.where(mutable, lin.beta, 0.0)
    if uset.norm == Norm.LINF:
        s = -uset.rho * np.sign(beta)
    else:
        n = np.linalg.norm(beta)
        s = np.zeros_like(beta) if n == 0 else -uset.rho * beta / n
    x_star = np.asarray(x_star, dtype=float)
    return ApOutcome(tau - float(lin.beta @ (x_star + s) + lin.beta0), s, None)


def adversarial(model: TrainedModel, x_star, uset: UncertaintySet, cfg: EngineConfig | None = None) -> ApOutcome:
    """Dispatch to the adversarial problem matching the model kind."""
    cfg = cfg or EngineConfig()
    p, mut = model.params, model.space.mutable
    box = (model.space.lower, model.space.upper) if cfg.clip_to_box else None
    if isinstance(p, DecisionTree):
        return ap_tree(p, model.tau, x_star, uset, cfg, mut, box)
    if isinstance(p, TreeEnsemble):
        return ap_ensemble(p, model.tau, x_star, uset, cfg, mut, box)
    if isinstance(p, ReluNetwork):
        return ap_relu(p, model.tau, x_star, uset, cfg, mut, box)
    if box is not None:
        # the closed form ignores the box; fall through to a clipped worst case
        s = ap_linear(p, model.tau, x_star, uset, mut).scenario
        s = np.clip(s, box[0] - x_star, box[1] - x_star)
        return ApOutcome(model.tau - float(p.beta @ (np.asarray(x_star) + s) + p.beta0), s, None)
    return ap_linear(p, model.tau, x_star, uset, mut)


# -- certified radius ----------------------------------------------------

def _radius_vars(m: MilpModel, dim, norm: Norm, bound, mutable):
    r = m.add_var("r", 0.0, bound * (np.sqrt(dim) if norm == Norm.L2 else 1.0))
    s_idx = []
    for i in range(dim):
        b = bound if mutable is None or mutable[i] else 0.0
        s_idx.append(m.add_var(f"s[{i}]", -b, b))
    if norm == Norm.LINF:
        for k in s_idx:
            m.add_constr({k: 1.0, r: -1.0}, "<=", 0.0)
            m.add_constr({k: 1.0, r: 1.0}, ">=", 0.0)
    else:
        m.add_conic(s_idx, radius_var=r)
    m.set_objective({r: 1.0}, "min")
    return r, s_idx


def robustness_radius(model: TrainedModel, x, norm: Norm | str = Norm.LINF,
                      cfg: EngineConfig | None = None) -> float:
    """Smallest perturbation norm that reaches the closed negative region.

    Perturbations may leave the feature box. Searches are confined to
    ``|s_i| <= 2 * (widest box side) + 1``; ``inf`` means nothing negative
    lies within that range.
    """
    return radius_witness(model, x, norm, cfg)[0]


def radius_witness(model: TrainedModel, x, norm: Norm | str = Norm.LINF,
                   cfg: EngineConfig | None = None) -> tuple[float, np.ndarray | None]:
    """``(radius, s)`` where ``x + s`` is a closest point of the negative region."""
    cfg = cfg or EngineConfig()
    norm = Norm(norm)
    x = np.asarray(x, dtype=float)
    if predict_class(model, x, clamp=False) != 1:
        raise PreconditionError("robustness radius needs a point predicted +1")
    p, mut = model.params, model.space.mutable
    if isinstance(p, LinearModel):
        r = linear_radius(p, model.tau, x, norm, mut)
        if not np.isfinite(r):
            return r, None
        s = ap_linear(p, model.tau, x, UncertaintySet(norm, r), mut).scenario
        return r, s
    bound = 2.0 * float(np.max(model.space.upper - model.space.lower, initial=0.0)) + 1.0
    dim = x.size

    if isinstance(p, DecisionTree):
        best, best_s = float("inf"), None
        for lf in p.leaves:
            if lf.weight >= model.tau:
                continue
            if not lf.constraints:
                return 0.0, np.zeros(dim)
            m = MilpModel("radius_leaf")
            r, s_idx = _radius_vars(m, dim, norm, bound, mut)
            for h in lf.constraints:
                m.add_constr({k: float(c) for k, c in zip(s_idx, h.a) if c}, "<=", float(h.b - h.a @ x))
            out = solve(m, _ap_solver(cfg))
            if out.status == Status.OPTIMAL and max(float(out.objective), 0.0) < best:
                best, best_s = max(float(out.objective), 0.0), out.values(s_idx)
        return best, best_s

    m = MilpModel("radius")
    r, s_idx = _radius_vars(m, dim, norm, bound, mut)
    if isinstance(p, TreeEnsemble):
        lo = np.where(mut, -bound, 0.0)
        vote = _ensemble_rows(m, p, s_idx, x, None, lambda h: max(_reach(h, x, lo, -lo), 0.0) + 1e-6, "z")
        m.add_constr(vote, "<=", model.tau - cfg.strict_eps, "negative_vote")
    else:
        block = ModelBlock()
        expr, const = relu_layers(block, p, [({f"s[{i}]": 1.0}, float(x[i])) for i in range(dim)], "rad", cfg)
        add_scenario_block(m, block)
        if not expr:
            return (float("inf"), None) if const >= model.tau else (0.0, np.zeros(dim))
        m.add_constr({m.var(nm): c for nm, c in expr.items()}, "<=", model.tau - const, "negative_out")
    out = solve(m, _ap_solver(cfg))
    if not out.has_solution:
        return float("inf"), None
    return max(float(out.objective), 0.0), out.values(s_idx)


def radius_by_bisection(model: TrainedModel, x, norm, hi: float = 1.0, tol: float = 1e-6,
                        cfg: EngineConfig | None = None) -> float:
    """Largest rho whose adversarial violation is still nonpositive (closed-leaf sense)."""
    lo = 0.0
    v = adversarial(model, x, UncertaintySet(norm, hi), cfg).violation
    if v <= 0:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        v = adversarial(model, x, UncertaintySet(norm, mid), cfg).violation
        if v > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


__all__ = ["ApOutcome", "PreconditionError", "adversarial", "ap_ensemble", "ap_linear", "ap_relu",
           "ap_tree", "radius_by_bisection", "radius_witness", "robustness_radius"]
