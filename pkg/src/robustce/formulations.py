"""Master problems over a finite scenario set, distance objectives and the
closed-form robust linear counterfactual.

A master problem (MP) asks for the point closest to the factual instance
whose translates ``x + s`` are classified +1 for every scenario ``s`` seen so
far. Scenarios are appended as self-contained blocks of variables and rows,
so the model only ever grows.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .milp import MilpModel, ModelBlock, SolveOutcome, SolverConfig, Status, add_scenario_block, solve
from .models import (
    DecisionTree,
    FeatureSpace,
    InputError,
    LinearModel,
    ReluNetwork,
    TrainedModel,
    TreeEnsemble,
    VoteMode,
)
from .results import IterationRecord, RceResult, RunStatus


class NoCounterfactualError(ValueError):
    """The model has no positive region a counterfactual could land in."""


class Norm(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


def dual_norm(a, norm: Norm | str) -> float:
    """Dual of the perturbation norm: l1 for linf, l2 for l2."""
    a = np.asarray(a, dtype=float)
    norm = Norm(norm)
    if norm == Norm.LINF:
        return float(np.abs(a).sum())
    if norm == Norm.L2:
        return float(np.linalg.norm(a))
    return float(np.abs(a).max(initial=0.0))


@dataclass(frozen=True)
class UncertaintySet:
    norm: Norm = Norm.LINF
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(self.norm))
        object.__setattr__(self, "rho", float(self.rho))
        if self.norm not in (Norm.LINF, Norm.L2):
            raise ValueError("uncertainty sets use the linf or l2 norm")
        if not self.rho >= 0:
            raise ValueError("rho must be nonnegative")

    def size(self, s) -> float:
        s = np.asarray(s, dtype=float)
        return float(np.abs(s).max(initial=0.0) if self.norm == Norm.LINF else np.linalg.norm(s))

    def contains(self, s, tol: float = 1e-9) -> bool:
        return self.size(s) <= self.rho + tol

    def project(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if self.norm == Norm.LINF:
            return np.clip(s, -self.rho, self.rho)
        n = np.linalg.norm(s)
        return s if n <= self.rho else s * (self.rho / n)

    def dual(self, a) -> float:
        return dual_norm(a, self.norm)


@dataclass(frozen=True)
class DistanceSpec:
    norm: Norm = Norm.L1
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm(self.norm))
        if self.norm not in (Norm.L1, Norm.LINF):
            raise ValueError("distance norm must be l1 or linf")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).reshape(-1)
            if np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ValueError("distance weights must be positive")
            object.__setattr__(self, "weights", w)

    def _w(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n)
        if self.weights.size != n:
            raise InputError(f"distance weights have length {self.weights.size}, expected {n}")
        return self.weights

    def measure(self, x, factual) -> float:
        d = self._w(len(factual)) * np.abs(np.asarray(x, float) - np.asarray(factual, float))
        return float(d.sum() if self.norm == Norm.L1 else d.max(initial=0.0))


class ScenarioSet:
    """Ordered scenarios, starting with the zero perturbation."""

    def __init__(self, dim: int, uset: UncertaintySet):
        self.uset = uset
        self.scenarios: list[np.ndarray] = [np.zeros(dim)]

    def __len__(self):
        return len(self.scenarios)

    def __iter__(self):
        return iter(self.scenarios)

    def __getitem__(self, k):
        return self.scenarios[k]

    def add(self, s, tol: float = 1e-6) -> np.ndarray:
        """Append ``s``; a norm overshoot up to ``tol`` (cut-loop residue) is projected away."""
        s = np.asarray(s, dtype=float).copy()
        if not self.uset.contains(s, tol):
            raise ValueError(f"scenario of size {self.uset.size(s):.3g} exceeds rho={self.uset.rho}")
        s = self.uset.project(s)
        self.scenarios.append(s)
        return s

    def nearest(self, s) -> float:
        return min(float(np.abs(np.asarray(s) - z).max()) for z in self.scenarios)


@dataclass(frozen=True)
class EngineConfig:
    epsilon: float = 1e-7
    big_m_tree: float = 1e3
    big_m_nn_lb: float = 100.0
    big_m_nn_ub: float = 100.0
    strict_eps: float = 1e-6
    margin: float = 1e-9  # extra slack on non-strict MP rows against roundoff at the boundary
    time_limit: float = 1000.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    track_radius: bool | None = None  # None: on for trees/ensembles, off for networks
    clip_to_box: bool = False
    negate_positive: bool = False
    linear_closed_form: bool = True
    max_iterations: int = 10_000
    polish_steps: int = 3
    trace_path: str | None = None

    def __post_init__(self):
        for name in ("epsilon", "big_m_tree", "big_m_nn_lb", "big_m_nn_ub", "strict_eps", "time_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.margin < 0:
            raise ValueError("margin must be nonnegative")


# -- distance ------------------------------------------------------------

def _x_names(n):
    return [f"x[{i}]" for i in range(n)]


def encode_distance(model: MilpModel, x_vars: Sequence[int], factual, spec: DistanceSpec,
                    mutable=None) -> dict[int, float]:
    """Add auxiliary distance variables and set the objective ``min d(x, factual)``.

    Immutable coordinates (``mutable[i]`` false) are pinned by equality rows
    and carry no distance term. Returns the objective coefficients.
    """
    factual = np.asarray(factual, dtype=float)
    if len(x_vars) != factual.size:
        raise InputError("factual dimension does not match the x variables")
    mutable = np.ones(factual.size, bool) if mutable is None else np.asarray(mutable, bool)
    w = spec._w(factual.size)
    span = []
    for i, k in enumerate(x_vars):
        v = model.variables[k]
        span.append(w[i] * max(v.ub - factual[i], factual[i] - v.lb, 0.0))
        if not mutable[i]:
            model.add_constr({k: 1.0}, "=", factual[i], f"fix[{i}]")
    obj: dict[int, float] = {}
    if spec.norm == Norm.L1:
        for i, k in enumerate(x_vars):
            if not mutable[i]:
                continue
            t = model.add_var(f"t[{i}]", 0.0, span[i])
            model.add_constr({t: 1.0, k: -w[i]}, ">=", -w[i] * factual[i])
            model.add_constr({t: 1.0, k: w[i]}, ">=", w[i] * factual[i])
            obj[t] = 1.0
    else:
        t = model.add_var("t", 0.0, max(span, default=0.0))
        for i, k in enumerate(x_vars):
            if mutable[i]:
                model.add_constr({t: 1.0, k: -w[i]}, ">=", -w[i] * factual[i])
                model.add_constr({t: 1.0, k: w[i]}, ">=", w[i] * factual[i])
        obj[t] = 1.0
    model.set_objective(obj, "min")
    return obj


# -- scenario blocks -----------------------------------------------------

def _rhs(h, s, cfg):
    return h.b - float(h.a @ s) - (cfg.strict_eps if h.strict else cfg.margin)


def _leaf_rows(block, xn, leaf, s, binary, cfg):
    for j, h in enumerate(leaf.constraints):
        row = {xn[i]: float(c) for i, c in enumerate(h.a) if c}
        row[binary] = cfg.big_m_tree
        block.constr(row, "<=", _rhs(h, s, cfg) + cfg.big_m_tree)


def tree_scenario_block(tree: DecisionTree, tau: float, s, k: int, cfg: EngineConfig) -> ModelBlock:
    """Rows forcing ``x + s`` into some positive leaf of ``tree``."""
    xn = _x_names(len(s))
    block = ModelBlock()
    pos = [lf for lf in tree.leaves if lf.weight >= tau]
    if not pos:
        raise NoCounterfactualError("tree has no leaf with weight >= tau")
    pick = {}
    for lf in pos:
        name = block.var(f"l[{k},{lf.id}]", 0, 1, binary=True)
        pick[name] = 1.0
        _leaf_rows(block, xn, lf, s, name, cfg)
    block.constr(pick, "=", 1.0, f"assign[{k}]")
    return block


def ensemble_scenario_block(ens: TreeEnsemble, tau: float, s, k: int, cfg: EngineConfig) -> ModelBlock:
    """Per-tree leaf selection for ``x + s`` plus the averaged vote row."""
    xn = _x_names(len(s))
    block = ModelBlock()
    vote: dict[str, float] = {}
    K = len(ens.trees)
    for t, tree in enumerate(ens.trees):
        pick = {}
        for lf in tree.leaves:
            name = block.var(f"l[{k},{t},{lf.id}]", 0, 1, binary=True)
            pick[name] = 1.0
            if lf.weight:
                vote[name] = lf.weight / K
            _leaf_rows(block, xn, lf, s, name, cfg)
        block.constr(pick, "=", 1.0, f"assign[{k},{t}]")
    block.constr(vote, ">=", tau, f"vote[{k}]")
    return block


def relu_layers(block: ModelBlock, net: ReluNetwork, inputs, tag: str, cfg: EngineConfig):
    """Big-M ReLU encoding; ``inputs`` are ``(coeffs, constant)`` affine forms.

    Returns the output as an affine form over the block's variable names.
    """
    prev = list(inputs)
    n_layers = len(net.weights)
    for l, (W, bias) in enumerate(zip(net.weights, net.biases)):
        pre = []
        for j in range(W.shape[0]):
            coeffs: dict[str, float] = {}
            const = float(bias[j])
            for i, (cf, c0) in enumerate(prev):
                w = float(W[j, i])
                if w == 0.0:
                    continue
                const += w * c0
                for name, c in cf.items():
                    coeffs[name] = coeffs.get(name, 0.0) + w * c
            pre.append((coeffs, const))
        if l == n_layers - 1:
            return pre[0]
        nxt = []
        for j, (coeffs, const) in enumerate(pre):
            v = block.var(f"v[{tag},{l},{j}]", 0.0, cfg.big_m_nn_ub)
            a = block.var(f"a[{tag},{l},{j}]", 0, 1, binary=True)
            neg = {nm: -c for nm, c in coeffs.items()}
            block.constr({**neg, v: 1.0}, ">=", const)
            block.constr({**neg, v: 1.0, a: cfg.big_m_nn_lb}, "<=", const + cfg.big_m_nn_lb)
            block.constr({v: 1.0, a: -cfg.big_m_nn_ub}, "<=", 0.0)
            nxt.append(({v: 1.0}, 0.0))
        prev = nxt
    raise AssertionError("unreachable")


def relu_scenario_block(net: ReluNetwork, tau: float, s, k: int, cfg: EngineConfig) -> ModelBlock:
    xn = _x_names(len(s))
    block = ModelBlock()
    out, const = relu_layers(block, net, [({xn[i]: 1.0}, float(s[i])) for i in range(len(s))], str(k), cfg)
    block.constr(out, ">=", tau - const + cfg.margin, f"out[{k}]")
    return block


def linear_scenario_block(lin: LinearModel, tau: float, s, k: int, cfg: EngineConfig) -> ModelBlock:
    xn = _x_names(len(s))
    block = ModelBlock()
    block.constr({xn[i]: float(c) for i, c in enumerate(lin.beta) if c}, ">=",
                 tau - lin.beta0 - float(lin.beta @ s), f"lin[{k}]")
    return block


def scenario_block(model: TrainedModel, s, k: int, cfg: EngineConfig) -> ModelBlock:
    p = model.params
    if isinstance(p, DecisionTree):
        return tree_scenario_block(p, model.tau, s, k, cfg)
    if isinstance(p, TreeEnsemble):
        return ensemble_scenario_block(p, model.tau, s, k, cfg)
    if isinstance(p, ReluNetwork):
        return relu_scenario_block(p, model.tau, s, k, cfg)
    return linear_scenario_block(p, model.tau, s, k, cfg)


# -- master problem ------------------------------------------------------

class MasterProblem:
    """Append-only MP for one model and factual instance."""

    def __init__(self, model: TrainedModel, factual, dist: DistanceSpec | None = None,
                 cfg: EngineConfig | None = None):
        self.trained = model
        self.factual = np.asarray(factual, dtype=float)
        if self.factual.shape != (model.dim,):
            raise InputError(f"factual must have dimension {model.dim}")
        self.dist = dist or DistanceSpec()
        self.cfg = cfg or EngineConfig()
        self.warnings: list[str] = []
        self.n_scenarios = 0
        sp = model.space
        self.model = MilpModel("master")
        self.x_idx = [self.model.add_var(nm, sp.lower[i], sp.upper[i]) for i, nm in enumerate(_x_names(sp.dim))]
        encode_distance(self.model, self.x_idx, self.factual, self.dist, sp.mutable)
        p = model.params
        if isinstance(p, TreeEnsemble):
            best = np.mean([t.weights().max() for t in p.trees])
            if best < model.tau:
                raise NoCounterfactualError("no leaf combination reaches the threshold")

    def add_scenario(self, s) -> None:
        block = scenario_block(self.trained, np.asarray(s, dtype=float), self.n_scenarios, self.cfg)
        add_scenario_block(self.model, block)
        self.n_scenarios += 1

    def solve(self, time_limit: float | None = None) -> SolveOutcome:
        out = solve(self.model, self.cfg.solver, time_limit)
        if out.has_solution and isinstance(self.trained.params, ReluNetwork):
            note = relu_bigm_check(self.trained.params, self.point(out), None, self.cfg)
            if note and note not in self.warnings:
                self.warnings.append(note)
        return out

    def point(self, out: SolveOutcome) -> np.ndarray:
        x = out.values(self.x_idx).copy()
        sp = self.trained.space
        x = np.clip(x, sp.lower, sp.upper)
        x[sp.immutable_mask] = self.factual[sp.immutable_mask]
        return x


def relu_bigm_check(net: ReluNetwork, x, scenarios, cfg: EngineConfig, tol: float = 1e-6) -> str | None:
    """Warning text when some pre-activation at ``x + s`` reaches the big-M bounds."""
    pts = np.atleast_2d(x) if scenarios is None else np.asarray(x)[None, :] + np.atleast_2d(scenarios)
    _, pre = net.forward(pts, return_preactivations=True)
    worst = max((float(np.abs(z).max()) for z in pre), default=0.0)
    limit = min(cfg.big_m_nn_lb, cfg.big_m_nn_ub)
    if worst > limit - tol:
        return f"big-M {limit:g} may be insufficient: |pre-activation| reaches {worst:.4g}"
    return None


def _build(model: TrainedModel, factual, Z, cfg, dist) -> MilpModel:
    mp = MasterProblem(model, factual, dist, cfg)
    for s in Z:
        mp.add_scenario(s)
    return mp.model


def _wrap(params, tau, space):
    return TrainedModel(params, tau, space or FeatureSpace.unit(params.dim))


def build_mp_tree(tree: DecisionTree, tau, factual, Z, cfg: EngineConfig | None = None,
                  dist: DistanceSpec | None = None, space: FeatureSpace | None = None) -> MilpModel:
    return _build(_wrap(tree, tau, space), factual, Z, cfg, dist)


def build_mp_ensemble(ens: TreeEnsemble, tau, factual, Z, cfg: EngineConfig | None = None,
                      dist: DistanceSpec | None = None, space: FeatureSpace | None = None) -> MilpModel:
    return _build(_wrap(ens, tau, space), factual, Z, cfg, dist)


def build_mp_relu(net: ReluNetwork, tau, factual, Z, cfg: EngineConfig | None = None,
                  dist: DistanceSpec | None = None, space: FeatureSpace | None = None) -> MilpModel:
    return _build(_wrap(net, tau, space), factual, Z, cfg, dist)


# -- linear closed form --------------------------------------------------

def linear_radius(lin: LinearModel, tau: float, x, norm, mutable=None) -> float:
    """Distance from ``x`` to the closed negative halfspace ``beta @ x + beta0 <= tau``."""
    beta = lin.beta if mutable is None else np.where(mutable, lin.beta, 0.0)
    margin = float(lin.beta @ np.asarray(x, float) + lin.beta0 - tau)
    if margin < 0:
        return 0.0
    dn = dual_norm(beta, norm)
    return float("inf") if dn == 0 else margin / dn


def robust_linear_ce(model: LinearModel, tau: float, factual, uset: UncertaintySet,
                     dist: DistanceSpec | None = None, space: FeatureSpace | None = None,
                     cfg: EngineConfig | None = None) -> RceResult:
    """Closest point with ``beta @ x - rho ||beta||_* + beta0 >= tau``, as one LP."""
    cfg = cfg or EngineConfig()
    dist = dist or DistanceSpec()
    space = space or FeatureSpace.unit(model.dim)
    if not np.any(model.beta):
        raise ValueError("linear model needs a nonzero beta")
    start = time.perf_counter()
    factual = np.asarray(factual, dtype=float)
    m = MilpModel("linear")
    x_idx = [m.add_var(nm, space.lower[i], space.upper[i]) for i, nm in enumerate(_x_names(space.dim))]
    encode_distance(m, x_idx, factual, dist, space.mutable)
    beta_m = np.where(space.mutable, model.beta, 0.0)
    shift = uset.rho * uset.dual(beta_m)
    m.add_constr({k: float(c) for k, c in zip(x_idx, model.beta) if c}, ">=", tau - model.beta0 + shift, "robust")
    out = solve(m, cfg.solver)
    elapsed = time.perf_counter() - start
    if out.status != Status.OPTIMAL:
        rec = IterationRecord(0, float("nan"), elapsed, None, 0.0, None, None, None)
        return RceResult(None, float("nan"), uset.rho, float("nan"), RunStatus.INFEASIBLE, [rec],
                         diagnostics=["robust halfspace misses the feature box"], method="closed_form",
                         wall_time=elapsed)
    x = np.clip(out.values(x_idx), space.lower, space.upper)
    x[space.immutable_mask] = factual[space.immutable_mask]
    d = dist.measure(x, factual)
    rbar = linear_radius(model, tau, x, uset.norm, space.mutable)
    rec = IterationRecord(0, float(out.objective), elapsed, None, 0.0, None, rbar, x.copy())
    return RceResult(x, d, uset.rho, rbar, RunStatus.CONVERGED, [rec], [(x.copy(), d, rbar)],
                     method="closed_form", wall_time=elapsed)
