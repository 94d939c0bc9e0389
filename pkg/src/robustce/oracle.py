"""Brute-force checks that share no code path with the MILP engine.

``grid_ce`` scans a lattice over the feature box and tests robustness with a
distance transform of the negative lattice points; ``sample_audit`` draws
perturbations; ``enumerate_milp`` fixes every binary pattern and hands the
remaining LP to SciPy's HiGHS.
"""
from __future__ import annotations

import itertools
import math
import time

import numpy as np
from scipy import ndimage
from scipy.optimize import linprog

from .formulations import DistanceSpec, Norm, UncertaintySet
from .milp import MilpModel, SolveOutcome, Status
from .models import TrainedModel, scores

MAX_GRID_POINTS = 40_000_000
MAX_ENUM_BINARIES = 12


class OracleRefused(ValueError):
    """The requested brute-force search is too large."""


def _robust_mask(positive: np.ndarray, uset: UncertaintySet, res: float) -> np.ndarray:
    if positive.all():
        return positive.copy()
    if uset.rho == 0:
        return positive.copy()
    if uset.norm == Norm.LINF:
        cells = ndimage.distance_transform_cdt(positive, metric="chessboard")
        return cells * res > uset.rho * (1 + 1e-12)
    d = ndimage.distance_transform_edt(positive, sampling=res)
    return d > uset.rho * (1 + 1e-12)


def grid_ce(model: TrainedModel, factual, uset: UncertaintySet, dist: DistanceSpec | None = None,
            resolution: float = 1e-3):
    """Closest lattice point of the box whose lattice neighbourhood within rho is all +1.

    The lattice has spacing ``resolution`` anchored at the box's lower corner
    and extends ``rho`` beyond the box, since perturbations may leave it.
    Immutable features are held at their factual values. Returns
    ``(point, distance)``, or ``(None, inf)`` when no lattice point qualifies.
    """
    dist = dist or DistanceSpec()
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    factual = np.asarray(factual, dtype=float)
    sp = model.space
    free = np.flatnonzero(sp.mutable)
    if free.size > 3:
        raise OracleRefused(f"grid search over {free.size} mutable features refused (max 3)")
    pad = int(math.ceil(uset.rho / resolution)) + 1
    axes, inside = [], []
    for i in free:
        n = int(math.floor((sp.upper[i] - sp.lower[i]) / resolution + 1e-9))
        k = np.arange(-pad, n + pad + 1)
        axes.append(sp.lower[i] + k * resolution)
        inside.append((k >= 0) & (k <= n))
    total = math.prod(a.size for a in axes)
    if total > MAX_GRID_POINTS:
        raise OracleRefused(f"grid of {total} points exceeds {MAX_GRID_POINTS}")

    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.tile(factual, (total, 1))
    for j, i in enumerate(free):
        pts[:, i] = mesh[j].reshape(-1)
    del mesh
    positive = (scores(model, pts) >= model.tau).reshape([a.size for a in axes])
    robust = _robust_mask(positive, uset, resolution)
    box = np.ix_(*inside)
    cand = robust[box]
    if not cand.any():
        return None, float("inf")
    sub_axes = [a[m] for a, m in zip(axes, inside)]
    w = dist._w(factual.size)[free]
    parts = np.meshgrid(*[w[j] * np.abs(a - factual[i]) for j, (a, i) in enumerate(zip(sub_axes, free))],
                        indexing="ij")
    if dist.norm == Norm.L1:
        d = np.sum(parts, axis=0) if parts else np.zeros(())
    else:
        d = np.max(parts, axis=0) if parts else np.zeros(())
    d = np.where(cand, d, np.inf)
    flat = int(np.argmin(d))
    idx = np.unravel_index(flat, d.shape)
    point = factual.copy()
    for j, i in enumerate(free):
        point[i] = sub_axes[j][idx[j]]
    return point, dist.measure(point, factual)


def _sample(uset: UncertaintySet, mutable: np.ndarray, n: int, rng) -> np.ndarray:
    k = int(mutable.sum())
    out = np.zeros((n, mutable.size))
    if k == 0 or uset.rho == 0 or n == 0:
        return out
    n_in = n // 2
    n_bd = n - n_in
    if uset.norm == Norm.LINF:
        inner = rng.uniform(-uset.rho, uset.rho, size=(n_in, k))
        bd = rng.uniform(-uset.rho, uset.rho, size=(n_bd, k))
        face = rng.integers(0, k, size=n_bd)
        bd[np.arange(n_bd), face] = uset.rho * rng.choice([-1.0, 1.0], size=n_bd)
    else:
        def dirs(m):
            g = rng.standard_normal((m, k))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        inner = dirs(n_in) * (uset.rho * rng.uniform(size=(n_in, 1)) ** (1.0 / k))
        bd = dirs(n_bd) * uset.rho
    out[:, mutable] = np.vstack([inner, bd])
    return out


def sample_audit(model: TrainedModel, x, uset: UncertaintySet, n_samples: int = 10_000, seed: int = 0):
    """Score ``x + s`` for random ``s`` in the set, half of them on its surface.

    Returns ``(min_score, worst_s, all_valid)`` using the exact model score.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=float)
    S = _sample(uset, model.space.mutable, n_samples, rng)
    vals = scores(model, x[None, :] + S)
    k = int(np.argmin(vals))
    return float(vals[k]), S[k].copy(), bool(np.all(vals >= model.tau))


def _lp_highs(c, A, senses, b, lb, ub):
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, s, r in zip(A, senses, b):
        if s < 0:
            A_ub.append(row); b_ub.append(r)
        elif s > 0:
            A_ub.append(-row); b_ub.append(-r)
        else:
            A_eq.append(row); b_eq.append(r)
    kw = {}
    if A_ub:
        kw.update(A_ub=np.array(A_ub), b_ub=np.array(b_ub))
    if A_eq:
        kw.update(A_eq=np.array(A_eq), b_eq=np.array(b_eq))
    return linprog(c, bounds=list(zip(lb, ub)), method="highs", **kw)


def enumerate_milp(model: MilpModel, conic_tol: float = 1e-9, max_cuts: int = 500) -> SolveOutcome:
    """Solve every binary assignment as an LP (HiGHS) and keep the best.

    Conic rows are handled with tangent cuts local to each LP.
    """
    bins = model.binary_indices
    if bins.size > MAX_ENUM_BINARIES:
        raise OracleRefused(f"{bins.size} binaries exceed the enumeration limit {MAX_ENUM_BINARIES}")
    start = time.perf_counter()
    c, A, senses, b, lb0, ub0 = model.to_arrays()
    best_x, best = None, np.inf
    count = 0
    for pattern in itertools.product((0.0, 1.0), repeat=int(bins.size)):
        lb, ub = lb0.copy(), ub0.copy()
        lb[bins] = ub[bins] = pattern
        A2, s2, b2 = A, senses, b
        x = None
        for _ in range(max_cuts):
            count += 1
            r = _lp_highs(c, A2, s2, b2, lb, ub)
            if r.status != 0:
                x = None
                break
            x = r.x
            cuts = []
            for row in model.conic_rows:
                v = x[list(row.indices)]
                nv = float(np.linalg.norm(v))
                cap = x[row.radius_var] if row.radius_var is not None else row.radius
                if nv - cap > conic_tol and nv > 0:
                    cut = np.zeros(model.n_vars)
                    cut[list(row.indices)] = v / nv
                    rhs = row.radius
                    if row.radius_var is not None:
                        cut[row.radius_var] -= 1.0
                        rhs = 0.0
                    cuts.append((cut, rhs))
            if not cuts:
                break
            A2 = np.vstack([A2] + [ct[None, :] for ct, _ in cuts]) if A2.size else np.array([ct for ct, _ in cuts])
            s2 = np.concatenate([s2, -np.ones(len(cuts), dtype=int)])
            b2 = np.concatenate([b2, [r_ for _, r_ in cuts]])
        if x is None:
            continue
        val = float(c @ x)
        if val < best - 1e-12:
            best, best_x = val, x
    wall = time.perf_counter() - start
    if best_x is None:
        return SolveOutcome(Status.INFEASIBLE, float("nan"), None, count, wall)
    return SolveOutcome(Status.OPTIMAL, model.evaluate_objective(best_x), best_x, count, wall)
