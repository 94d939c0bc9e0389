"""Dense bounded-variable primal simplex.

Solves ``min c @ x`` subject to ``A x (<=, =, >=) b`` and ``lb <= x <= ub``
with all bounds finite. Two phases on an explicit tableau: phase one drives
artificial variables to zero, phase two optimises the true objective with
artificials pinned at zero. Dantzig pricing switches to Bland's rule once the
objective stalls for too long.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LE, EQ, GE = -1, 0, 1

_PIVOT_TOL = 1e-9


class SolverError(RuntimeError):
    """Numerical failure inside the reference solver."""


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


def _run(T, beta, basis, d, ub, at_upper, allowed, opt_tol, max_iter, stall_limit):
    """Pivot until optimal. Returns (status, iterations)."""
    m, N = T.shape
    is_basic = np.zeros(N, dtype=bool)
    is_basic[basis] = True
    z = 0.0
    best_z = np.inf
    stall = 0
    bland = False
    for it in range(max_iter):
        at_low = ~at_upper
        elig = allowed & ~is_basic & (
            (at_low & (d < -opt_tol)) | (at_upper & (d > opt_tol) & np.isfinite(ub))
        )
        cand = np.flatnonzero(elig)
        if cand.size == 0:
            return "optimal", it
        if bland:
            j = int(cand[0])
        else:
            j = int(cand[np.argmax(np.abs(d[cand]))])
        delta = 1.0 if not at_upper[j] else -1.0
        alpha = T[:, j]
        da = delta * alpha

        t_best = ub[j]
        r = -1
        to_upper = False
        dec = da > _PIVOT_TOL
        if dec.any():
            idx = np.flatnonzero(dec)
            ratios = np.maximum(beta[idx], 0.0) / da[idx]
            k = int(np.argmin(ratios))
            if ratios[k] < t_best:
                t_best = ratios[k]
                r, to_upper = _pick_row(idx, ratios, da, basis, bland, t_best), False
        inc = da < -_PIVOT_TOL
        if inc.any():
            idx = np.flatnonzero(inc)
            ubb = ub[basis[idx]]
            fin = np.isfinite(ubb)
            if fin.any():
                idx = idx[fin]
                ratios = np.maximum(ubb[fin] - beta[idx], 0.0) / (-da[idx])
                k = int(np.argmin(ratios))
                if ratios[k] < t_best:
                    t_best = ratios[k]
                    r, to_upper = _pick_row(idx, ratios, -da, basis, bland, t_best), True

        if not np.isfinite(t_best):
            return "unbounded", it

        z += d[j] * delta * t_best
        beta -= t_best * da
        if r < 0:
            # bound flip, basis unchanged
            at_upper[j] = not at_upper[j]
        else:
            leaving = basis[r]
            beta[r] = t_best if delta > 0 else ub[j] - t_best
            piv = T[r, j]
            T[r] /= piv
            col = T[:, j].copy()
            col[r] = 0.0
            T -= np.outer(col, T[r])
            d -= d[j] * T[r]
            d[j] = 0.0
            basis[r] = j
            is_basic[j] = True
            is_basic[leaving] = False
            at_upper[leaving] = to_upper
            at_upper[j] = False

        if z < best_z - 1e-12 * (1.0 + abs(best_z if np.isfinite(best_z) else 0.0)):
            best_z = z
            stall = 0
        else:
            stall += 1
            if stall > stall_limit:
                bland = True
    raise SolverError(f"simplex iteration limit {max_iter} reached")


def _pick_row(idx, ratios, rate, basis, bland, t_best):
    ties = np.flatnonzero(ratios <= t_best + 1e-12)
    if bland:
        k = ties[np.argmin(basis[idx[ties]])]
    else:
        k = ties[np.argmax(rate[idx[ties]])]
    return int(idx[k])


def solve_standard(c, A, senses, b, lb, ub, feas_tol=1e-7, opt_tol=1e-9, max_iter=None):
    """Solve a bounded LP in row form.

    Parameters
    ----------
    c : (n,) objective, minimised.
    A : (m, n) dense constraint matrix.
    senses : (m,) ints, ``LE``, ``EQ`` or ``GE``.
    b : (m,) right-hand sides.
    lb, ub : (n,) finite bounds.
    """
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    n = c.size
    A = np.asarray(A, dtype=float).reshape(-1, n)
    b = np.asarray(b, dtype=float).reshape(-1)
    senses = np.asarray(senses, dtype=int).reshape(-1)
    m = A.shape[0]

    width = ub - lb
    if np.any(width < -feas_tol):
        return LPResult("infeasible", None, np.inf, 0)
    width = np.maximum(width, 0.0)
    free = width > 0.0
    rhs = b - A @ lb
    Af = A[:, free]
    cf = c[free]
    uf = width[free]
    nf = Af.shape[1]
    base_obj = float(c @ lb)

    if m == 0:
        y = np.where(cf < 0, uf, 0.0)
        x = lb.copy()
        x[free] += y
        return LPResult("optimal", x, float(c @ x), 0)

    # slack columns: +1 for <=, -1 for >=
    n_slack = int(np.count_nonzero(senses != EQ))
    S = np.zeros((m, n_slack))
    slack_row = np.flatnonzero(senses != EQ)
    S[slack_row, np.arange(n_slack)] = np.where(senses[slack_row] == LE, 1.0, -1.0)

    flip = rhs < 0
    Af = np.where(flip[:, None], -Af, Af)
    S = np.where(flip[:, None], -S, S)
    rhs = np.abs(rhs)

    # rows whose slack coefficient is now +1 can start with the slack basic
    basis = np.empty(m, dtype=int)
    need_art = np.ones(m, dtype=bool)
    for k, row in enumerate(slack_row):
        if S[row, k] > 0:
            basis[row] = nf + k
            need_art[row] = False
    art_rows = np.flatnonzero(need_art)
    n_art = art_rows.size
    Art = np.zeros((m, n_art))
    Art[art_rows, np.arange(n_art)] = 1.0
    basis[art_rows] = nf + n_slack + np.arange(n_art)

    T = np.hstack([Af, S, Art])
    M0 = T.copy()
    N = T.shape[1]
    ub_all = np.concatenate([uf, np.full(n_slack, np.inf), np.full(n_art, np.inf)])
    at_upper = np.zeros(N, dtype=bool)
    beta = rhs.copy()
    allowed = np.ones(N, dtype=bool)
    if max_iter is None:
        max_iter = 50 * (m + N) + 1000
    stall_limit = 5 * (m + N)
    iters = 0

    if n_art:
        cost1 = np.zeros(N)
        cost1[nf + n_slack:] = 1.0
        d = cost1 - cost1[basis] @ T
        _, it = _run(T, beta, basis, d, ub_all, at_upper, allowed, opt_tol, max_iter, stall_limit)
        iters += it
        infeas = float(np.sum(beta[basis >= nf + n_slack]))
        if infeas > max(feas_tol, 1e-12 * float(np.max(rhs))):
            return LPResult("infeasible", None, np.inf, iters)
        ub_all[nf + n_slack:] = 0.0
        allowed[nf + n_slack:] = False

    cost2 = np.zeros(N)
    cost2[:nf] = cf
    d = cost2 - cost2[basis] @ T
    status, it = _run(T, beta, basis, d, ub_all, at_upper, allowed, opt_tol, max_iter, stall_limit)
    iters += it
    if status == "unbounded":
        return LPResult("unbounded", None, -np.inf, iters)

    vals = np.where(at_upper, ub_all, 0.0)
    vals[basis] = beta
    # recompute basic values from the original columns to shed pivot drift
    nonbasic = np.ones(N, dtype=bool)
    nonbasic[basis] = False
    try:
        vals[basis] = np.linalg.solve(M0[:, basis], rhs - M0[:, nonbasic] @ vals[nonbasic])
    except np.linalg.LinAlgError:
        pass
    y = np.clip(vals[:nf], 0.0, uf)
    x = lb.copy()
    x[free] += y
    return LPResult("optimal", x, float(c @ x), iters)
