"""Dense two-phase primal simplex for box-bounded linear programs.

Solves ``max c.x  s.t.  A x <= b,  lb <= x <= ub`` with finite lower bounds.
Nonbasic variables sit at one of their bounds, so fixing a variable for
branch-and-bound is just ``lb == ub``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None
    objective: float
    iterations: int


def solve_lp(
    c,
    a_ub,
    b_ub,
    lb,
    ub,
    *,
    feas_tol: float = 1e-7,
    opt_tol: float = 1e-9,
    max_iter: int = 10_000,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    n = c.size
    a = np.asarray(a_ub, dtype=float).reshape(-1, n)
    b = np.asarray(b_ub, dtype=float).reshape(-1)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if not np.all(np.isfinite(lb)):
        raise ValueError("all lower bounds must be finite")
    if np.any(lb > ub + feas_tol):
        return LPResult(INFEASIBLE, None, float("nan"), 0)
    m = a.shape[0]

    # row scaling keeps the feasibility tolerance meaningful for big-M rows
    scale = np.max(np.abs(a), axis=1) if m else np.zeros(0)
    scale[scale == 0] = 1.0
    a = a / scale[:, None]
    b = b / scale

    # start objective-improving variables at their upper bound when it is finite
    start = np.where((c > 0) & np.isfinite(ub), ub, lb)
    resid = b - a @ start
    neg = np.flatnonzero(resid < -feas_tol)
    n_art = neg.size
    ntot = n + m + n_art

    tab = np.zeros((m, ntot))
    tab[:, :n] = a
    tab[:, n : n + m] = np.eye(m)
    for k, r in enumerate(neg):
        tab[r, n + m + k] = -1.0
    lo = np.concatenate([lb, np.zeros(m + n_art)])
    hi = np.concatenate([ub, np.full(m, np.inf), np.full(n_art, np.inf)])

    x = np.concatenate([start, np.zeros(m + n_art)])
    basis = np.arange(n, n + m)
    for k, r in enumerate(neg):
        tab[r] *= -1.0
        basis[r] = n + m + k
    is_art_row = np.zeros(m, dtype=bool)
    is_art_row[neg] = True
    x[basis] = np.where(is_art_row, -resid, resid)
    is_basic = np.zeros(ntot, dtype=bool)
    is_basic[basis] = True

    iters = 0
    if n_art:
        cost1 = np.zeros(ntot)
        cost1[n + m :] = -1.0
        status, iters = _iterate(tab, x, lo, hi, basis, is_basic, cost1, opt_tol, max_iter, iters)
        if status != OPTIMAL or x[n + m :].sum() > feas_tol:
            return LPResult(INFEASIBLE, None, float("nan"), iters)
        hi[n + m :] = 0.0  # artificials stay at zero from here on
        x[n + m :] = np.where(is_basic[n + m :], x[n + m :], 0.0)

    cost = np.zeros(ntot)
    cost[:n] = c
    status, iters = _iterate(tab, x, lo, hi, basis, is_basic, cost, opt_tol, max_iter, iters)
    if status != OPTIMAL:
        return LPResult(status, None, float("nan"), iters)
    xs = np.clip(x[:n], lb, ub)
    return LPResult(OPTIMAL, xs, float(c @ xs), iters)


def _iterate(tab, x, lo, hi, basis, is_basic, cost, opt_tol, max_iter, iters):
    m, ntot = tab.shape
    fixed = hi - lo <= 0
    degenerate_run = 0
    while True:
        if iters >= max_iter:
            return "iteration_limit", iters
        d = cost - cost[basis] @ tab if m else cost.copy()
        at_lo = x <= lo + 1e-12
        cand = ~is_basic & ~fixed & ((at_lo & (d > opt_tol)) | (~at_lo & (d < -opt_tol)))
        if not cand.any():
            return OPTIMAL, iters
        idx = np.flatnonzero(cand)
        # Dantzig pricing, Bland's rule once pivots stall
        j = int(idx[0]) if degenerate_run > 50 else int(idx[np.argmax(np.abs(d[idx]))])
        direction = 1.0 if at_lo[j] else -1.0
        alpha = direction * tab[:, j]

        theta = hi[j] - lo[j]
        leave_row = -1
        xb, lob, hib = x[basis], lo[basis], hi[basis]
        lim = np.full(m, np.inf)
        dec = alpha > 1e-11
        inc = (alpha < -1e-11) & np.isfinite(hib)
        lim[dec] = (xb[dec] - lob[dec]) / alpha[dec]
        lim[inc] = (hib[inc] - xb[inc]) / -alpha[inc]
        np.maximum(lim, 0.0, out=lim)
        if m and lim.min() < theta - 1e-12:
            best = lim.min()
            ties = np.flatnonzero(lim <= best + 1e-12)
            # lowest variable index among ties keeps the choice deterministic
            leave_row = int(ties[np.argmin(basis[ties])])
            theta = float(lim[leave_row])
        if not np.isfinite(theta):
            return UNBOUNDED, iters
        iters += 1
        degenerate_run = degenerate_run + 1 if theta <= 1e-12 else 0

        x[basis] -= theta * alpha
        x[j] += direction * theta
        if leave_row < 0:
            x[j] = hi[j] if direction > 0 else lo[j]  # bound flip, basis unchanged
            continue
        k = basis[leave_row]
        x[k] = lo[k] if alpha[leave_row] > 0 else hi[k]
        piv = tab[leave_row, j]
        tab[leave_row] /= piv
        col = tab[:, j].copy()
        col[leave_row] = 0.0
        tab -= np.outer(col, tab[leave_row])
        is_basic[k] = False
        is_basic[j] = True
        basis[leave_row] = j
