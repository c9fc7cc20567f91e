"""Target-velocity MILP: assembly, branch-and-bound, exhaustive oracle.

Decision vector is ``[v_1 .. v_N, b_1 .. b_P]``. Conflict ``k`` between
vehicles ``i`` and ``j`` contributes two rows::

    (Le - Lj') v_i + (Ls + Li') v_j + M1 b_k <= M1     # b_k = 1: i clears first
    (Ls + Lj') v_i + (Le - Li') v_j - M2 b_k <= 0      # b_k = 0: j clears first

so ``b_k = 1`` enforces the first disjunct and ``b_k = 0`` the second.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lp import OPTIMAL, solve_lp

INFEASIBLE = "infeasible"

FEAS_TOL = 1e-7


@dataclass(frozen=True)
class ConflictInput:
    """One conflicting pair in its local frame (distances in meters)."""

    i: int
    j: int
    l_i: float
    l_j: float
    l_enter: float
    l_safe: float


@dataclass
class MilpProblem:
    n_vehicles: int
    n_conflicts: int
    a_matrix: np.ndarray
    rhs: np.ndarray
    v_min: float
    v_max: float
    conflict_index: list[tuple[int, int, int]]  # (i, j, binary column)
    big_m: np.ndarray
    conflicts: list[ConflictInput] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return self.n_vehicles + self.n_conflicts


@dataclass
class MilpSolution:
    velocities: np.ndarray
    binaries: np.ndarray
    objective: float
    status: str
    solve_time: float = 0.0
    nodes: int = 0
    lp_solves: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def assemble(conflicts, n: int, bounds: tuple[float, float]) -> MilpProblem:
    """Build the big-M constraint system for ``n`` vehicles.

    Conflicts with an infinite distance (empty lane) are dropped, which is the
    same as placing that vehicle infinitely far away.
    """
    v_min, v_max = map(float, bounds)
    if not (v_max > v_min > 0):
        raise ValueError(f"need v_max > v_min > 0, got {bounds}")
    active = []
    for c in conflicts:
        if not (0 <= c.i < n and 0 <= c.j < n) or c.i == c.j:
            raise ValueError(f"bad conflict vehicle indices ({c.i}, {c.j})")
        if math.isinf(c.l_i) or math.isinf(c.l_j):
            continue
        if not (c.l_i > c.l_enter and c.l_j > c.l_enter):
            raise ValueError(
                f"conflict ({c.i}, {c.j}): both vehicles must be upstream of the "
                f"entry threshold (L'={c.l_i:.3f}, {c.l_j:.3f}, L_enter={c.l_enter:.3f})"
            )
        if c.l_safe < -c.l_enter:
            raise ValueError("empty occupancy window")
        active.append(c)

    p = len(active)
    a = np.zeros((2 * p, n + p))
    rhs = np.zeros(2 * p)
    big_m = np.zeros(2 * p)
    index = []
    for k, c in enumerate(active):
        row1 = (c.l_enter - c.l_j, c.l_safe + c.l_i)
        row2 = (c.l_safe + c.l_j, c.l_enter - c.l_i)
        for r, (ci, cj) in enumerate((row1, row2)):
            # tightest valid M: largest value of the row over the velocity box, plus one
            worst = sum(coef * (v_max if coef > 0 else v_min) for coef in (ci, cj))
            big_m[2 * k + r] = max(worst, 0.0) + 1.0
            a[2 * k + r, c.i] = ci
            a[2 * k + r, c.j] = cj
        if not np.all(np.isfinite(big_m[2 * k : 2 * k + 2])) or big_m[2 * k : 2 * k + 2].max() > 1e12:
            raise OverflowError(f"big-M overflow for conflict ({c.i}, {c.j})")
        a[2 * k, n + k] = big_m[2 * k]
        a[2 * k + 1, n + k] = -big_m[2 * k + 1]
        rhs[2 * k] = big_m[2 * k]
        index.append((c.i, c.j, n + k))
    return MilpProblem(n, p, a, rhs, v_min, v_max, index, big_m, active)


def _disjunct_residuals(problem: MilpProblem, v: np.ndarray) -> np.ndarray:
    """(P x 2) scaled violation of each conflict's two disjuncts at ``v``."""
    n = problem.n_vehicles
    lhs = problem.a_matrix[:, :n] @ v
    scale = np.abs(problem.a_matrix[:, :n]).max(axis=1) * problem.v_max
    return (lhs / scale).reshape(-1, 2)


def _binaries_for(problem: MilpProblem, v: np.ndarray, lo, hi) -> np.ndarray | None:
    """Integral binaries consistent with ``v``, or None.

    When both orderings of a conflict hold, the one with more slack wins, which
    is the order in which the vehicles would actually arrive at ``v``.
    """
    res = _disjunct_residuals(problem, v)
    b = np.zeros(problem.n_conflicts)
    for k in range(problem.n_conflicts):
        ok1 = res[k, 0] <= FEAS_TOL and hi[k] >= 1
        ok0 = res[k, 1] <= FEAS_TOL and lo[k] <= 0
        if ok1 and ok0:
            b[k] = 1.0 if res[k, 0] < res[k, 1] else 0.0
        elif ok1 or ok0:
            b[k] = 1.0 if ok1 else 0.0
        else:
            return None
    return b


def pairwise_feasible(problem: MilpProblem) -> bool:
    """Necessary condition: every conflict alone admits an ordering within the bounds.

    Each disjunct reads ``v_t <= r * v_s``; it is satisfiable inside the box
    exactly when ``v_min <= r * v_max``.
    """
    if problem.n_conflicts == 0:
        return True
    _, _, ratio = _ratio_constraints(problem)
    ok = ratio * problem.v_max >= problem.v_min * (1 - 1e-12)
    return bool(np.all(ok.any(axis=1)))

def solve(problem: MilpProblem) -> MilpSolution:
    """Branch-and-bound over the priority binaries with best-bound node selection."""
    t0 = time.perf_counter()
    n, p = problem.n_vehicles, problem.n_conflicts
    c = np.concatenate([np.ones(n), np.zeros(p)])
    v_lb = np.full(n, problem.v_min)
    v_ub = np.full(n, problem.v_max)

    lp_count = 0
    if not pairwise_feasible(problem):
        # some conflict has no ordering at all inside the box: skip the search
        return MilpSolution(
            np.full(n, np.nan), np.zeros(p), float("nan"), INFEASIBLE, time.perf_counter() - t0, 0, 0
        )

    def relax(lo, hi):
        nonlocal lp_count
        lp_count += 1
        return solve_lp(
            c,
            problem.a_matrix,
            problem.rhs,
            np.concatenate([v_lb, lo]),
            np.concatenate([v_ub, hi]),
            feas_tol=FEAS_TOL,
        )

    best_obj = -math.inf
    best_v = best_b = None
    heap: list = []
    seq = 0
    nodes = 0

    def push(lo, hi):
        nonlocal seq, best_obj, best_v, best_b
        res = relax(lo, hi)
        if res.status != OPTIMAL:
            return
        if res.objective <= best_obj + 1e-9:
            return
        v = res.x[:n]
        b = _binaries_for(problem, v, lo, hi)
        if b is None and np.all(lo == hi):
            b = lo.copy()
        if b is not None:
            best_obj, best_v, best_b = res.objective, v.copy(), b
            return
        heapq.heappush(heap, (-res.objective, seq, lo, hi, v))
        seq += 1

    push(np.zeros(p), np.ones(p))
    while heap:
        neg_bound, _, lo, hi, v = heapq.heappop(heap)
        if -neg_bound <= best_obj + 1e-9:
            break
        nodes += 1
        res = _disjunct_residuals(problem, v)
        free = np.flatnonzero(lo < hi)
        viol = np.minimum(res[free, 0], res[free, 1])
        k = int(free[np.argmax(viol)])
        for value in (0.0, 1.0):
            clo, chi = lo.copy(), hi.copy()
            clo[k] = chi[k] = value
            push(clo, chi)

    elapsed = time.perf_counter() - t0
    if best_v is None:
        return MilpSolution(
            np.full(n, np.nan), np.zeros(p), float("nan"), INFEASIBLE, elapsed, nodes, lp_count
        )
    return MilpSolution(best_v, best_b, float(best_v.sum()), OPTIMAL, elapsed, nodes, lp_count)

def _ratio_constraints(problem: MilpProblem):
    """Read each row's velocity part as ``v_t <= r * v_s``.

    Returns (target, source, ratio) arrays of shape (P, 2); column 0 is the
    row enforced by ``b = 1``, column 1 the row enforced by ``b = 0``.
    ``ratio = -inf`` marks a row no positive velocity can satisfy and
    ``target = -1`` a row every positive velocity satisfies.
    """
    n, p = problem.n_vehicles, problem.n_conflicts
    tgt = np.full((p, 2), -1, dtype=int)
    src = np.zeros((p, 2), dtype=int)
    ratio = np.ones((p, 2))
    for k in range(p):
        for r in range(2):
            row = problem.a_matrix[2 * k + (0 if r == 0 else 1), :n]
            nz = np.flatnonzero(row)
            pos = [q for q in nz if row[q] > 0]
            negs = [q for q in nz if row[q] < 0]
            if len(pos) == 0:
                continue
            if len(negs) == 0:
                ratio[k, r] = -np.inf
                tgt[k, r] = pos[0]
                continue
            t, s = pos[0], negs[0]
            tgt[k, r], src[k, r], ratio[k, r] = t, s, -row[s] / row[t]
    return tgt, src, ratio

def oracle_solve(problem: MilpProblem, max_p: int = 20) -> MilpSolution:
    """Exhaustive reference: every binary assignment, each an LP in V alone.

    Each fixed-binary LP has constraints ``v_t <= r v_s`` (r > 0) plus the box,
    so its feasible set is closed under componentwise max and the optimum is
    the greatest feasible point. That point is found by monotone relaxation
    from ``v_max`` (Bellman-Ford in log space); a relaxation that still moves
    after N+1 sweeps, or drops below ``v_min``, proves infeasibility. All
    ``2**P`` LPs are evaluated together as numpy columns.
    """
    t0 = time.perf_counter()
    n, p = problem.n_vehicles, problem.n_conflicts
    if p > max_p:
        raise ValueError(f"oracle limited to P <= {max_p}, got {p}")
    count = 1 << p
    # assignment a has b_k = bit (p-1-k): enumeration order is lexicographic in b
    codes = np.arange(count, dtype=np.int64)
    bits = ((codes[:, None] >> (p - 1 - np.arange(p))[None, :]) & 1).astype(bool)
    tgt, src, ratio = _ratio_constraints(problem)

    v = np.full((count, n), problem.v_max)
    dead = np.zeros(count, dtype=bool)
    for k in range(p):
        for r, active in ((0, bits[:, k]), (1, ~bits[:, k])):
            if tgt[k, r] >= 0 and ratio[k, r] == -np.inf:
                dead |= active

    def sweep():
        moved = np.zeros(count, dtype=bool)
        for k in range(p):
            for r, active in ((0, bits[:, k]), (1, ~bits[:, k])):
                t = tgt[k, r]
                if t < 0 or ratio[k, r] == -np.inf:
                    continue
                cand = ratio[k, r] * v[:, src[k, r]]
                upd = active & (cand < v[:, t])
                moved |= upd & (cand < v[:, t] * (1 - 1e-12))
                v[upd, t] = cand[upd]
        return moved

    for _ in range(n + 1):
        if not sweep().any():
            break
    still = sweep()
    dead |= still
    dead |= np.any(v < problem.v_min * (1 - 1e-12), axis=1)
    obj = np.where(dead, -np.inf, v.sum(axis=1))

    elapsed = time.perf_counter() - t0
    if np.all(dead):
        return MilpSolution(
            np.full(n, np.nan), np.zeros(p), float("nan"), INFEASIBLE, elapsed, 0, count
        )
    best = obj.max()
    a = int(np.flatnonzero(obj >= best - 1e-9)[0])
    return MilpSolution(
        np.clip(v[a], problem.v_min, problem.v_max),
        bits[a].astype(float),
        float(v[a].sum()),
        OPTIMAL,
        elapsed,
        0,
        count,
    )

def priority_matrix(solution: MilpSolution, conflict_index, n: int | None = None) -> np.ndarray:
    """S with ``s_ij = 1`` when vehicle i clears the shared conflict point first."""
    if not solution.optimal:
        raise ValueError("priority matrix needs an optimal solution")
    n = len(solution.velocities) if n is None else n
    s = np.zeros((n, n), dtype=int)
    for k, (i, j, _col) in enumerate(conflict_index):
        first, second = (i, j) if solution.binaries[k] >= 0.5 else (j, i)
        s[first, second] = 1
        s[second, first] = -1
    return s

def check_disjunctions(problem: MilpProblem, v, tol: float = 1e-6) -> bool:
    """True if every conflict has at least one ordering satisfied at ``v``.

    Evaluated on the original either-or constraints, not the big-M rows.
    """
    for c in problem.conflicts:
        vi, vj = float(v[c.i]), float(v[c.j])
        scale = max(c.l_i, c.l_j) * problem.v_max
        i_first = (c.l_enter - c.l_j) * vi + (c.l_safe + c.l_i) * vj
        j_first = (c.l_enter - c.l_i) * vj + (c.l_safe + c.l_j) * vi
        if min(i_first, j_first) > tol * scale:
            return False
    return True

# --- instance / solution files --------------------------------------------------------

def load_instance(path) -> tuple[list[ConflictInput], int, tuple[float, float]]:
    data = json.loads(Path(path).read_text())
    try:
        n = int(data["n"])
        bounds = (float(data["v_min"]), float(data["v_max"]))
        conflicts = [
            ConflictInput(
                int(c["i"]),
                int(c["j"]),
                float(c["l_i"]),
                float(c["l_j"]),
                float(c["l_enter"]),
                float(c["l_safe"]),
            )
            for c in data.get("conflicts", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed instance ({exc!r})") from None
    return conflicts, n, bounds

def dump_instance(path, conflicts, n, bounds) -> None:
    data = {
        "n": n,
        "v_min": bounds[0],
        "v_max": bounds[1],
        "conflicts": [c.__dict__ for c in conflicts],
    }
    Path(path).write_text(json.dumps(data, indent=2) + "\n")

def solution_to_dict(sol: MilpSolution) -> dict:
    ok = sol.optimal
    return {
        "status": sol.status,
        "objective": round(sol.objective, 6) if ok else None,
        "velocities": [round(float(v), 6) for v in sol.velocities] if ok else [],
        "binaries": [int(b) for b in sol.binaries] if ok else [],
        "nodes": sol.nodes,
    }
