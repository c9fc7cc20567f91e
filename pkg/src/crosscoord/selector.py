"""Priority graph and subset extraction.

An edge ``j -> i`` means vehicle ``j`` passes the shared conflict point
before vehicle ``i``. A node whose optimal velocity equals ``v_max`` is free,
every other node is constrained.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

FREE_TOL = 1e-9


@dataclass(frozen=True)
class PriorityGraph:
    velocities: tuple[float, ...]
    edges: frozenset[tuple[int, int]]
    v_max: float

    @property
    def n(self) -> int:
        return len(self.velocities)

    def is_free(self, i: int) -> bool:
        return abs(self.velocities[i] - self.v_max) <= FREE_TOL

    def predecessors(self, i: int) -> set[int]:
        return {a for a, b in self.edges if b == i}

    def successors(self, i: int) -> set[int]:
        return {b for a, b in self.edges if a == i}

    def indegree(self, i: int) -> int:
        return sum(1 for _, b in self.edges if b == i)

    def adjacent(self, i: int, j: int) -> bool:
        return (i, j) in self.edges or (j, i) in self.edges

    def to_dot(self, labels=None) -> str:
        labels = labels or [str(k) for k in range(self.n)]
        lines = ["digraph priority {"]
        for k, v in enumerate(self.velocities):
            kind = "free" if self.is_free(k) else "constrained"
            lines.append(f'  "{labels[k]}" [v_opt={v:.4f}, kind={kind}];')
        for a, b in sorted(self.edges):
            lines.append(f'  "{labels[a]}" -> "{labels[b]}";')
        lines.append("}")
        return "\n".join(lines)


def build_graph(v, s, v_max: float | None = None) -> PriorityGraph:
    v = np.asarray(v, dtype=float)
    s = np.asarray(s)
    if s.shape != (v.size, v.size):
        raise ValueError(f"priority matrix shape {s.shape} does not match {v.size} velocities")
    edges = frozenset((int(j), int(i)) for j, i in zip(*np.nonzero(s == 1)))
    return PriorityGraph(tuple(float(x) for x in v), edges, float(v.max() if v_max is None else v_max))


def spanning_tree(g: PriorityGraph, i: int) -> set[int]:
    """``i`` together with every node reachable from it."""
    seen = {i}
    stack = [i]
    while stack:
        for nxt in g.successors(stack.pop()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def extract_subset(v, s, v_max: float) -> np.ndarray:
    """FLAG vector: 1 keeps a vehicle in this round, 0 defers it to a later one."""
    g = build_graph(v, s, v_max)
    flag = np.ones(g.n, dtype=int)
    leading = [i for i in range(g.n) if g.is_free(i)]
    trees = {i: spanning_tree(g, i) for i in range(g.n)}

    # a free node that is not on a cycle through its predecessors drags its followers
    for i in leading:
        if g.indegree(i) != 0 and not g.predecessors(i) <= trees[i]:
            flag[list(trees[i])] = 0

    # common descendants of two independent free heads wait for the next round
    heads = [i for i in leading if g.indegree(i) == 0]
    for i, j in itertools.combinations(heads, 2):
        if g.adjacent(i, j):
            continue
        common = trees[i] & trees[j]
        if common:
            excluded = set().union(*(trees[k] for k in common))
            flag[list(excluded)] = 0
    return flag
