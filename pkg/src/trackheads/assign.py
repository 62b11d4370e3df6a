"""Minimum-cost bipartite assignment (Kuhn-Munkres, shortest augmenting paths)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SENTINEL = 1e9


@dataclass(frozen=True)
class CostMatrix:
    costs: np.ndarray
    forbidden: np.ndarray | None = None

    def __post_init__(self):
        c = np.asarray(self.costs, dtype=float)
        if c.ndim != 2:
            c = c.reshape(len(c), -1) if c.size else np.zeros((len(c), 0))
        f = np.zeros(c.shape, bool) if self.forbidden is None else np.asarray(self.forbidden, bool)
        if f.shape != c.shape:
            raise ValueError("forbidden mask must match cost shape")
        if not np.all(np.isfinite(c[~f])):
            raise ValueError("allowed costs must be finite")
        object.__setattr__(self, "costs", c)
        object.__setattr__(self, "forbidden", f)

    @property
    def shape(self):
        return self.costs.shape

    def effective(self) -> np.ndarray:
        return np.where(self.forbidden, SENTINEL, self.costs)


def _hungarian_rows(cost: np.ndarray) -> np.ndarray:
    """Assign every row of an ``n x m`` (``n <= m``) matrix; returns column per row.

    O(n^2 m) potentials-based variant. Columns are scanned in index order so
    ties resolve identically on every run.
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=int)  # p[j]: row (1-based) matched to column j
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.nonzero(used)[0]
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    rows_to_col = np.full(n, -1, dtype=int)
    for j in range(1, m + 1):
        if p[j]:
            rows_to_col[p[j] - 1] = j - 1
    return rows_to_col


def solve(c) -> list[tuple[int, int]]:
    """Minimum-cost matching; returns sorted ``(row, col)`` pairs.

    Forbidden entries are priced at :data:`SENTINEL` and any pair landing on
    one is dropped, leaving that row and column unmatched.
    """
    if not isinstance(c, CostMatrix):
        c = CostMatrix(c)
    n, m = c.shape
    if n == 0 or m == 0:
        return []
    eff = c.effective()
    if n <= m:
        cols = _hungarian_rows(eff)
        pairs = [(i, int(j)) for i, j in enumerate(cols)]
    else:
        rows = _hungarian_rows(eff.T)
        pairs = [(int(i), j) for j, i in enumerate(rows)]
    return sorted((i, j) for i, j in pairs if not c.forbidden[i, j])


def total_cost(c, pairs) -> float:
    costs = c.costs if isinstance(c, CostMatrix) else np.asarray(c, float)
    return float(sum(costs[i, j] for i, j in pairs))


def unmatched(n: int, m: int, pairs) -> tuple[list[int], list[int]]:
    rows = {i for i, _ in pairs}
    cols = {j for _, j in pairs}
    return [i for i in range(n) if i not in rows], [j for j in range(m) if j not in cols]
