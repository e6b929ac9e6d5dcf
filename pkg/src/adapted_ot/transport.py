"""Exact discrete optimal transport.

``solve_ot`` runs the network simplex method on the bipartite transportation
graph: a spanning-tree basis, node potentials for pricing, and Bland's rule
(lowest cell index enters, lowest cell index leaves on ties) against cycling.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import InfeasibleError, InstanceTooLargeError, SolverError
from .process import FiniteProcess, MetricSpec, check_same_shape

MARGINAL_TOL = 1e-9
BRUTEFORCE_MAX_CELLS = 16


@dataclass(frozen=True)
class TransportProblem:
    """Source weights ``mu`` (m), target weights ``nu`` (n), cost matrix (m, n)."""

    mu: np.ndarray
    nu: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        nu = np.asarray(self.nu, dtype=float).ravel()
        cost = np.asarray(self.cost, dtype=float).reshape(len(mu), len(nu))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "cost", cost)
        if len(mu) == 0 or len(nu) == 0:
            raise ValueError("transport problem needs at least one atom on each side")
        if np.any(mu < 0) or np.any(nu < 0):
            raise ValueError("marginal weights must be nonnegative")
        if not np.all(np.isfinite(cost)) or np.any(cost < 0):
            raise ValueError("cost must be finite and nonnegative")


@dataclass(frozen=True)
class TransportPlan:
    entries: np.ndarray
    value: float


def _check_balance(prob: TransportProblem, tol: float) -> None:
    gap = abs(prob.mu.sum() - prob.nu.sum())
    if gap > tol:
        raise InfeasibleError(f"marginal masses differ by {gap:.3g}")


def _initial_basis(a: np.ndarray, b: np.ndarray, cost: np.ndarray):
    """Matrix-minimum rule: fill the cheapest open cell, then close one line.

    Closing exactly one row or column per step yields m+n-1 cells forming a
    spanning tree, including degenerate (zero-flow) cells.
    """
    m, n = cost.shape
    ra, rb = a.copy(), b.copy()
    flow = np.zeros((m, n))
    open_rows = np.ones(m, dtype=bool)
    open_cols = np.ones(n, dtype=bool)
    basis = []
    masked = cost.copy()
    while open_rows.any():
        i, j = divmod(int(np.argmin(masked)), n)
        x = max(min(ra[i], rb[j]), 0.0)
        flow[i, j] = x
        basis.append((i, j))
        ra[i] -= x
        rb[j] -= x
        cols_left, rows_left = open_cols.sum(), open_rows.sum()
        if cols_left == 1 or (rows_left > 1 and ra[i] <= rb[j]):
            open_rows[i] = False
            masked[i, :] = np.inf
        else:
            open_cols[j] = False
            masked[:, j] = np.inf
    return flow, basis


def _potentials(cost, basis, m, n):
    adj: list[list[tuple[int, int]]] = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append((m + j, i * n + j))
        adj[m + j].append((i, i * n + j))
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    stack = [0]
    while stack:
        node = stack.pop()
        for other, _ in adj[node]:
            if np.isnan(pot[other]):
                # u_i + v_j = c_ij
                if node < m:
                    pot[other] = cost[node, other - m] - pot[node]
                else:
                    pot[other] = cost[other, node - m] - pot[node]
                stack.append(other)
    return pot[:m], pot[m:], adj


def _tree_path(adj, start, goal):
    """Cells on the tree path from node ``start`` to node ``goal``."""
    prev = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for other, cell in adj[node]:
            if other not in prev:
                prev[other] = (node, cell)
                stack.append(other)
    cells = []
    node = goal
    while prev[node] is not None:
        node, cell = prev[node]
        cells.append(cell)
    return cells[::-1]


def solve_ot(prob: TransportProblem, tol: float = MARGINAL_TOL,
             max_iter: int = 100_000) -> TransportPlan:
    """Exact optimal plan (a vertex of the transportation polytope)."""
    _check_balance(prob, tol)
    a, b, cost = prob.mu, prob.nu, prob.cost
    m, n = cost.shape
    if m == 1 or n == 1:
        plan = np.outer(a, b) / (b.sum() if m == 1 else a.sum())
        return TransportPlan(plan, float(np.sum(plan * cost)))

    flow, basis = _initial_basis(a, b, cost)
    in_basis = np.zeros((m, n), dtype=bool)
    for cell in basis:
        in_basis[cell] = True
    rc_tol = 1e-12 * max(1.0, float(cost.max()))

    for _ in range(max_iter):
        u, v, adj = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        reduced[in_basis] = 0.0
        candidates = np.flatnonzero(reduced < -rc_tol)
        if candidates.size == 0:
            break
        enter = int(candidates[0])  # Bland: lowest index
        ei, ej = divmod(enter, n)
        # cycle: entering cell (+), then the tree path from column ej back to row ei
        path = _tree_path(adj, m + ej, ei)
        minus = path[0::2]
        theta = min(flow[divmod(c, n)] for c in minus)
        ties = [c for c in minus if flow[divmod(c, n)] <= theta]
        leave = min(ties)  # Bland: lowest index among ties
        sign = 1.0
        flow[ei, ej] += theta
        for c in path:
            sign = -sign
            flow[divmod(c, n)] += sign * theta
        li, lj = divmod(leave, n)
        flow[li, lj] = 0.0
        basis.remove((li, lj))
        basis.append((ei, ej))
        in_basis[li, lj] = False
        in_basis[ei, ej] = True
    else:
        raise SolverError(f"network simplex did not converge in {max_iter} pivots")

    flow = np.maximum(flow, 0.0)
    return TransportPlan(flow, float(np.sum(flow * cost)))


def _tree_flows(cells, a, b, m, n):
    """Flows on a spanning tree basis by repeatedly peeling leaves, or None."""
    ra = list(a)
    rb = list(b)
    remaining = set(cells)
    deg = [0] * (m + n)
    for i, j in cells:
        deg[i] += 1
        deg[m + j] += 1
    flows = {}
    while remaining:
        for i, j in sorted(remaining):
            if deg[i] == 1:
                x = ra[i]
            elif deg[m + j] == 1:
                x = rb[j]
            else:
                continue
            flows[(i, j)] = x
            ra[i] -= x
            rb[j] -= x
            deg[i] -= 1
            deg[m + j] -= 1
            remaining.discard((i, j))
            break
        else:
            return None
    return flows


def _is_spanning_tree(cells, m, n) -> bool:
    parent = list(range(m + n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in cells:
        ri, rj = find(i), find(m + j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def ot_bruteforce(prob: TransportProblem, tol: float = MARGINAL_TOL) -> TransportPlan:
    """Optimum by enumerating every spanning-tree basis of the transportation polytope.

    Test oracle only: exponential in ``m*n`` and capped at 16 cells.
    """
    m, n = prob.cost.shape
    if m * n > BRUTEFORCE_MAX_CELLS:
        raise InstanceTooLargeError(f"{m}x{n} exceeds the {BRUTEFORCE_MAX_CELLS}-cell cap")
    _check_balance(prob, tol)
    cells = [(i, j) for i in range(m) for j in range(n)]
    best = None
    for combo in combinations(cells, m + n - 1):
        if not _is_spanning_tree(combo, m, n):
            continue
        flows = _tree_flows(combo, prob.mu, prob.nu, m, n)
        if flows is None or min(flows.values()) < -1e-12:
            continue
        plan = np.zeros((m, n))
        for cell, x in flows.items():
            plan[cell] = max(x, 0.0)
        value = float(np.sum(plan * prob.cost))
        if best is None or value < best.value:
            best = TransportPlan(plan, value)
    if best is None:
        raise SolverError("no basic feasible solution found")
    return best


def ot_value(mu_w, nu_w, cost) -> float:
    """Optimal transport cost (no root taken)."""
    return solve_ot(TransportProblem(mu_w, nu_w, cost)).value


def canonical_order(a: FiniteProcess, b: FiniteProcess) -> bool:
    """Whether the pair should be solved as ``(b, a)`` so both orders give identical floats."""
    return (a.paths, a.dim) > (b.paths, b.dim)


def path_transport(a: FiniteProcess, b: FiniteProcess, m: MetricSpec) -> TransportPlan:
    """Optimal plan between the path laws, rows indexed by ``a``'s leaves."""
    check_same_shape(a, b)
    if canonical_order(a, b):
        plan = path_transport(b, a, m)
        return TransportPlan(plan.entries.T.copy(), plan.value)
    cost = m.cost_matrix(a.path_array, b.path_array)
    return solve_ot(TransportProblem(a.path_weights, b.path_weights, cost))


def wasserstein(proc_a: FiniteProcess, proc_b: FiniteProcess, m: MetricSpec) -> float:
    """Plain ``W_p`` between two process laws with the path metric."""
    return max(path_transport(proc_a, proc_b, m).value, 0.0) ** (1.0 / m.p)
