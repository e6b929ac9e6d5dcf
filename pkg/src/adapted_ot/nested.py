"""Backward-recursive nested distance and the nested-distribution embedding.

The nested distance solves, for every pair of nodes at the same depth, the
one-step transport problem between their child kernels with cost
``rho(child states)^p`` plus the already computed value of the child pair.
The root value is the p-th power of the bicausal (adapted) distance.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import HorizonMismatchError
from .process import FiniteProcess, MetricSpec, State, check_same_shape
from .transport import ot_value


@dataclass(frozen=True)
class ValueTable:
    """``V[t]`` is a matrix over (x-node, y-node) pairs at depth ``t``."""

    x_nodes: tuple[tuple[int, ...], ...]
    y_nodes: tuple[tuple[int, ...], ...]
    V: tuple[np.ndarray, ...]

    @property
    def n(self) -> int:
        return len(self.V) - 1

    def value(self, t: int, x_node: int, y_node: int) -> float:
        i = self.x_nodes[t].index(x_node)
        j = self.y_nodes[t].index(y_node)
        return float(self.V[t][i, j])

    @property
    def root_value(self) -> float:
        return float(self.V[0][0, 0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x_node", "y_node", "V"])
        for t in range(self.n, -1, -1):
            for i, xn in enumerate(self.x_nodes[t]):
                for j, yn in enumerate(self.y_nodes[t]):
                    w.writerow([t, xn, yn, format(float(self.V[t][i, j]), ".12g")])
        return buf.getvalue()


def _child_cost(mu, nu, xa, yb, m, V_next, xpos, ypos):
    xc = mu.nodes[xa].children
    yc = nu.nodes[yb].children
    states_x = np.array([mu.nodes[c].state for c in xc], dtype=float)
    states_y = np.array([nu.nodes[c].state for c in yc], dtype=float)
    cont = V_next[np.ix_([xpos[c] for c in xc], [ypos[c] for c in yc])]
    return m.ground_cost(states_x, states_y) + cont


def nested_distance(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec
                    ) -> tuple[float, ValueTable]:
    """``ND_p(mu, nu)`` and the full table of node-pair values."""
    check_same_shape(mu, nu)
    n = mu.n
    V: list[np.ndarray] = [None] * (n + 1)  # type: ignore[list-item]
    V[n] = np.zeros((len(mu.levels[n]), len(nu.levels[n])))
    for t in range(n - 1, -1, -1):
        xs, ys = mu.levels[t], nu.levels[t]
        xpos = {c: k for k, c in enumerate(mu.levels[t + 1])}
        ypos = {c: k for k, c in enumerate(nu.levels[t + 1])}
        table = np.empty((len(xs), len(ys)))
        for i, xa in enumerate(xs):
            _, px = mu.kernel(xa)
            for j, yb in enumerate(ys):
                _, py = nu.kernel(yb)
                cost = _child_cost(mu, nu, xa, yb, m, V[t + 1], xpos, ypos)
                table[i, j] = max(ot_value(px, py, cost), 0.0)
        V[t] = table
    vt = ValueTable(x_nodes=mu.levels, y_nodes=nu.levels, V=tuple(V))
    return vt.root_value ** (1.0 / m.p), vt


@dataclass(frozen=True)
class NestedDistribution:
    """A law over ``(state, sub-distribution)`` atoms, ``depth`` periods deep.

    At depth 1 the sub-distributions are ``None`` and this is a plain law on
    states.  Equality and hashing are structural.
    """

    depth: int
    atoms: tuple[tuple[State, "NestedDistribution | None"], ...]
    weights: tuple[float, ...]
    _hash: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.depth, self.atoms, self.weights)))

    def __hash__(self):
        return self._hash

    @cached_property
    def states(self) -> np.ndarray:
        return np.array([s for s, _ in self.atoms], dtype=float)

    def to_dict(self) -> dict:
        return {
            "depth": self.depth,
            "atoms": [
                {"state": list(s), "weight": w, "next": None if sub is None else sub.to_dict()}
                for (s, sub), w in zip(self.atoms, self.weights)
            ],
        }


def nested_embedding(proc: FiniteProcess) -> NestedDistribution:
    """Nested distribution of ``proc``, built from the leaves up."""
    memo: dict[int, NestedDistribution | None] = {}
    for node in reversed(proc.nodes):
        if not node.children:
            memo[node.id] = None
            continue
        memo[node.id] = NestedDistribution(
            depth=proc.n - node.depth,
            atoms=tuple((proc.nodes[c].state, memo[c]) for c in node.children),
            weights=tuple(proc.nodes[c].mass / node.mass for c in node.children),
        )
    return memo[0]


def iterated_wasserstein(a: NestedDistribution, b: NestedDistribution, m: MetricSpec) -> float:
    """Iterated Kantorovich distance; memoized on structurally equal pairs."""
    if a.depth != b.depth:
        raise HorizonMismatchError(f"nested depths differ: {a.depth} vs {b.depth}")
    memo: dict[tuple, float] = {}

    def power(x: NestedDistribution, y: NestedDistribution) -> float:
        key = (x, y)
        if key in memo:
            return memo[key]
        cost = m.ground_cost(x.states, y.states)
        if x.depth > 1:
            for i, (_, sx) in enumerate(x.atoms):
                for j, (_, sy) in enumerate(y.atoms):
                    cost[i, j] += power(sx, sy)
        val = max(ot_value(np.array(x.weights), np.array(y.weights), cost), 0.0)
        memo[key] = val
        return val

    return power(a, b) ** (1.0 / m.p)


__all__ = ["ValueTable", "NestedDistribution", "nested_distance", "nested_embedding",
           "iterated_wasserstein"]
