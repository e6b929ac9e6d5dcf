"""Hellwig information maps and Aldous prediction processes, with metrics for both."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .process import (Distribution, FiniteProcess, MetricSpec, Path, check_same_shape,
                      disintegrate)
from .transport import ot_value


@dataclass(frozen=True)
class InformationImage:
    """Law of ``(x_1..x_t, conditional law of the suffix)`` under a process."""

    t: int
    atoms: tuple[tuple[Path, Distribution], ...]
    weights: tuple[float, ...]

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "atoms": [
                {"prefix": [list(s) for s in prefix], "weight": w,
                 "conditional": [{"suffix": [list(s) for s in sfx], "weight": q}
                                 for sfx, q in law]}
                for (prefix, law), w in zip(self.atoms, self.weights)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def hellwig_map(proc: FiniteProcess, t: int) -> InformationImage:
    if not 1 <= t <= proc.n - 1:
        raise ValueError(f"split time must lie in 1..{proc.n - 1}, got {t}")
    nodes = [proc.nodes[i] for i in proc.levels[t]]
    return InformationImage(
        t=t,
        atoms=tuple((nd.prefix, disintegrate(proc, nd.prefix)) for nd in nodes),
        weights=tuple(nd.mass for nd in nodes),
    )


def _coordinate_costs(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec) -> np.ndarray:
    """``C[t, k, l] = rho(x_k[t], y_l[t])^p`` over leaf paths."""
    xs, ys = mu.path_array, nu.path_array
    return np.stack([m.ground_cost(xs[:, t, :], ys[:, t, :]) for t in range(mu.n)])


def one_period_adapted(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec, t: int) -> float:
    """Adapted distance after merging periods ``1..t`` and ``t+1..N`` into two blocks."""
    check_same_shape(mu, nu)
    C = _coordinate_costs(mu, nu, m)
    pre, post = C[:t].sum(axis=0), C[t:].sum(axis=0)
    xs, ys = mu.levels[t], nu.levels[t]
    outer = np.empty((len(xs), len(ys)))
    for i, a in enumerate(xs):
        ka = list(mu.leaves_under[a])
        wa = mu.path_weights[ka] / mu.nodes[a].mass
        for j, b in enumerate(ys):
            kb = list(nu.leaves_under[b])
            wb = nu.path_weights[kb] / nu.nodes[b].mass
            # the prefix cost is constant over the block
            outer[i, j] = pre[ka[0], kb[0]] + ot_value(wa, wb, post[np.ix_(ka, kb)])
    wx = np.array([mu.nodes[a].mass for a in xs])
    wy = np.array([nu.nodes[b].mass for b in ys])
    return max(ot_value(wx, wy, outer), 0.0) ** (1.0 / m.p)


def hellwig_distance(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec) -> float:
    """``IW_p``: sum of one-period adapted distances over split times ``1..N-1``.

    For ``N = 1`` the range is empty and the result is 0.
    """
    check_same_shape(mu, nu)
    return float(sum(one_period_adapted(mu, nu, m, t) for t in range(1, mu.n)))


@dataclass(frozen=True)
class PredictionProcess:
    """Conditional path law at every node.

    ``z[v]`` is a weight vector over the process's leaf paths (in leaf order):
    the law of the whole path given the prefix at node ``v``.
    """

    proc: FiniteProcess
    z: np.ndarray  # (n_nodes, n_leaves)

    def law(self, node_id: int) -> Distribution:
        row = self.z[node_id]
        keep = np.flatnonzero(row > 0)
        return Distribution(tuple(self.proc.paths[k][0] for k in keep),
                            tuple(float(row[k]) for k in keep))

    def trajectory(self, leaf: int) -> tuple[int, ...]:
        """Node ids carrying ``Z_0, .., Z_N`` along the ``leaf``-th path."""
        return tuple(int(v) for v in self.proc.ancestors[leaf])

    def to_dict(self) -> dict:
        p = self.proc
        return {
            "paths": [{"id": k, "values": [list(s) for s in path], "weight": w}
                      for k, (path, w) in enumerate(p.paths)],
            "nodes": [{"id": nd.id, "depth": nd.depth, "parent": nd.parent,
                       "Z": [{"path": int(k), "weight": float(self.z[nd.id, k])}
                             for k in np.flatnonzero(self.z[nd.id] > 0)]}
                      for nd in p.nodes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def prediction_process(proc: FiniteProcess) -> PredictionProcess:
    z = np.zeros((len(proc.nodes), len(proc.leaves)))
    for nd in proc.nodes:
        ks = list(proc.leaves_under[nd.id])
        z[nd.id, ks] = proc.path_weights[ks] / nd.mass
    return PredictionProcess(proc, z)


class MartingaleViolation(NamedTuple):
    node: int
    depth: int
    deviation: float


def martingale_check(pp: PredictionProcess, tol: float = 1e-9) -> list[MartingaleViolation]:
    """Nodes where ``Z_t`` differs from the kernel average of the children's ``Z_{t+1}``."""
    out = []
    for nd in pp.proc.nodes:
        if not nd.children:
            continue
        kids, probs = pp.proc.kernel(nd.id)
        avg = probs @ pp.z[list(kids)]
        dev = float(np.abs(pp.z[nd.id] - avg).max())
        if dev > tol:
            out.append(MartingaleViolation(nd.id, nd.depth, dev))
    return out


def aldous_distance(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec) -> float:
    """``W_p`` between the laws of ``(X, Z_0, .., Z_N)``.

    Ground cost between atoms is ``rho(x, y)^p + sum_t W_p(Z_t, Z'_t)^p`` with
    the inner distances on path space.  There is one atom per leaf.
    """
    check_same_shape(mu, nu)
    paths = m.cost_matrix(mu.path_array, nu.path_array)
    memo: dict[tuple[int, int], float] = {}

    def inner(a: int, b: int) -> float:
        key = (a, b)
        if key not in memo:
            ka, kb = list(mu.leaves_under[a]), list(nu.leaves_under[b])
            wa = mu.path_weights[ka] / mu.nodes[a].mass
            wb = nu.path_weights[kb] / nu.nodes[b].mass
            memo[key] = ot_value(wa, wb, paths[np.ix_(ka, kb)])
        return memo[key]

    anc_x, anc_y = mu.ancestors, nu.ancestors
    cost = paths.copy()
    for k in range(len(mu.leaves)):
        for l in range(len(nu.leaves)):
            cost[k, l] += sum(inner(anc_x[k, t], anc_y[l, t]) for t in range(mu.n + 1))
    return max(ot_value(mu.path_weights, nu.path_weights, cost), 0.0) ** (1.0 / m.p)


__all__ = ["InformationImage", "PredictionProcess", "MartingaleViolation", "hellwig_map",
           "hellwig_distance", "one_period_adapted", "prediction_process",
           "martingale_check", "aldous_distance"]
