"""Finite-support processes stored as prefix trees.

A law on ``N``-period path space with finitely many atoms is kept as its
deduplicated prefix tree.  Every node carries the mass of its prefix, so
conditional laws (disintegrations) are ratios of node masses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatchError, HorizonMismatchError, SupportError

State = tuple  # tuple of floats, length d
Path = tuple  # tuple of States

DEFAULT_TOL = 1e-9
GROUNDS = ("euclidean", "absolute", "table")


def as_state(value) -> State:
    """Coerce a scalar or a sequence of reals into a state tuple."""
    if np.ndim(value) == 0:
        return (float(value),)
    return tuple(float(v) for v in np.ravel(value))


def as_path(values) -> Path:
    return tuple(as_state(v) for v in values)


@dataclass(frozen=True)
class Distribution:
    """Finite law: distinct atoms with positive weights summing to one."""

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.atoms) != len(self.weights):
            raise ValueError("atoms and weights differ in length")
        if len(set(self.atoms)) != len(self.atoms):
            raise ValueError("atoms must be distinct")
        if any(not w > 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {math.fsum(self.weights)!r}, not 1")

    def __len__(self):
        return len(self.atoms)

    def __iter__(self):
        return iter(zip(self.atoms, self.weights))

    def as_dict(self) -> dict:
        return dict(zip(self.atoms, self.weights))


@dataclass(frozen=True)
class Node:
    id: int
    depth: int
    state: State | None  # None only at the root
    mass: float
    parent: int | None
    children: tuple[int, ...]
    prefix: Path


@dataclass(frozen=True)
class FiniteProcess:
    """Law of an ``n``-period process with finite support.

    ``nodes`` is in breadth-first order with children sorted by state, so two
    processes with the same law have identical node tuples.  Build instances
    with :func:`from_paths`; the raw constructor skips consistency checks so
    that :func:`validate` can inspect hand-built trees.
    """

    n: int
    dim: int
    nodes: tuple[Node, ...]
    scale: float = field(default=1.0, compare=False)

    @property
    def root(self) -> Node:
        return self.nodes[0]

    @cached_property
    def levels(self) -> tuple[tuple[int, ...], ...]:
        by_depth: list[list[int]] = [[] for _ in range(self.n + 1)]
        for node in self.nodes:
            if node.depth <= self.n:
                by_depth[node.depth].append(node.id)
        return tuple(tuple(ids) for ids in by_depth)

    @cached_property
    def leaves(self) -> tuple[int, ...]:
        return tuple(nd.id for nd in self.nodes if not nd.children)

    @cached_property
    def _by_prefix(self) -> dict:
        return {nd.prefix: nd.id for nd in self.nodes}

    @cached_property
    def _leaf_pos(self) -> dict:
        return {leaf: k for k, leaf in enumerate(self.leaves)}

    @cached_property
    def paths(self) -> tuple[tuple[Path, float], ...]:
        return tuple((self.nodes[i].prefix, self.nodes[i].mass) for i in self.leaves)

    @cached_property
    def path_array(self) -> np.ndarray:
        """Leaf paths as an array of shape ``(n_leaves, n, dim)``."""
        return np.array([p for p, _ in self.paths], dtype=float).reshape(
            len(self.leaves), self.n, self.dim
        )

    @cached_property
    def path_weights(self) -> np.ndarray:
        return np.array([w for _, w in self.paths], dtype=float)

    @cached_property
    def leaves_under(self) -> tuple[tuple[int, ...], ...]:
        """For every node, the positions (in ``leaves``) of leaves below it."""
        out: list[tuple[int, ...]] = [()] * len(self.nodes)
        for node in reversed(self.nodes):
            if not node.children:
                out[node.id] = (self._leaf_pos[node.id],)
            else:
                out[node.id] = tuple(k for c in node.children for k in out[c])
        return tuple(out)

    @cached_property
    def ancestors(self) -> np.ndarray:
        """``ancestors[k, t]`` is the node id at depth ``t`` on leaf path ``k``."""
        anc = np.zeros((len(self.leaves), self.n + 1), dtype=int)
        for k, leaf in enumerate(self.leaves):
            node = self.nodes[leaf]
            while node is not None:
                anc[k, node.depth] = node.id
                node = self.nodes[node.parent] if node.parent is not None else None
        return anc

    def node_id(self, prefix) -> int:
        key = as_path(prefix)
        try:
            return self._by_prefix[key]
        except KeyError:
            raise SupportError(f"prefix {key} is not in the support") from None

    def kernel(self, node_id: int) -> tuple[tuple[int, ...], np.ndarray]:
        """Children of a node and their conditional probabilities."""
        node = self.nodes[node_id]
        masses = np.array([self.nodes[c].mass for c in node.children])
        return node.children, masses / node.mass

    def same_law(self, other: "FiniteProcess") -> bool:
        return (
            self.n == other.n
            and self.dim == other.dim
            and [p for p, _ in self.paths] == [p for p, _ in other.paths]
            and np.array_equal(self.path_weights, other.path_weights)
        )

    def __repr__(self):
        return f"FiniteProcess(n={self.n}, dim={self.dim}, paths={len(self.leaves)})"


def _quantize(x: float, grid: float) -> float:
    return round(x / grid) * grid


def from_paths(paths: Iterable, tol: float = DEFAULT_TOL, quantize: float | None = None
               ) -> FiniteProcess:
    """Build the canonical prefix tree of a list of ``(values, weight)`` pairs.

    ``values`` is a length-``N`` sequence whose entries are scalars (``d = 1``)
    or length-``d`` sequences.  Weights are normalized and identical paths are
    merged.  ``quantize`` snaps coordinates to a grid before merging.
    """
    raw = list(paths)
    if not raw:
        raise ValueError("empty path list")
    merged: dict[Path, float] = {}
    n = dim = None
    for values, weight in raw:
        path = as_path(values)
        if quantize:
            path = tuple(tuple(_quantize(x, quantize) for x in s) for s in path)
        if not path:
            raise ValueError("paths must have length >= 1")
        if n is None:
            n, dim = len(path), len(path[0])
        if len(path) != n:
            raise ValueError(f"ragged path lengths: {len(path)} vs {n}")
        if any(len(s) != dim for s in path):
            raise ValueError("state dimension differs across the input")
        if not all(math.isfinite(x) for s in path for x in s):
            raise ValueError(f"non-finite coordinate in {path}")
        weight = float(weight)
        if not (weight > 0 and math.isfinite(weight)):
            raise ValueError(f"weight must be positive and finite, got {weight}")
        merged[path] = merged.get(path, 0.0) + weight

    total = math.fsum(merged.values())
    # weights that already form a probability vector are kept verbatim, which
    # makes rebuilding from an emitted path list reproduce the tree exactly
    norm = 1.0 if abs(total - 1.0) <= 1e-12 else total
    leaf_mass = {p: w / norm for p, w in merged.items()}

    # prefix -> sorted child states
    children: dict[Path, set] = {}
    for p in leaf_mass:
        for t in range(n):
            children.setdefault(p[:t], set()).add(p[t])

    mass: dict[Path, float] = dict(leaf_mass)
    for t in range(n - 1, -1, -1):
        for pre, kids in children.items():
            if len(pre) == t:
                mass[pre] = math.fsum(mass[pre + (s,)] for s in kids)

    nodes: list[Node] = []
    frontier: list[tuple[Path, int | None]] = [((), None)]
    while frontier:
        nxt = []
        first_id = len(nodes)
        for pre, parent in frontier:
            nodes.append(None)  # placeholder, filled once child ids are known
        child_start = first_id + len(frontier)
        for k, (pre, parent) in enumerate(frontier):
            kids = sorted(children.get(pre, ()))
            ids = tuple(range(child_start, child_start + len(kids)))
            child_start += len(kids)
            nodes[first_id + k] = Node(
                id=first_id + k,
                depth=len(pre),
                state=pre[-1] if pre else None,
                mass=mass[pre],
                parent=parent,
                children=ids,
                prefix=pre,
            )
            nxt.extend((pre + (s,), first_id + k) for s in kids)
        frontier = nxt

    proc = FiniteProcess(n=n, dim=dim, nodes=tuple(nodes), scale=total)
    problems = validate(proc, tol)
    if problems:
        raise AssertionError(f"internal tree construction error: {problems}")
    return proc


def from_nodes(n: int, dim: int, spec: Sequence[tuple]) -> FiniteProcess:
    """Assemble a tree from ``(prefix, mass)`` pairs without enforcing consistency.

    Used for tree-form input files and for constructing defective trees;
    run :func:`validate` on the result.
    """
    entries = {as_path(pre): float(m) for pre, m in spec}
    if () not in entries:
        raise ValueError("tree has no root entry (empty prefix)")
    kids: dict[Path, list] = {}
    for pre in entries:
        if pre:
            if pre[:-1] not in entries:
                raise ValueError(f"node {pre} has no parent entry")
            kids.setdefault(pre[:-1], []).append(pre[-1])
    nodes: list[Node] = []
    ids: dict[Path, int] = {}
    order = sorted(entries, key=lambda p: (len(p), p))
    for pre in order:
        ids[pre] = len(ids)
    for pre in order:
        nodes.append(Node(
            id=ids[pre],
            depth=len(pre),
            state=pre[-1] if pre else None,
            mass=entries[pre],
            parent=ids[pre[:-1]] if pre else None,
            children=tuple(ids[pre + (s,)] for s in sorted(kids.get(pre, ()))),
            prefix=pre,
        ))
    return FiniteProcess(n=n, dim=dim, nodes=tuple(nodes))


def disintegrate(proc: FiniteProcess, prefix) -> Distribution:
    """Conditional law of ``X_{t+1..N}`` given ``X_{1..t} = prefix``."""
    pre = as_path(prefix)
    if len(pre) >= proc.n:
        raise SupportError(f"prefix length {len(pre)} must be below the horizon {proc.n}")
    node = proc.nodes[proc.node_id(pre)]
    t = len(pre)
    atoms, weights = [], []
    for k in proc.leaves_under[node.id]:
        path, w = proc.paths[k]
        atoms.append(path[t:])
        weights.append(w / node.mass)
    return Distribution(tuple(atoms), tuple(weights))


def marginal(proc: FiniteProcess, from_t: int, to_t: int) -> Distribution:
    """Law of coordinates ``from_t..to_t`` (1-based, inclusive)."""
    if not 1 <= from_t <= to_t <= proc.n:
        raise ValueError(f"coordinate range {from_t}..{to_t} outside 1..{proc.n}")
    acc: dict[Path, float] = {}
    for path, w in proc.paths:
        key = path[from_t - 1:to_t]
        acc[key] = acc.get(key, 0.0) + w
    atoms = sorted(acc)
    return Distribution(tuple(atoms), tuple(acc[a] for a in atoms))


@dataclass(frozen=True)
class MetricSpec:
    """Ground metric on the state space plus the transport order ``p``.

    ``ground='absolute'`` is the l1 norm of the coordinate difference (``|x-y|``
    for scalar states).  ``ground='table'`` looks distances up in ``table``,
    indexed by position in ``points``.  ``bounded`` applies ``min(1, rho)``.
    """

    ground: str = "euclidean"
    p: float = 1.0
    bounded: bool = False
    points: tuple = ()
    table: tuple = ()

    def __post_init__(self):
        if self.ground not in GROUNDS:
            raise ValueError(f"unknown ground metric {self.ground!r}")
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if self.ground == "table":
            object.__setattr__(self, "points", tuple(as_state(x) for x in self.points))
            object.__setattr__(self, "table", tuple(tuple(float(v) for v in row)
                                                    for row in self.table))
            _check_table(self.points, np.array(self.table, dtype=float))

    @cached_property
    def _index(self) -> dict:
        return {pt: k for k, pt in enumerate(self.points)}

    @cached_property
    def _table(self) -> np.ndarray:
        return np.array(self.table, dtype=float)

    def ground_matrix(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pairwise ground distances between state arrays ``(m, d)`` and ``(k, d)``."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape[-1] != b.shape[-1]:
            raise DimensionMismatchError(f"state dimensions {a.shape[-1]} and {b.shape[-1]}")
        if self.ground == "table":
            try:
                ia = [self._index[tuple(row)] for row in a]
                ib = [self._index[tuple(row)] for row in b]
            except KeyError as exc:
                raise SupportError(f"state {exc.args[0]} missing from the metric table") from None
            d = self._table[np.ix_(ia, ib)]
        else:
            diff = a[:, None, :] - b[None, :, :]
            if self.ground == "euclidean":
                d = np.sqrt(np.sum(diff * diff, axis=-1))
            else:
                d = np.sum(np.abs(diff), axis=-1)
        if self.bounded:
            d = np.minimum(d, 1.0)
        return d

    def ground_cost(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.ground_matrix(a, b) ** self.p

    def cost_matrix(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """``sum_t rho(x_t, y_t)^p`` for path arrays ``(m, T, d)`` and ``(k, T, d)``."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.shape[1] != ys.shape[1]:
            raise HorizonMismatchError(f"path lengths {xs.shape[1]} and {ys.shape[1]}")
        out = np.zeros((xs.shape[0], ys.shape[0]))
        for t in range(xs.shape[1]):
            out += self.ground_cost(xs[:, t, :], ys[:, t, :])
        return out


def _check_table(points, table: np.ndarray) -> None:
    k = len(points)
    if len(set(points)) != k:
        raise ValueError("metric table points must be distinct")
    if table.shape != (k, k):
        raise ValueError(f"metric table must be {k}x{k}, got {table.shape}")
    if not np.all(np.isfinite(table)) or np.any(table < 0):
        raise ValueError("metric table must be finite and nonnegative")
    if not np.array_equal(table, table.T):
        raise ValueError("metric table is not symmetric")
    off = ~np.eye(k, dtype=bool)
    if np.any(np.diag(table) != 0) or np.any(table[off] == 0):
        raise ValueError("metric table must vanish exactly on the diagonal")
    for i, j, l in product(range(k), repeat=3):
        if table[i, l] > table[i, j] + table[j, l] + 1e-12:
            raise ValueError(f"triangle inequality fails at points {i}, {j}, {l}")


def _check_compatible(x: Path, y: Path) -> None:
    if len(x) != len(y):
        raise HorizonMismatchError(f"path lengths {len(x)} and {len(y)}")
    if x and len(x[0]) != len(y[0]):
        raise DimensionMismatchError(f"state dimensions {len(x[0])} and {len(y[0])}")


def path_cost(x, y, m: MetricSpec) -> float:
    """``sum_t rho(x_t, y_t)^p``; the path distance is its ``1/p`` power."""
    x, y = as_path(x), as_path(y)
    _check_compatible(x, y)
    xs = np.array(x, dtype=float)[None]
    ys = np.array(y, dtype=float)[None]
    return float(m.cost_matrix(xs, ys)[0, 0])


def pth_moment(proc: FiniteProcess, m: MetricSpec, x0) -> float:
    """``E_mu[rho(x0, X)^p]`` with the path metric."""
    x0 = as_path(x0)
    if len(x0) != proc.n:
        raise HorizonMismatchError(f"reference path has length {len(x0)}, horizon is {proc.n}")
    if len(x0[0]) != proc.dim:
        raise DimensionMismatchError(f"reference state dimension {len(x0[0])} vs {proc.dim}")
    costs = m.cost_matrix(proc.path_array, np.array(x0, dtype=float)[None])[:, 0]
    return float(proc.path_weights @ costs)


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    node: int | None
    message: str


def validate(proc: FiniteProcess, tol: float = DEFAULT_TOL) -> list[Diagnostic]:
    """Check the tree invariants; an empty list means the tree is well formed."""
    out: list[Diagnostic] = []
    if not proc.nodes or proc.nodes[0].depth != 0:
        return [Diagnostic("structure", None, "missing root node")]
    if abs(proc.root.mass - 1.0) > tol:
        out.append(Diagnostic("root-mass", 0, f"root mass {proc.root.mass!r} != 1"))
    for node in proc.nodes:
        if not node.mass > 0:
            out.append(Diagnostic("nonpositive-mass", node.id,
                                  f"node {node.prefix} has mass {node.mass!r}"))
        if node.children:
            kids = [proc.nodes[c] for c in node.children]
            total = math.fsum(k.mass for k in kids)
            if abs(total - node.mass) > tol:
                out.append(Diagnostic(
                    "mass-consistency", node.id,
                    f"node {node.prefix} mass {node.mass!r} != children sum {total!r}"))
            if any(k.depth != node.depth + 1 for k in kids):
                out.append(Diagnostic("depth", node.id, f"children of {node.prefix} skip a level"))
            states = [k.state for k in kids]
            if len(set(states)) != len(states):
                out.append(Diagnostic("duplicate-child", node.id,
                                      f"node {node.prefix} has repeated child states"))
        elif node.depth != proc.n:
            out.append(Diagnostic("depth", node.id,
                                  f"leaf {node.prefix} at depth {node.depth}, horizon {proc.n}"))
        if node.state is not None and len(node.state) != proc.dim:
            out.append(Diagnostic("dimension", node.id,
                                  f"state {node.state} has dimension {len(node.state)}"))
    return out


def check_same_shape(a: FiniteProcess, b: FiniteProcess) -> None:
    if a.n != b.n:
        raise HorizonMismatchError(f"horizons differ: {a.n} vs {b.n}")
    if a.dim != b.dim:
        raise DimensionMismatchError(f"state dimensions differ: {a.dim} vs {b.dim}")


def random_process(rng: np.random.Generator, n: int, max_branch: int = 3, dim: int = 1,
                   grid: Sequence[float] | None = None) -> FiniteProcess:
    """Random tree with 1..``max_branch`` children per node.

    States are drawn without replacement from ``grid`` (default: the integers
    -3..3), so ties and degenerate transport problems show up regularly.
    """
    grid = list(range(-3, 4)) if grid is None else list(grid)
    cells = list(product(grid, repeat=dim))
    paths = []

    def grow(prefix, weight):
        if len(prefix) == n:
            paths.append((prefix, weight))
            return
        k = int(rng.integers(1, max_branch + 1))
        picks = rng.choice(len(cells), size=min(k, len(cells)), replace=False)
        probs = rng.dirichlet(np.ones(len(picks)))
        for c, q in zip(picks, probs):
            grow(prefix + (cells[c],), weight * max(q, 1e-3))

    grow((), 1.0)
    return from_paths(paths)


__all__ = [
    "Distribution", "Node", "FiniteProcess", "MetricSpec", "Diagnostic",
    "as_state", "as_path", "from_paths", "from_nodes", "disintegrate", "marginal",
    "path_cost", "pth_moment", "validate", "check_same_shape", "random_process",
]
