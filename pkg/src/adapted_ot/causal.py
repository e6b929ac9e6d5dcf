"""Causal and bicausal transport as linear programs.

Variables are the masses ``pi(x, y)`` on pairs of support paths.  Causality
from ``mu`` to ``nu`` says that, given the whole source path ``x``, the law of
the target prefix ``y_{1..t}`` depends on ``x`` only through ``x_{1..t}``.
With ``a = x_{1..t}`` fixed, this is linear in ``pi`` once denominators are
cleared::

    pi(x, b) * mu(a) = mu(x) * pi(a, b)      for every target prefix b.

The LP does not use these rows directly.  For each source prefix ``a`` and
target prefix ``b`` it adds one auxiliary variable ``k(a, b) >= 0``, the common
conditional law, and asks ``pi(x, b) = mu(x) * k(a, b)`` for every path ``x``
through ``a``.  Each row then holds a single weight; rows that compare two
nearly equal weights give near-singular simplex bases and stall the solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CausalityError, InstanceTooLargeError, SolverError
from .lp import solve_lp
from .process import FiniteProcess, MetricSpec, check_same_shape
from .transport import canonical_order, path_transport

CAUSALITY_TOL = 1e-8
LIFTED_MAX_ATOMS = 5
DIRECTIONS = ("causal", "bicausal")


@dataclass(frozen=True)
class CausalLP:
    mu: FiniteProcess
    nu: FiniteProcess
    metric: MetricSpec
    direction: str
    cost: np.ndarray  # plan entries first (index i * n_nu + j), then auxiliaries
    A_eq: np.ndarray
    b_eq: np.ndarray
    row_names: tuple[str, ...]
    aux_names: tuple[str, ...]  # conditional-law variables k(a, b), in column order
    n_marginal: int
    n_generated: int  # causality equalities before redundancy elimination
    n_causal: int  # causality rows kept

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.mu.leaves), len(self.nu.leaves)

    def plan(self, x: np.ndarray) -> np.ndarray:
        """The coupling part of an LP solution vector."""
        nx, ny = self.shape
        return np.asarray(x[:nx * ny]).reshape(nx, ny)

    def to_lp_text(self) -> str:
        """CPLEX LP text; coefficients in fixed-point, rows in construction order."""
        m, n = self.shape

        def var(k):
            if k >= m * n:
                return self.aux_names[k - m * n]
            i, j = divmod(k, n)
            return f"p_{i}_{j}"

        def linear(coefs):
            terms = []
            for k in np.flatnonzero(coefs):
                c = coefs[k]
                sign = "-" if c < 0 else "+"
                terms.append(f"{sign} {abs(c):.12f} {var(k)}")
            text = " ".join(terms) if terms else "0 " + var(0)
            return text[2:] if text.startswith("+ ") else text

        lines = [f"\\ {self.direction} transport, {m} x {n} path pairs",
                 "Minimize", f" obj: {linear(self.cost)}", "Subject To"]
        for name, row, rhs in zip(self.row_names, self.A_eq, self.b_eq):
            lines.append(f" {name}: {linear(row)} = {rhs:.12f}")
        lines.append("End")
        return "\n".join(lines) + "\n"


class CausalityViolation(NamedTuple):
    direction: str  # "causal": source mu; "anticausal": source nu
    t: int
    source_prefix: tuple
    source_path: tuple
    target_prefix: tuple
    amount: float  # |P(target prefix | path) - P(target prefix | source prefix)|


@dataclass(frozen=True)
class Coupling:
    """Joint law on (mu-path, nu-path) pairs, rows/columns in leaf order."""

    mu: FiniteProcess
    nu: FiniteProcess
    plan: np.ndarray
    value: float  # expected path cost, i.e. the p-th power of the distance
    marginal_violation: float
    causal_violation: float
    anticausal_violation: float


def _groups(proc: FiniteProcess, t: int):
    for node_id in proc.levels[t]:
        yield proc.nodes[node_id], list(proc.leaves_under[node_id])


def _causal_rows(src: FiniteProcess, tgt: FiniteProcess, transpose: bool, label: str):
    """Causality rows from ``src`` to ``tgt`` through conditional-law variables.

    Yields ``(pairs, aux, weight, name)`` meaning ``sum(pi[pairs]) - weight *
    k[aux] = 0``, with ``aux`` counted from 0 within this family.  Prefixes with
    one path carry no constraint.  For each source prefix the last target
    prefix is implied by the marginals and is skipped.  ``generated`` counts the
    one-row-per-(x, b) family before these reductions.
    """
    rows, aux_names = [], []
    generated = 0
    weights = src.path_weights
    for t in range(1, src.n):
        tgt_groups = list(_groups(tgt, t))
        for a, xs in _groups(src, t):
            generated += len(xs) * len(tgt_groups)
            if len(xs) < 2 or len(tgt_groups) < 2:
                continue
            for b, ys in tgt_groups[:-1]:
                k = len(aux_names)
                aux_names.append(f"k{label}_{t}_{a.id}_{b.id}")
                for x in xs:
                    pairs = [(y, x) if transpose else (x, y) for y in ys]
                    rows.append((pairs, k, weights[x], f"{label}_t{t}_a{a.id}_x{x}_b{b.id}"))
    return rows, aux_names, generated


def build_causal_lp(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec,
                    direction: str = "causal") -> CausalLP:
    """Linear program over couplings that are causal (or bicausal) from mu to nu."""
    check_same_shape(mu, nu)
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    nx, ny = len(mu.leaves), len(nu.leaves)
    families = [_causal_rows(mu, nu, False, "c")]
    if direction == "bicausal":
        families.append(_causal_rows(nu, mu, True, "ac"))
    aux_names = [name for _, aux, _ in families for name in aux]
    n_var = nx * ny + len(aux_names)
    n_causal = sum(len(rows) for rows, _, _ in families)
    n_rows = nx + ny - 1 + n_causal
    A = np.zeros((n_rows, n_var))
    rhs = np.zeros(n_rows)
    names = []
    for i in range(nx):
        A[i, i * ny:(i + 1) * ny] = 1.0
        rhs[i] = mu.path_weights[i]
        names.append(f"mu_{i}")
    for j in range(ny - 1):  # the last column sum is implied
        A[nx + j, j::ny][:nx] = 1.0
        rhs[nx + j] = nu.path_weights[j]
        names.append(f"nu_{j}")
    n_marginal = len(names)

    r, offset = n_marginal, nx * ny
    for rows, aux, _ in families:
        for pairs, k, weight, name in rows:
            for i, j in pairs:
                A[r, i * ny + j] = 1.0
            A[r, offset + k] = -weight
            names.append(name)
            r += 1
        offset += len(aux)
    cost = np.concatenate([m.cost_matrix(mu.path_array, nu.path_array).ravel(),
                           np.zeros(len(aux_names))])
    return CausalLP(
        mu=mu, nu=nu, metric=m, direction=direction, cost=cost,
        A_eq=A, b_eq=rhs, row_names=tuple(names), aux_names=tuple(aux_names),
        n_marginal=n_marginal, n_generated=sum(g for _, _, g in families), n_causal=n_causal,
    )


def _violations(plan: np.ndarray, src: FiniteProcess, tgt: FiniteProcess, label: str,
                tol: float, report_all: bool = False) -> list[CausalityViolation]:
    out = []
    weights = src.path_weights
    threshold = tol / float(weights.min())
    for t in range(1, src.n):
        tgt_groups = list(_groups(tgt, t))
        for a, xs in _groups(src, t):
            for b, ys in tgt_groups:
                block = plan[np.ix_(xs, ys)].sum(axis=1)
                cond_a = block.sum() / a.mass
                for x, mass_xb in zip(xs, block):
                    amount = abs(mass_xb / weights[x] - cond_a)
                    if report_all or amount > threshold:
                        out.append(CausalityViolation(label, t, a.prefix, src.paths[x][0],
                                                      b.prefix, float(amount)))
    return out


def check_causality(plan, mu: FiniteProcess, nu: FiniteProcess, direction: str = "causal",
                    tol: float = CAUSALITY_TOL) -> list[CausalityViolation]:
    """Causality equalities violated by ``plan``.

    ``direction`` is ``"causal"`` (mu to nu), ``"anticausal"`` (nu to mu) or
    ``"bicausal"`` (both).  Each equality is evaluated in conditional form and
    flagged when it exceeds ``tol`` divided by the smallest source path mass.
    """
    arr = plan.plan if isinstance(plan, Coupling) else np.asarray(plan, dtype=float)
    check_same_shape(mu, nu)
    gap = _marginal_gap(arr, mu, nu)
    if gap > max(tol, 1e-9):
        raise ValueError(f"plan marginals are off by {gap:.3g}")
    out = []
    if direction in ("causal", "bicausal"):
        out += _violations(arr, mu, nu, "causal", tol)
    if direction in ("anticausal", "bicausal"):
        out += _violations(arr.T, nu, mu, "anticausal", tol)
    if direction not in ("causal", "anticausal", "bicausal"):
        raise ValueError(f"unknown direction {direction!r}")
    return out


def _marginal_gap(plan, mu, nu) -> float:
    return float(max(np.abs(plan.sum(axis=1) - mu.path_weights).max(),
                     np.abs(plan.sum(axis=0) - nu.path_weights).max()))


def _max_violation(plan, src, tgt) -> float:
    amounts = [v.amount for v in _violations(plan, src, tgt, "", 0.0, report_all=True)]
    return max(amounts, default=0.0)


def make_coupling(mu: FiniteProcess, nu: FiniteProcess, plan: np.ndarray,
                  m: MetricSpec, value: float | None = None) -> Coupling:
    plan = np.maximum(np.asarray(plan, dtype=float), 0.0)
    if value is None:
        value = float(np.sum(plan * m.cost_matrix(mu.path_array, nu.path_array)))
    return Coupling(
        mu=mu, nu=nu, plan=plan, value=value,
        marginal_violation=_marginal_gap(plan, mu, nu),
        causal_violation=_max_violation(plan, mu, nu),
        anticausal_violation=_max_violation(plan.T, nu, mu),
    )


def product_coupling(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec) -> Coupling:
    return make_coupling(mu, nu, np.outer(mu.path_weights, nu.path_weights), m)


def _solve(mu, nu, m, direction) -> tuple[float, Coupling]:
    if direction == "bicausal" and canonical_order(mu, nu):
        # the bicausal problem is symmetric; solve one orientation for both
        dist, c = _solve(nu, mu, m, direction)
        return dist, make_coupling(mu, nu, c.plan.T, m, c.value)
    lp = build_causal_lp(mu, nu, m, direction)
    if mu.same_law(nu):
        # the diagonal plan is bicausal and free; a float LP would leave ~1e-20 of noise
        coupling = make_coupling(mu, nu, np.diag(mu.path_weights), m, 0.0)
    elif lp.n_causal == 0:
        # no binding causality rows (e.g. N = 1): the LP is plain transport
        ot = path_transport(mu, nu, m)
        coupling = make_coupling(mu, nu, ot.entries, m, ot.value)
    else:
        plan = lp.plan(solve_lp(lp.cost, lp.A_eq, lp.b_eq).x)
        coupling = make_coupling(mu, nu, plan, m)
    want = "causal" if direction == "causal" else "bicausal"
    bad = check_causality(coupling, mu, nu, want)
    if bad:
        raise SolverError(f"{direction} LP returned a plan failing its certificate: {bad[0]}")
    return max(coupling.value, 0.0) ** (1.0 / m.p), coupling


def causal_distance(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec
                    ) -> tuple[float, Coupling]:
    """``CW_p(mu, nu)``: optimal cost over couplings causal from mu to nu."""
    return _solve(mu, nu, m, "causal")


def symmetrized_causal(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec) -> float:
    return max(causal_distance(mu, nu, m)[0], causal_distance(nu, mu, m)[0])


def bicausal_distance_lp(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec
                         ) -> tuple[float, Coupling]:
    """``AW_p(mu, nu)`` as a single LP over bicausal couplings."""
    return _solve(mu, nu, m, "bicausal")


def require_bicausal(coupling: Coupling, tol: float = CAUSALITY_TOL) -> None:
    bad = check_causality(coupling, coupling.mu, coupling.nu, "bicausal", tol)
    if bad:
        raise CausalityError(f"coupling is not bicausal: {bad[0]}")


def two_period_lifted_cw(mu: FiniteProcess, nu: FiniteProcess, m: MetricSpec,
                         max_atoms: int = LIFTED_MAX_ATOMS) -> float:
    """``CW_p`` for two periods through the disintegrated (x1, law of x2) form.

    A coupling ``gamma`` of the first-period atoms is scored by
    ``rho(x1, y1)^p + W_p(mixture_j, nu_{y1})^p`` where ``mixture_j`` is the
    gamma-weighted average of the source kernels ``mu_{x1}`` over target atom
    ``j``.  That objective is convex in gamma, so the inner transport plans
    (one per target atom) are optimized jointly with gamma in one LP.

    Test oracle; capped at ``max_atoms`` first-period atoms per side.
    """
    check_same_shape(mu, nu)
    if mu.n != 2:
        raise ValueError(f"the lifted formula needs two periods, got {mu.n}")
    xs = [mu.nodes[i] for i in mu.levels[1]]
    ys = [nu.nodes[j] for j in nu.levels[1]]
    if len(xs) > max_atoms or len(ys) > max_atoms:
        raise InstanceTooLargeError(
            f"{len(xs)} x {len(ys)} first-period atoms exceeds the cap of {max_atoms}")

    x2_states = sorted({mu.nodes[c].state for a in xs for c in a.children})
    x2_index = {s: k for k, s in enumerate(x2_states)}
    kx = len(x2_states)
    # mu_{x1}(x2) as a matrix over (first-period atom, second-period state)
    kern = np.zeros((len(xs), kx))
    for i, a in enumerate(xs):
        for c in a.children:
            kern[i, x2_index[mu.nodes[c].state]] = mu.nodes[c].mass / a.mass

    d1 = m.ground_cost(np.array([a.state for a in xs]), np.array([b.state for b in ys]))
    x2_arr = np.array(x2_states)
    nvar = len(xs) * len(ys)
    blocks = []  # (offset, target atom, its children)
    for j, b in enumerate(ys):
        blocks.append((nvar, j, b.children))
        nvar += kx * len(b.children)

    cost = np.zeros(nvar)
    cost[:len(xs) * len(ys)] = d1.ravel()
    rows, rhs = [], []
    for i, a in enumerate(xs):
        r = np.zeros(nvar)
        r[i * len(ys):(i + 1) * len(ys)] = 1.0
        rows.append(r)
        rhs.append(a.mass)
    for j, b in enumerate(ys):
        r = np.zeros(nvar)
        r[j:len(xs) * len(ys):len(ys)] = 1.0
        rows.append(r)
        rhs.append(b.mass)
    for off, j, kids in blocks:
        ny2 = len(kids)
        y2_arr = np.array([nu.nodes[c].state for c in kids])
        cost[off:off + kx * ny2] = m.ground_cost(x2_arr, y2_arr).ravel()
        for k in range(kx):
            # sum_l beta_j[k, l] = sum_i gamma_ij * mu_{x_i}(k)
            r = np.zeros(nvar)
            r[off + k * ny2:off + (k + 1) * ny2] = 1.0
            r[j:len(xs) * len(ys):len(ys)] -= kern[:, k]
            rows.append(r)
            rhs.append(0.0)
        for l, c in enumerate(kids):
            r = np.zeros(nvar)
            r[off + l:off + kx * ny2:ny2] = 1.0
            rows.append(r)
            rhs.append(nu.nodes[c].mass)
    res = solve_lp(cost, np.array(rows), np.array(rhs))
    return max(res.value, 0.0) ** (1.0 / m.p)
