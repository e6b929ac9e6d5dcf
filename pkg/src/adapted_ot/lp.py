"""Two-phase primal simplex for ``min c.x  s.t.  A x = b, x >= 0``.

Entering columns follow Bland's rule (lowest index with negative reduced
cost).  The float solver is a dense revised simplex that re-solves the basis
systems at every pivot; its leaving row comes from a two-pass ratio test that
skips tiny pivots and otherwise takes the lowest basic index.  Small instances
that fail verification are re-solved on an exact ``Fraction`` tableau under
pure Bland pivoting, which cannot cycle.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .errors import InfeasibleError, SolverError

log = logging.getLogger(__name__)

EXACT_MAX_VARS = 64
FEAS_TOL = 1e-9


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    value: float
    iterations: int
    exact: bool
    dropped_rows: tuple[int, ...]


class _Tableau:
    """Exact tableau over ``Fraction`` entries, with artificial slack columns."""

    def __init__(self, A, b):
        m, n = A.shape
        T = np.empty((m + 1, n + m + 1), dtype=object)
        T[...] = Fraction(0)
        for i in range(m):
            for j in range(n):
                T[i + 1, j] = Fraction(A[i, j])
            T[i + 1, n + i] = Fraction(1)
            T[i + 1, -1] = Fraction(b[i])
        self.T = T
        self.n = n
        self.m = m
        self.basis = list(range(n, n + m))
        self.iterations = 0

    def pivot(self, r: int, col: int) -> None:
        T = self.T
        T[r] = T[r] / T[r, col]
        factors = T[:, col].copy()
        factors[r] = 0
        nz = np.flatnonzero(factors != 0)
        if nz.size:
            T[nz] = T[nz] - np.outer(factors[nz], T[r])
        self.basis[r - 1] = col
        self.iterations += 1

    def run(self, allowed: np.ndarray, max_iter: int) -> None:
        T = self.T
        for _ in range(max_iter):
            row0 = T[0, :-1]
            cand = np.flatnonzero((row0 < 0).astype(bool) & allowed)
            if cand.size == 0:
                return
            col = int(cand[0])
            column = T[1:, col]
            rows = np.flatnonzero((column > 0).astype(bool))
            if rows.size == 0:
                raise SolverError("linear program is unbounded")
            ratios = T[1 + rows, -1] / column[rows]
            best = min(ratios)
            tied = [r for r, q in zip(rows, ratios) if q == best]
            r = min(tied, key=lambda k: self.basis[k])
            self.pivot(int(r) + 1, col)
        raise SolverError(f"simplex did not finish within {max_iter} pivots")


class _Basis:
    """Inverse of a basis matrix with solves refined in extended precision.

    Bases of the causal programs reach condition numbers near 1e8 when path
    weights almost coincide; plain float64 solves then leave reduced-cost noise
    large enough to make the simplex pivot back and forth.
    """

    def __init__(self, B: np.ndarray):
        try:
            self.inv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise SolverError("simplex basis became singular") from None
        self.B = B
        self.Bl = B.astype(np.longdouble)

    def solve(self, rhs, transpose: bool = False, steps: int = 2) -> np.ndarray:
        inv = self.inv.T if transpose else self.inv
        Bl = self.Bl.T if transpose else self.Bl
        rl = np.asarray(rhs, dtype=np.longdouble)
        x = inv @ rhs
        for _ in range(steps):
            x = x + inv @ (rl - Bl @ x.astype(np.longdouble)).astype(float)
        return x


class _Revised:
    """Float revised simplex; basis systems are re-solved from scratch every pivot.

    Re-solving avoids the error build-up of an updated tableau, which on the
    rank-deficient causal systems is enough to fake infeasibility.
    """

    def __init__(self, A, b):
        m, n = A.shape
        self.A = np.hstack([A, np.eye(m)])
        self.b = b
        self.n = n
        self.rows = list(range(m))
        self.basis = list(range(n, n + m))
        self.iterations = 0
        self.eps = 1e-11  # reduced cost, relative to max |c|
        self.piv_eps = 1e-9  # pivot size, relative to the column

    def _B(self):
        return self.A[np.ix_(self.rows, self.basis)]

    def x_basic(self):
        return _Basis(self._B()).solve(self.b[self.rows])

    def run(self, cost: np.ndarray, allowed: np.ndarray, max_iter: int) -> None:
        cscale = max(1.0, float(np.abs(cost).max()))
        seen = set()
        rng = None
        for _ in range(max_iter):
            B = _Basis(self._B())
            xb = B.solve(self.b[self.rows])
            y = B.solve(cost[self.basis], transpose=True)
            d = cost - self.A[self.rows].T @ y
            d[self.basis] = 0.0
            cand = np.flatnonzero((d < -self.eps * cscale) & allowed)
            if cand.size == 0:
                return
            # Bland's rule cycles once tolerances hide tiny reduced costs; a
            # repeated basis switches to seeded random pivoting, which escapes
            key = frozenset(self.basis)
            if rng is None and key in seen:
                rng = np.random.default_rng(0)
            seen.add(key)
            col = int(cand[0] if rng is None else rng.choice(cand))
            u = B.solve(self.A[self.rows, col])
            pos = np.flatnonzero(u > self.piv_eps * max(1.0, float(np.abs(u).max())))
            if pos.size == 0:
                raise SolverError("linear program is unbounded")
            ratios = np.maximum(xb[pos], 0.0) / u[pos]
            tied = pos[ratios <= ratios.min() + 1e-12]
            if rng is None:
                r = min(tied, key=lambda k: self.basis[k])
            else:
                r = int(rng.choice(tied))
            self.basis[r] = col
            self.iterations += 1
        raise SolverError(f"simplex did not finish within {max_iter} pivots")


def _solve_float(c, A, b, max_iter: int) -> LPResult:
    m, n = A.shape
    rev = _Revised(A, b)
    # phase one: minimize the sum of artificials
    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    rev.run(phase1, np.arange(n + m) < n, max_iter)
    xb = rev.x_basic()
    infeas = sum(v for j, v in zip(rev.basis, xb) if j >= n)
    if infeas > FEAS_TOL * max(1.0, float(np.abs(b).sum())):
        raise InfeasibleError(f"linear program infeasible (phase-one residual {infeas:.3g})")

    # drive basic artificials out; a row where no real column can replace one is redundant
    dropped = []
    for r in range(m - 1, -1, -1):
        if rev.basis[r] < n:
            continue
        row = _Basis(rev._B()).inv[r] @ rev.A[rev.rows, :n]
        row[[j for j in rev.basis if j < n]] = 0.0
        if np.abs(row).max() > rev.piv_eps:
            rev.basis[r] = int(np.argmax(np.abs(row)))
        else:
            dropped.append(rev.rows[r])
            del rev.rows[r], rev.basis[r]

    cost = np.concatenate([c, np.zeros(m)])
    rev.run(cost, np.arange(n + m) < n, max_iter)
    x = np.zeros(n)
    for j, v in zip(rev.basis, rev.x_basic()):
        x[j] = v
    x = np.maximum(x, 0.0)
    return LPResult(x=x, value=float(c @ x), iterations=rev.iterations, exact=False,
                    dropped_rows=tuple(sorted(dropped)))


def _solve_exact(c, A, b, max_iter: int) -> LPResult:
    m, n = A.shape
    tab = _Tableau(A, b)
    T = tab.T
    # phase one: minimize the sum of artificials
    T[0, :n] = -T[1:, :n].sum(axis=0)
    T[0, -1] = -T[1:, -1].sum()
    tab.run(np.arange(n + m) < n, max_iter)
    infeas = -T[0, -1]
    if infeas > FEAS_TOL * max(1.0, float(np.abs(b).sum())):
        raise InfeasibleError(f"linear program infeasible (phase-one residual {float(infeas):.3g})")

    # drive remaining artificials out of the basis; rows where that fails are redundant.
    # A basic artificial may carry a residual below FEAS_TOL (float marginals that
    # do not sum identically); it is zeroed, i.e. b is perturbed by that amount.
    dropped = []
    for r in range(1, m + 1):
        if tab.basis[r - 1] < n:
            continue
        T[r, -1] = Fraction(0)
        cols = np.flatnonzero((T[r, :n] != 0).astype(bool))
        if cols.size:
            tab.pivot(r, int(cols[0]))
        else:
            dropped.append(r)
    keep = [0] + [r for r in range(1, m + 1) if r not in dropped]
    tab.basis = [tab.basis[r - 1] for r in keep[1:]]
    tab.T = T = np.concatenate([T[keep, :n], T[keep, -1:]], axis=1)
    tab.m = len(keep) - 1

    # phase two objective row: reduced costs c - c_B B^-1 A
    T[0, :n] = np.array([Fraction(v) for v in c], dtype=object)
    T[0, -1] = Fraction(0)
    for r, j in enumerate(tab.basis, start=1):
        if T[0, j] != 0:
            T[0] = T[0] - T[0, j] * T[r]
    tab.run(np.ones(n, dtype=bool), max_iter)

    x = np.empty(n, dtype=object)
    x[:] = Fraction(0)
    for r, j in enumerate(tab.basis, start=1):
        x[j] = T[r, -1]
    return LPResult(
        x=np.array([float(v) for v in x]),
        value=float(sum(Fraction(ci) * xi for ci, xi in zip(c, x))),
        iterations=tab.iterations,
        exact=True,
        dropped_rows=tuple(r - 1 for r in dropped),
    )


def independent_rows(A, tol: float = 1e-9) -> list[int]:
    """Indices of a maximal set of linearly independent rows, chosen greedily in order."""
    keep = []
    Q = np.zeros((0, A.shape[1]))
    for i, row in enumerate(A):
        norm = np.linalg.norm(row)
        if norm == 0:
            continue
        v = row / norm
        for _ in range(2):  # re-orthogonalize once for stability
            v = v - Q.T @ (Q @ v)
        left = np.linalg.norm(v)
        if left > tol:
            Q = np.vstack([Q, v / left])
            keep.append(i)
    return keep


def _residual(A, b, x) -> float:
    return float(np.abs(A @ x - b).max(initial=0.0))


def solve_lp(c, A_eq, b_eq, *, exact: bool | None = None, max_iter: int = 200_000) -> LPResult:
    """Solve ``min c.x`` over ``A_eq x = b_eq, x >= 0``.

    ``exact=None`` solves in floating point and re-solves with rational
    arithmetic when the float answer fails verification and the instance has
    at most ``EXACT_MAX_VARS`` variables.  ``exact=True`` forces rationals and
    ``exact=False`` forbids them.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A_eq, dtype=float)
    b = np.asarray(b_eq, dtype=float)
    neg = b < 0
    A = np.where(neg[:, None], -A, A)
    b = np.abs(b)
    if exact:
        return _solve_exact(c, A, b, max_iter)
    may_retry = exact is None and A.shape[1] <= EXACT_MAX_VARS
    # the float pass sees independent rows scaled to unit max-norm, so its
    # tolerances mean the same thing on every row; verification uses all rows
    norm = np.abs(A).max(axis=1, initial=0.0)
    norm[norm == 0] = 1.0
    rows = independent_rows(A)
    try:
        res = _solve_float(c, (A / norm[:, None])[rows], (b / norm)[rows], max_iter)
    except SolverError:
        if not may_retry:
            raise
    else:
        gap = _residual(A, b, res.x)
        if gap <= FEAS_TOL:
            others = sorted(set(range(len(b))) - set(rows))
            dropped = others + [rows[k] for k in res.dropped_rows]
            return replace(res, dropped_rows=tuple(sorted(dropped)))
        if not may_retry:
            raise SolverError(f"float simplex solution misses the constraints by {gap:.3g}")
    log.info("float simplex failed; re-solving with exact arithmetic")
    return _solve_exact(c, A, b, max_iter)
