"""Optimal stopping on scenario trees.

Values are minimized (``v = inf_tau E[L_tau]``); pass ``maximize=True`` to
solve the sup problem instead.  Rewards are indexed ``1..N`` by default, with
an optional reward at time 0 (``start=0``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .causal import CAUSALITY_TOL, Coupling, check_causality, require_bicausal
from .errors import CausalityError, InstanceTooLargeError, SupportError
from .process import FiniteProcess, Path, as_path

ENUMERATION_MAX_NODES = 20
_CHUNK = 1 << 14
LEVEL_SNAP = 1e-12


@dataclass(frozen=True)
class RewardProcess:
    """Adapted reward ``L_t`` given as a function of the prefix ``x_1..x_t``.

    ``fn(prefix, n)`` receives the prefix and the horizon.  ``lipschitz`` is
    a known constant with respect to the l1 path metric, when one exists.
    """

    fn: Callable[[Path, int], float]
    start: int = 1
    lipschitz: float | None = None
    growth: str = "bounded"
    name: str = "L"

    def __post_init__(self):
        if self.start not in (0, 1):
            raise ValueError("reward convention must start at 0 or 1")

    def table(self, proc: FiniteProcess) -> np.ndarray:
        """Reward at every node; NaN where stopping is not allowed."""
        out = np.full(len(proc.nodes), np.nan)
        for nd in proc.nodes:
            if nd.depth >= self.start:
                val = float(self.fn(nd.prefix, proc.n))
                if not np.isfinite(val):
                    raise ValueError(f"reward at {nd.prefix} is not finite")
                out[nd.id] = val
        return out

    @classmethod
    def from_table(cls, values: dict, start: int = 1, name: str = "table") -> "RewardProcess":
        table = {as_path(k): float(v) for k, v in values.items()}

        def lookup(prefix, n):
            try:
                return table[prefix]
            except KeyError:
                raise SupportError(f"no reward given for prefix {prefix}") from None

        return cls(lookup, start=start, name=name)


def _first(prefix: Path, t: int) -> float:
    return prefix[t - 1][0]


def panel_reward() -> RewardProcess:
    """``L_t = 1/2`` before the horizon, ``L_N = clip((x_N + 1)/2, 0, 1)``."""

    def fn(prefix, n):
        if len(prefix) < n:
            return 0.5
        return min(max((_first(prefix, n) + 1.0) / 2.0, 0.0), 1.0)

    return RewardProcess(fn, lipschitz=0.5, name="panel")


def constant_reward(c: float, start: int = 1) -> RewardProcess:
    return RewardProcess(lambda prefix, n: c, start=start, lipschitz=0.0, name=f"const{c:g}")


def coordinate_reward(coord: int = 0) -> RewardProcess:
    """``L_t = x_t[coord]``; unbounded, 1-Lipschitz."""
    return RewardProcess(lambda prefix, n: prefix[-1][coord], lipschitz=1.0,
                         growth="p-growth", name=f"coord{coord}")


def clipped_linear_reward(coefs, lo: float = -np.inf, hi: float = np.inf,
                          name: str = "linear") -> RewardProcess:
    """``L_t = clip(sum_{s<=t} coefs[t-1][s-1] * x_s[0], lo, hi)``.

    Lipschitz with constant ``max |coefs|`` for the l1 path metric.
    """
    a = np.atleast_2d(np.asarray(coefs, dtype=float))

    def fn(prefix, n):
        t = len(prefix)
        if t > a.shape[0]:
            raise ValueError(f"reward coefficients cover {a.shape[0]} periods, got {t}")
        xs = np.array([s[0] for s in prefix])
        return float(np.clip(a[t - 1, :t] @ xs, lo, hi))

    growth = "bounded" if np.isfinite(lo) and np.isfinite(hi) else "p-growth"
    return RewardProcess(fn, lipschitz=float(np.abs(a).max()), growth=growth, name=name)


def random_lipschitz_reward(rng: np.random.Generator, n: int, name: str = "lip",
                            bound: float = 10.0) -> RewardProcess:
    coefs = np.tril(rng.uniform(-1.0, 1.0, size=(n, n)))
    return clipped_linear_reward(coefs, -bound, bound, name=name)


def reward_panel(n: int, seed: int = 0) -> list[RewardProcess]:
    """The default panel: the step reward plus two seeded Lipschitz rewards."""
    rng = np.random.default_rng(seed)
    return [panel_reward(), random_lipschitz_reward(rng, n, "lip1"),
            random_lipschitz_reward(rng, n, "lip2")]


@dataclass(frozen=True)
class StoppingRule:
    """Deterministic rule: ``stop[v]`` says whether to stop on reaching node ``v``.

    Leaves always stop, so every path is stopped by the horizon.
    """

    proc: FiniteProcess
    stop: tuple[bool, ...]

    def __post_init__(self):
        stop = list(self.stop)
        for leaf in self.proc.leaves:
            stop[leaf] = True
        object.__setattr__(self, "stop", tuple(bool(s) for s in stop))

    @property
    def times(self) -> np.ndarray:
        """Stopping time of each leaf path."""
        anc = self.proc.ancestors
        stop = np.array(self.stop)[anc]
        return np.argmax(stop, axis=1)

    def value(self, L: RewardProcess) -> float:
        vals = L.table(self.proc)
        t = self.times
        at = vals[self.proc.ancestors[np.arange(len(t)), t]]
        if np.any(np.isnan(at)):
            raise ValueError("rule stops where the reward is undefined")
        return float(self.proc.path_weights @ at)

    def describe(self) -> list[tuple[Path, bool]]:
        return [(nd.prefix, self.stop[nd.id]) for nd in self.proc.nodes]


def snell_value(proc: FiniteProcess, L: RewardProcess, maximize: bool = False
                ) -> tuple[float, StoppingRule]:
    """Backward induction ``v = min(L_t, E[v_{t+1} | node])``, stopping on ties."""
    sign = -1.0 if maximize else 1.0
    rewards = sign * L.table(proc)
    v = np.zeros(len(proc.nodes))
    stop = [False] * len(proc.nodes)
    for nd in reversed(proc.nodes):
        if not nd.children:
            v[nd.id] = rewards[nd.id]
            stop[nd.id] = True
            continue
        kids, probs = proc.kernel(nd.id)
        cont = float(probs @ v[list(kids)])
        if nd.depth >= L.start and rewards[nd.id] <= cont:
            v[nd.id] = rewards[nd.id]
            stop[nd.id] = True
        else:
            v[nd.id] = cont
    return sign * float(v[0]), StoppingRule(proc, tuple(stop))


def enumerate_stopping_values(proc: FiniteProcess, L: RewardProcess, maximize: bool = False,
                              max_nodes: int = ENUMERATION_MAX_NODES) -> float:
    """Best value over every deterministic stopping rule, by exhaustive enumeration."""
    sign = -1.0 if maximize else 1.0
    rewards = sign * L.table(proc)
    eligible = [nd.id for nd in proc.nodes if nd.children and nd.depth >= L.start]
    if len(eligible) > max_nodes:
        raise InstanceTooLargeError(
            f"{len(eligible)} decision nodes exceed the enumeration cap of {max_nodes}")
    bit = {v: k for k, v in enumerate(eligible)}
    anc = proc.ancestors
    w = proc.path_weights
    best = np.inf
    total = 1 << len(eligible)
    for lo in range(0, total, _CHUNK):
        masks = np.arange(lo, min(lo + _CHUNK, total), dtype=np.int64)
        value = np.zeros(masks.size)
        for k, leaf in enumerate(proc.leaves):
            reward = np.full(masks.size, rewards[leaf])
            # walk up from the leaf: a stopping ancestor overrides what lies below it
            for t in range(proc.n - 1, -1, -1):
                node = anc[k, t]
                if node in bit:
                    on = (masks >> bit[node]) & 1 == 1
                    reward = np.where(on, rewards[node], reward)
            value += w[k] * reward
        best = min(best, float(value.min()))
    return sign * best


def stability_bound(mu: FiniteProcess, nu: FiniteProcess, L_mu: RewardProcess,
                    L_nu: RewardProcess, plan: Coupling, tol: float = CAUSALITY_TOL) -> float:
    """``E_plan[max_t |L_t(X) - L_t(Y)|]``; the plan must be bicausal."""
    require_bicausal(plan, tol)
    if L_mu.start != L_nu.start:
        raise ValueError("rewards use different time conventions")
    rx = L_mu.table(mu)[mu.ancestors][:, L_mu.start:]
    ry = L_nu.table(nu)[nu.ancestors][:, L_nu.start:]
    gap = np.abs(rx[:, None, :] - ry[None, :, :]).max(axis=2)
    return float(np.sum(plan.plan * gap))


@dataclass(frozen=True)
class RandomizedStoppingRule:
    """Stop at node ``v`` once the external uniform ``u`` is at most ``level[v]``.

    For a fixed ``u`` this is an ordinary stopping rule (:meth:`sample`).
    """

    proc: FiniteProcess
    level: np.ndarray = field(compare=False)

    def sample(self, u: float) -> StoppingRule:
        return StoppingRule(self.proc, tuple(bool(q >= u) for q in self.level))

    def breakpoints(self) -> np.ndarray:
        return np.unique(np.concatenate([self.level[(self.level > 0) & (self.level < 1)],
                                         [1.0]]))

    def value(self, L: RewardProcess) -> float:
        """``integral_0^1 E[L_sigma(u)] du`` as an exact sum over breakpoints."""
        total, prev = 0.0, 0.0
        for u in self.breakpoints():
            # sigma(., u) is constant for u in (prev, u]
            total += (u - prev) * self.sample(u).value(L)
            prev = u
        return total


def coupled_stopping_value(plan: Coupling, tau: StoppingRule, L: RewardProcess) -> float:
    """``E_plan[L_{tau(Y)}(X)]``."""
    mu = plan.mu
    vals = L.table(mu)
    t = tau.times
    at = vals[mu.ancestors[:, t]]  # (x leaf, y leaf)
    return float(np.sum(plan.plan * at))


def transport_stopping_time(tau: StoppingRule, plan: Coupling, L: RewardProcess,
                            tol: float = CAUSALITY_TOL) -> tuple[RandomizedStoppingRule, float]:
    """Carry a stopping rule on ``nu`` over to a randomized rule on ``mu``.

    The stopping level at a ``mu``-node of depth ``t`` is
    ``plan(tau(Y) <= t | X_1..X_t)``.  Returns the rule and its value.
    """
    mu, nu = plan.mu, plan.nu
    if tau.proc != nu:
        raise ValueError("stopping rule lives on a different tree than the coupling target")
    bad = check_causality(plan, mu, nu, "causal", tol)
    if bad:
        raise CausalityError(f"plan is not causal: {bad[0]}")
    t = tau.times
    level = np.zeros(len(mu.nodes))
    for nd in mu.nodes:
        xs = list(mu.leaves_under[nd.id])
        stopped = plan.plan[np.ix_(xs, np.flatnonzero(t <= nd.depth))].sum()
        level[nd.id] = stopped / nd.mass
    # rounding must not move the certain events {u <= 1} and {u <= 0}
    level[np.abs(level - 1.0) <= LEVEL_SNAP] = 1.0
    level[np.abs(level) <= LEVEL_SNAP] = 0.0
    level[list(mu.leaves)] = 1.0
    rule = RandomizedStoppingRule(mu, level)
    return rule, rule.value(L)


__all__ = [
    "RewardProcess", "StoppingRule", "RandomizedStoppingRule", "panel_reward",
    "constant_reward", "coordinate_reward", "clipped_linear_reward",
    "random_lipschitz_reward", "reward_panel", "snell_value", "enumerate_stopping_values",
    "stability_bound", "transport_stopping_time", "coupled_stopping_value",
]
