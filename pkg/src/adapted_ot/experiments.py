"""Process families and convergence studies across every distance in the package."""

from __future__ import annotations

import csv
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import product

import numpy as np

from .causal import causal_distance, bicausal_distance_lp
from .nested import nested_distance
from .process import FiniteProcess, MetricSpec, from_paths, pth_moment
from .stopping import RewardProcess, reward_panel, snell_value
from .topologies import aldous_distance, hellwig_distance
from .transport import wasserstein

FAMILIES = ("epsilon_reveal", "vanishing_noise", "binomial_perturb", "constant", "custom")
DISTANCE_COLUMNS = ("W", "CW_fwd", "CW_bwd", "SCW", "AW", "ND", "IW", "ALDOUS")
ADAPTED_COLUMNS = ("CW_bwd", "SCW", "AW", "ND", "IW", "ALDOUS")
ND_TOL = 1e-7
ORDER_TOL = 1e-9
ZERO_TOL = 1e-6
FOLLOW_TOL = 1e-3


@dataclass(frozen=True)
class FamilySpec:
    """A sequence ``mu_n`` with parameter ``eps_n = eps0 * ratio**n`` and its limit.

    ``pattern`` is used by the ``custom`` family: a scenario-tree file name
    containing ``{n}``; the limit is read from ``pattern.format(n="limit")``.
    """

    family: str
    n_periods: int = 2
    p: float = 1.0
    eps0: float = 1.0
    ratio: float = 0.1
    ground: str = "absolute"
    bounded: bool = False
    pattern: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {FAMILIES}")
        if self.n_periods < 1:
            raise ValueError("a family needs at least one period")
        if self.family != "constant" and not 0 < self.ratio < 1:
            raise ValueError("ratio must lie in (0, 1) so the schedule decreases to 0")
        if self.family == "custom" and not self.pattern:
            raise ValueError("custom family needs a file pattern")

    @property
    def metric(self) -> MetricSpec:
        return MetricSpec(self.ground, self.p, self.bounded)

    def eps(self, n: int) -> float:
        return self.eps0 * self.ratio ** n


def _signed_paths(first: float, sign: float, n: int) -> tuple:
    return ((first,),) + ((sign,),) * (n - 1)


def make_family(spec: FamilySpec, n: int = 0, limit: bool = False) -> FiniteProcess:
    """Member ``n`` of the family, or its limit when ``limit`` is set."""
    if n < 0:
        raise ValueError("family index must be nonnegative")
    eps = 0.0 if limit else spec.eps(n)
    N = spec.n_periods
    if spec.family == "epsilon_reveal":
        # the sign of the future is revealed by the first coordinate
        return from_paths([(_signed_paths(eps, 1.0, N), 0.5),
                           (_signed_paths(-eps, -1.0, N), 0.5)])
    if spec.family == "vanishing_noise":
        # the first coordinate jitter is independent of the future sign
        return from_paths([(_signed_paths(j * eps, s, N), 0.25)
                           for j, s in product((1.0, -1.0), repeat=2)])
    if spec.family == "binomial_perturb":
        up = 0.5 + eps / 4.0
        paths = []
        for steps in product((1.0, -1.0), repeat=N):
            k = steps.count(1.0)
            paths.append((tuple((float(x),) for x in np.cumsum(steps)),
                          up ** k * (1.0 - up) ** (N - k)))
        return from_paths(paths)
    if spec.family == "constant":
        return from_paths([(_signed_paths(0.0, 1.0, N), 0.5), (_signed_paths(0.0, -1.0, N), 0.5)])
    from .io import load_process

    return load_process(spec.pattern.format(n="limit" if limit else n)).proc


@dataclass
class ConvergenceReport:
    spec: FamilySpec
    reward_ids: list[str]
    rows: list[dict] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)
    vanishing: dict[str, bool] = field(default_factory=dict)
    classification: str = "inconclusive"

    @property
    def columns(self) -> list[str]:
        return ["n", *DISTANCE_COLUMNS, *self.reward_ids, "MOMENT_GAP"]

    def column(self, name: str) -> list[float]:
        return [row[name] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([row["n"]] + [format(row[c], ".12g") for c in self.columns[1:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {"spec": asdict(self.spec), "columns": self.columns, "rows": self.rows,
                "classification": self.classification, "vanishing": self.vanishing,
                "violations": self.violations}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def compute_row(mu: FiniteProcess, limit: FiniteProcess, m: MetricSpec,
                panel: list[RewardProcess]) -> dict:
    cw_fwd = causal_distance(mu, limit, m)[0]
    cw_bwd = causal_distance(limit, mu, m)[0]
    x0 = tuple((0.0,) * mu.dim for _ in range(mu.n))
    row = {
        "W": wasserstein(mu, limit, m),
        "CW_fwd": cw_fwd,
        "CW_bwd": cw_bwd,
        "SCW": max(cw_fwd, cw_bwd),
        "AW": bicausal_distance_lp(mu, limit, m)[0],
        "ND": nested_distance(mu, limit, m)[0],
        "IW": hellwig_distance(mu, limit, m),
        "ALDOUS": aldous_distance(mu, limit, m),
    }
    for L in panel:
        row[_reward_id(L)] = abs(snell_value(mu, L)[0] - snell_value(limit, L)[0])
    row["MOMENT_GAP"] = abs(pth_moment(mu, m, x0) - pth_moment(limit, m, x0))
    return row


def _reward_id(L: RewardProcess) -> str:
    return f"DV_{L.name}"


def row_violations(row: dict) -> list[str]:
    out = []
    n = row["n"]
    if abs(row["AW"] - row["ND"]) > ND_TOL:
        out.append(f"n={n}: AW {row['AW']:.12g} and ND {row['ND']:.12g} disagree")
    for lo, hi in (("W", "CW_fwd"), ("W", "CW_bwd"), ("CW_fwd", "AW"), ("CW_bwd", "AW"),
                   ("SCW", "AW")):
        if row[lo] > row[hi] + ORDER_TOL:
            out.append(f"n={n}: {lo} {row[lo]:.12g} exceeds {hi} {row[hi]:.12g}")
    return out


def _tends_to_zero(values: list[float], spec: FamilySpec) -> bool:
    """Final value below the zero threshold, or a monotone decay tracking the schedule."""
    if not values:
        return False
    if values[-1] < ZERO_TOL:
        return True
    if len(values) < 2:
        return False
    monotone = all(b <= a + ORDER_TOL for a, b in zip(values, values[1:]))
    shrink = spec.eps(len(values) - 1) / spec.eps(0)
    return monotone and values[-1] <= 2.0 * shrink * values[0]


def run_convergence(spec: FamilySpec, steps: int = 8, panel: list | None = None,
                    workers: int | None = None) -> ConvergenceReport:
    """Distances between ``mu_n`` and the limit for ``n = 0 .. steps-1``."""
    m = spec.metric
    panel = reward_panel(spec.n_periods) if panel is None else panel
    limit = make_family(spec, limit=True)
    report = ConvergenceReport(spec, [_reward_id(L) for L in panel])

    def step(n):
        row = {"n": n}
        row.update(compute_row(make_family(spec, n), limit, m, panel))
        return row

    workers = workers or int(os.environ.get("ADAPTED_OT_THREADS", "1"))
    if workers > 1 and steps > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            report.rows = list(pool.map(step, range(steps)))
    else:
        report.rows = [step(n) for n in range(steps)]

    for row in report.rows:
        report.violations += row_violations(row)
    for c in report.columns[1:]:
        report.vanishing[c] = _tends_to_zero(report.column(c), spec)
    if report.rows:
        report.classification = classify(report)
    return report


def classify(report: ConvergenceReport) -> str:
    aw_final = report.rows[-1]["AW"]
    if aw_final < ZERO_TOL:
        final = report.rows[-1]
        for c in ("SCW", "IW", "ALDOUS", *report.reward_ids):
            if final[c] >= FOLLOW_TOL:
                report.violations.append(
                    f"{c} is {final[c]:.12g} at the last step although AW vanished")
        return "adapted"
    if report.vanishing["W"] and not report.vanishing["AW"]:
        return "weak-only"
    return "inconclusive"


__all__ = ["FamilySpec", "ConvergenceReport", "make_family", "run_convergence",
           "compute_row", "row_violations", "classify", "FAMILIES"]
