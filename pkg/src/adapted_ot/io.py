"""JSON scenario-tree and reward files.

Scenario tree::

    {"n": 2, "dim": 1,
     "paths": [{"values": [[0.1], [1.0]], "weight": 1}, ...],
     "metric": {"ground": "absolute", "p": 1, "bounded": false},
     "nodes": [{"prefix": [[0.1]], "mass": 0.5}, ...]}

``metric`` and ``nodes`` are optional.  Weights are normalized on load.  When
``nodes`` is present the tree is taken as given (masses included) so that
inconsistent files can be diagnosed rather than silently repaired.

Reward file: ``{"convention": "1..N", "values": [{"prefix": [...], "value": v}]}``
or ``{"family": "panel", "params": {...}}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .process import Diagnostic, FiniteProcess, MetricSpec, from_nodes, from_paths
from .stopping import (RewardProcess, clipped_linear_reward, constant_reward,
                       coordinate_reward, panel_reward, random_lipschitz_reward)


class FormatError(ValueError):
    """A file does not follow the expected JSON layout."""


@dataclass
class LoadedProcess:
    proc: FiniteProcess
    metric: MetricSpec | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    def __iter__(self):
        return iter((self.proc, self.metric, self.diagnostics))


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _state(value, dim: int, where: str) -> tuple:
    coords = [value] if np.isscalar(value) else list(value)
    if len(coords) != dim:
        raise FormatError(f"{where}: state {value!r} has dimension "
                          f"{len(coords)}, file declares {dim}")
    return tuple(float(c) for c in coords)


def parse_metric(block: dict) -> MetricSpec:
    if not isinstance(block, dict):
        raise FormatError("metric block must be an object")
    try:
        return MetricSpec(
            ground=block.get("ground", "euclidean"),
            p=float(block.get("p", 1.0)),
            bounded=bool(block.get("bounded", False)),
            points=tuple(tuple(np.atleast_1d(np.asarray(x, dtype=float)).tolist())
                         for x in block.get("points", ())),
            table=tuple(tuple(r) for r in block.get("table", ())),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"metric block: {exc}") from exc


def parse_process(data: dict, where: str = "<data>") -> LoadedProcess:
    if not isinstance(data, dict) or "paths" not in data:
        raise FormatError(f"{where}: expected an object with a 'paths' list")
    try:
        n = int(data["n"])
        dim = int(data.get("dim", 1))
        raw = data["paths"]
        paths = []
        for k, entry in enumerate(raw):
            values = entry["values"]
            if len(values) != n:
                raise FormatError(
                    f"{where}: path {k} has {len(values)} periods, file declares n={n}")
            paths.append((tuple(_state(v, dim, where) for v in values), float(entry["weight"])))
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{where}: malformed scenario tree ({exc})") from exc
    metric = parse_metric(data["metric"]) if "metric" in data else None
    diagnostics = []
    if "nodes" in data:
        try:
            spec = [(tuple(_state(v, dim, where) for v in nd["prefix"]), float(nd["mass"]))
                    for nd in data["nodes"]]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{where}: malformed node list ({exc})") from exc
        try:
            proc = from_nodes(n, dim, spec)
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from exc
    else:
        try:
            proc = from_paths(paths)
        except ValueError as exc:
            raise FormatError(f"{where}: {exc}") from exc
        if abs(proc.scale - 1.0) > 1e-12:
            diagnostics.append(Diagnostic("normalized", None,
                                          f"weights summed to {proc.scale:.12g}; rescaled to 1"))
    return LoadedProcess(proc, metric, diagnostics)


def load_process(path: str) -> LoadedProcess:
    return parse_process(_read_json(path), path)


def process_to_dict(proc: FiniteProcess, metric: MetricSpec | None = None) -> dict:
    out = {"n": proc.n, "dim": proc.dim,
           "paths": [{"values": [list(s) for s in p], "weight": w} for p, w in proc.paths]}
    if metric is not None:
        out["metric"] = {"ground": metric.ground, "p": metric.p, "bounded": metric.bounded}
        if metric.ground == "table":
            out["metric"]["points"] = [list(x) for x in metric.points]
            out["metric"]["table"] = [list(r) for r in metric.table]
    return out


def save_process(proc: FiniteProcess, path: str, metric: MetricSpec | None = None) -> None:
    with open(path, "w") as fh:
        json.dump(process_to_dict(proc, metric), fh, indent=2)


_CONVENTIONS = {"0..N": 0, "1..N": 1}


def parse_reward(data: dict, n: int | None = None, where: str = "<data>") -> RewardProcess:
    if not isinstance(data, dict):
        raise FormatError(f"{where}: reward file must be an object")
    if "values" in data:
        conv = data.get("convention", "1..N")
        if conv not in _CONVENTIONS:
            raise FormatError(f"{where}: convention must be '0..N' or '1..N'")
        try:
            values = {}
            for entry in data["values"]:
                prefix = tuple(_state(v, len(np.atleast_1d(v)), where) for v in entry["prefix"])
                values[prefix] = float(entry["value"])
        except (KeyError, TypeError) as exc:
            raise FormatError(f"{where}: malformed reward table ({exc})") from exc
        return RewardProcess.from_table(values, start=_CONVENTIONS[conv])
    if "family" in data:
        fam, params = data["family"], dict(data.get("params", {}))
        if fam == "panel":
            return panel_reward()
        if fam == "constant":
            return constant_reward(float(params.get("c", 0.0)),
                                   start=_CONVENTIONS[params.get("convention", "1..N")])
        if fam == "coordinate":
            return coordinate_reward(int(params.get("coord", 0)))
        if fam == "clipped_linear":
            return clipped_linear_reward(params["coefs"], float(params.get("lo", -np.inf)),
                                         float(params.get("hi", np.inf)))
        if fam == "random_lipschitz":
            if n is None:
                raise FormatError(f"{where}: random_lipschitz needs the horizon")
            rng = np.random.default_rng(int(params.get("seed", 0)))
            return random_lipschitz_reward(rng, n)
        raise FormatError(f"{where}: unknown reward family {fam!r}")
    raise FormatError(f"{where}: reward file needs 'values' or 'family'")


def load_reward(path: str, n: int | None = None) -> RewardProcess:
    return parse_reward(_read_json(path), n, path)


__all__ = ["FormatError", "LoadedProcess", "load_process", "parse_process", "save_process",
           "process_to_dict", "parse_metric", "parse_reward", "load_reward"]
