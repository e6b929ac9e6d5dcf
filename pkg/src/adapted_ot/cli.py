"""Command-line interface: ``adapted-ot {distance,stop,converge,validate}``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from .causal import bicausal_distance_lp, build_causal_lp, causal_distance
from .errors import (DimensionMismatchError, HorizonMismatchError, InstanceTooLargeError,
                     SolverError, SupportError)
from .experiments import FAMILIES, FamilySpec, run_convergence
from .io import FormatError, load_process, load_reward
from .nested import nested_distance
from .process import DEFAULT_TOL, GROUNDS, MetricSpec, check_same_shape, validate
from .stopping import enumerate_stopping_values, snell_value
from .topologies import aldous_distance, hellwig_distance, martingale_check, prediction_process
from .transport import wasserstein

EXIT_VIOLATION = 1
EXIT_PARSE = 2
EXIT_SHAPE = 3
EXIT_SOLVER = 4
EXIT_ORACLE_CAP = 5
EXIT_INVARIANT = 6

DISTANCE_ROWS = ("W", "CW_fwd", "CW_bwd", "SCW", "AW", "ND", "IW", "ALDOUS")


def fmt(x: float) -> str:
    return format(float(x), ".12g")


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; SUPPRESS keeps a
    # subparser from overwriting a value given before it
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("-p", type=float, default=d(None), help="transport order p >= 1")
    g.add_argument("--ground", choices=GROUNDS, default=d(None), help="ground metric")
    g.add_argument("--bounded", action="store_true", default=d(False),
                   help="use min(1, rho) as ground metric")
    g.add_argument("--tol", type=float, default=d(DEFAULT_TOL), help="consistency tolerance")
    g.add_argument("--output", "-o", default=d(None), help="write data here instead of stdout")
    g.add_argument("--format", choices=("table", "csv", "json"), default=d(None),
                   help="output format")
    return g


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adapted-ot", parents=[_global_flags(False)],
        description="Adapted transport distances and optimal stopping on scenario trees.")
    sub = parser.add_subparsers(dest="command", required=True)
    flags = [_global_flags(True)]

    d = sub.add_parser("distance", parents=flags, help="all distances between two trees")
    d.add_argument("file_a")
    d.add_argument("file_b")
    d.add_argument("--dump-lp", metavar="DIR", help="write the causal LPs in LP text format")

    s = sub.add_parser("stop", parents=flags, help="optimal stopping value and rule")
    s.add_argument("file")
    s.add_argument("reward_file")
    s.add_argument("--oracle", action="store_true", help="cross-check by enumeration")
    s.add_argument("--maximize", action="store_true", help="sup instead of inf")

    c = sub.add_parser("converge", parents=flags, help="convergence study for a family")
    c.add_argument("spec_file", nargs="?", help="JSON family spec")
    c.add_argument("--family", choices=FAMILIES)
    c.add_argument("--steps", type=int)
    c.add_argument("--eps0", type=float)
    c.add_argument("--ratio", type=float)
    c.add_argument("--periods", type=int)
    c.add_argument("--pattern", help="file pattern with {n} for the custom family")

    v = sub.add_parser("validate", parents=flags, help="check a scenario-tree file")
    v.add_argument("file")
    return parser


def resolve_metric(args, base: MetricSpec | None) -> MetricSpec:
    m = base or MetricSpec()
    if args.ground is not None and args.ground != m.ground:
        m = MetricSpec(args.ground, m.p, m.bounded)
    if args.p is not None:
        m = replace(m, p=args.p)
    if args.bounded:
        m = replace(m, bounded=True)
    return m


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("ADAPTED_OT_THREADS", "1")))
    except ValueError:
        return 1


def _emit(args, text: str) -> None:
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)


def _table(rows: list[tuple[str, str]]) -> str:
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows)


def cmd_distance(args) -> int:
    a, ma, _ = load_process(args.file_a)
    b, mb, _ = load_process(args.file_b)
    if ma is not None and mb is not None and ma != mb:
        print("warning: metric blocks differ; using the first file's", file=sys.stderr)
    m = resolve_metric(args, ma or mb)
    try:
        check_same_shape(a, b)
    except HorizonMismatchError:
        raise HorizonMismatchError(
            f"horizons differ: {args.file_a} has N={a.n}, {args.file_b} has N={b.n}") from None

    jobs = {
        "W": lambda: wasserstein(a, b, m),
        "CW_fwd": lambda: causal_distance(a, b, m)[0],
        "CW_bwd": lambda: causal_distance(b, a, m)[0],
        "AW": lambda: bicausal_distance_lp(a, b, m)[0],
        "ND": lambda: nested_distance(a, b, m)[0],
        "IW": lambda: hellwig_distance(a, b, m),
        "ALDOUS": lambda: aldous_distance(a, b, m),
    }
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        futures = {k: pool.submit(f) for k, f in jobs.items()}
        vals = {k: f.result() for k, f in futures.items()}
    vals["SCW"] = max(vals["CW_fwd"], vals["CW_bwd"])
    delta = abs(vals["AW"] - vals["ND"])

    if args.dump_lp:
        out = Path(args.dump_lp)
        out.mkdir(parents=True, exist_ok=True)
        (out / "causal_fwd.lp").write_text(build_causal_lp(a, b, m, "causal").to_lp_text())
        (out / "causal_bwd.lp").write_text(build_causal_lp(b, a, m, "causal").to_lp_text())
        (out / "bicausal.lp").write_text(build_causal_lp(a, b, m, "bicausal").to_lp_text())

    fmt_ = args.format or "table"
    if fmt_ == "json":
        text = json.dumps({**{k: vals[k] for k in DISTANCE_ROWS}, "AW_ND_delta": delta,
                           "p": m.p, "ground": m.ground, "bounded": m.bounded}, indent=2) + "\n"
    elif fmt_ == "csv":
        text = (",".join(DISTANCE_ROWS + ("AW_ND_delta",)) + "\n"
                + ",".join(fmt(vals[k]) for k in DISTANCE_ROWS) + f",{fmt(delta)}\n")
    else:
        text = _table([("quantity", "value")] + [(k, fmt(vals[k])) for k in DISTANCE_ROWS]
                      + [("AW_ND_delta", fmt(delta))])
    _emit(args, text)
    if delta > 1e-7:
        print(f"warning: AW and ND differ by {fmt(delta)}", file=sys.stderr)
    return 0


def _prefix_text(prefix) -> str:
    return "(" + ", ".join(",".join(fmt(c) for c in s) for s in prefix) + ")"


def cmd_stop(args) -> int:
    proc, _, _ = load_process(args.file)
    L = load_reward(args.reward_file, proc.n)
    value, rule = snell_value(proc, L, maximize=args.maximize)
    oracle = None
    if args.oracle:
        oracle = enumerate_stopping_values(proc, L, maximize=args.maximize)
    internal = [nd for nd in proc.nodes if nd.children and nd.depth >= L.start]

    fmt_ = args.format or "table"
    if fmt_ == "json":
        out = {"value": value,
               "rule": [{"node": nd.id, "depth": nd.depth,
                         "prefix": [list(s) for s in nd.prefix], "stop": rule.stop[nd.id]}
                        for nd in internal]}
        if oracle is not None:
            out.update(oracle=oracle, delta=abs(oracle - value))
        text = json.dumps(out, indent=2) + "\n"
    elif fmt_ == "csv":
        text = "node,depth,prefix,action\n" + "".join(
            f"{nd.id},{nd.depth},\"{_prefix_text(nd.prefix)}\","
            f"{'stop' if rule.stop[nd.id] else 'continue'}\n" for nd in internal)
        text = f"value,{fmt(value)}\n" + text
    else:
        rows = [("value", fmt(value))]
        if oracle is not None:
            rows += [("oracle", fmt(oracle)), ("delta", fmt(abs(oracle - value)))]
        rows += [(f"node {nd.id} {_prefix_text(nd.prefix)}",
                  "stop" if rule.stop[nd.id] else "continue") for nd in internal]
        text = _table(rows)
    _emit(args, text)
    return 0


def _family_spec(args) -> tuple[FamilySpec, int]:
    data = {}
    if args.spec_file:
        try:
            data = json.loads(Path(args.spec_file).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise FormatError(f"{args.spec_file}: {exc}") from exc
        if not isinstance(data, dict):
            raise FormatError(f"{args.spec_file}: family spec must be an object")
    steps = data.pop("steps", 8)
    overrides = {"family": args.family, "eps0": args.eps0, "ratio": args.ratio,
                 "n_periods": args.periods, "pattern": args.pattern, "p": args.p,
                 "ground": args.ground}
    data.update({k: v for k, v in overrides.items() if v is not None})
    if args.bounded:
        data["bounded"] = True
    if args.steps is not None:
        steps = args.steps
    if "family" not in data:
        raise FormatError("converge needs a spec file or --family")
    if steps < 0:
        raise FormatError("--steps must be nonnegative")
    try:
        return FamilySpec(**data), int(steps)
    except TypeError as exc:
        raise FormatError(f"family spec: {exc}") from exc


def cmd_converge(args) -> int:
    spec, steps = _family_spec(args)
    report = run_convergence(spec, steps, workers=_threads())
    text = report.to_json() + "\n" if args.format == "json" else report.to_csv()
    _emit(args, text)
    if report.rows:
        print(f"classification: {report.classification}", file=sys.stderr)
    if report.violations:
        for v in report.violations:
            print(f"invariant violated: {v}", file=sys.stderr)
        return EXIT_INVARIANT
    return 0


def cmd_validate(args) -> int:
    proc, _, notes = load_process(args.file)
    diags = validate(proc, args.tol)
    mart = martingale_check(prediction_process(proc), args.tol) if not diags else []
    ok = not diags and not mart
    if args.format == "json":
        text = json.dumps({
            "ok": ok,
            "notes": [{"kind": d.kind, "message": d.message} for d in notes],
            "diagnostics": [{"kind": d.kind, "node": d.node, "message": d.message}
                            for d in diags],
            "martingale": [{"node": v.node, "depth": v.depth, "deviation": v.deviation}
                           for v in mart],
        }, indent=2) + "\n"
    else:
        lines = [f"note: {d.message}" for d in notes]
        lines += [f"{d.kind}: node {d.node}: {d.message}" for d in diags]
        lines += [f"martingale: node {v.node} (depth {v.depth}) deviates by {fmt(v.deviation)}"
                  for v in mart]
        lines.append("OK" if ok else f"{len(diags) + len(mart)} violation(s)")
        text = "\n".join(lines) + "\n"
    _emit(args, text)
    return 0 if ok else EXIT_VIOLATION


COMMANDS = {"distance": cmd_distance, "stop": cmd_stop, "converge": cmd_converge,
            "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.p is not None and not args.p >= 1:
        parser.error("-p must be at least 1")
    try:
        return COMMANDS[args.command](args)
    except (FormatError, SupportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (HorizonMismatchError, DimensionMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    except InstanceTooLargeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ORACLE_CAP
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
