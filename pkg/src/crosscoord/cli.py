"""Command-line front end: simulate, solve, select and report.

Exit codes: 0 success, 1 usage or input error, 2 infeasible or
unsynchronizable, 3 safety violation detected after a run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from .optimizer import assemble, load_instance, solution_to_dict, solve
from .scenario import ScenarioError, load_scenario, resolve_path
from .selector import build_graph, extract_subset
from .simulator import run, write_outputs

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_UNSAFE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="crosscoord", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log coordination rounds")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="run a scenario and write trajectories.csv + metrics.json")
    p.add_argument("--scenario", required=True, help="scenario JSON (bundled names also accepted)")
    p.add_argument("--out-dir", default="out", type=Path)
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("solve", help="solve one MILP instance and write its solution file")
    p.add_argument("--instance", required=True)
    p.add_argument("--out-dir", default=".", type=Path)

    p = sub.add_parser("select", help="print the FLAG vector and priority graph for V, S, v_max")
    p.add_argument("--instance", required=True, help="JSON with v, s, v_max and optional labels")

    p = sub.add_parser("report", help="summarize a simulate output directory")
    p.add_argument("--out-dir", default="out", type=Path)
    return parser


def _simulate(args) -> int:
    sc = load_scenario(args.scenario, args.overrides, args.seed)
    result = run(sc)
    write_outputs(result, args.out_dir)
    sizes = result.subset_sizes
    print(
        f"vehicles={len(result.vehicles)} rounds={len(sizes)} makespan={result.makespan:.3f} "
        f"violations={len(result.violations)} -> {args.out_dir}"
    )
    if result.violations:
        print(f"safety violations detected: {len(result.violations)}", file=sys.stderr)
        return EXIT_UNSAFE
    if not result.completed:
        print(f"run did not finish by max_time={sc.max_time}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _solve(args) -> int:
    path = resolve_path(args.instance)
    conflicts, n, bounds = load_instance(path)
    sol = solve(assemble(conflicts, n, bounds))
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / f"{path.stem}.solution.json"
    out.write_text(json.dumps(solution_to_dict(sol), indent=2, sort_keys=True) + "\n")
    if not sol.optimal:
        print(f"{path}: {sol.status}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"objective={sol.objective:.4f} velocities={[round(float(v), 4) for v in sol.velocities]} -> {out}")
    return EXIT_OK


def _select(args) -> int:
    data = json.loads(resolve_path(args.instance).read_text())
    try:
        v, s, v_max = data["v"], data["s"], float(data["v_max"])
    except KeyError as exc:
        raise ValueError(f"{args.instance}: missing field {exc}") from None
    flag = extract_subset(v, s, v_max)
    print("FLAG " + " ".join(str(int(f)) for f in flag))
    print(build_graph(v, s, v_max).to_dot(data.get("labels")))
    return EXIT_OK


def _report(args) -> int:
    metrics = json.loads((args.out_dir / "metrics.json").read_text())
    timings_path = args.out_dir / "timings.json"
    times = json.loads(timings_path.read_text())["solve_times_ms"] if timings_path.exists() else []
    makespan = metrics["makespan"]
    print(f"makespan: {makespan:.3f} s" if makespan is not None else "makespan: run incomplete")
    print(f"vehicles: {metrics['n_vehicles']}  rounds: {metrics['n_rounds']}  violations: {len(metrics['violations'])}")
    if times:
        print(f"solve time: mean {np.mean(times):.3f} ms  p95 {np.percentile(times, 95):.3f} ms")
    else:
        print("solve time: no timings recorded")
    print("subset sizes:")
    for size, count in sorted(Counter(metrics["subset_sizes"]).items()):
        print(f"  {size}: {count}")
    return EXIT_OK


_COMMANDS = {"simulate": _simulate, "solve": _solve, "select": _select, "report": _report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioError, FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"crosscoord {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
