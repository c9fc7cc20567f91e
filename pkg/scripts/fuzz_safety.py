"""Run randomized scenarios and report unsafe or unfinished runs."""

import argparse

from crosscoord.simulator import min_lane_gaps, run
from crosscoord.workloads import fuzz_scenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=100)
    ap.add_argument("--start", type=int, default=0)
    ap.add_argument("--max-per-lane", type=int, default=5)
    args = ap.parse_args()
    bad = 0
    for seed in range(args.start, args.start + args.count):
        res = run(fuzz_scenario(seed, max_per_lane=args.max_per_lane))
        gap = min(min_lane_gaps(res).values(), default=float("inf"))
        ok = res.completed and not res.violations and gap >= -1e-9
        bad += not ok
        print(f"seed {seed:4d}  vehicles {len(res.vehicles):3d}  makespan {res.makespan:8.2f}  "
              f"violations {len(res.violations)}  min lane gap {gap:7.3f}  {'ok' if ok else 'FAIL'}")
    print(f"{args.count - bad}/{args.count} runs safe and complete")
    return 1 if bad else 0


if __name__ == "__main__":
    raise SystemExit(main())
