"""Time the MILP solver on random full-size snapshots of the default intersection."""

import argparse
import time

import numpy as np

from crosscoord.optimizer import solve
from crosscoord.workloads import snapshot_problem


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    problems = [snapshot_problem(rng) for _ in range(args.count)]
    times = []
    for pr in problems:
        t0 = time.perf_counter()
        solve(pr)
        times.append((time.perf_counter() - t0) * 1e3)
    t = np.array(times)
    print(f"N={problems[0].n_vehicles} P={problems[0].n_conflicts} count={args.count}")
    print(f"mean {t.mean():.2f} ms  p50 {np.percentile(t, 50):.2f} ms  p95 {np.percentile(t, 95):.2f} ms  "
          f"max {t.max():.2f} ms")


if __name__ == "__main__":
    main()
