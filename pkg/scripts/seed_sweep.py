"""Run both bundled formation scenarios over a range of seeds and tabulate the results.

    python3 scripts/seed_sweep.py --seeds 10
"""
import argparse

import numpy as np

from edgeflow import scenarios
from edgeflow.cli import load_scenario
from edgeflow.harness import run


def smallest_positive_eigenvalue(M):
    ev = np.linalg.eigvalsh(M)
    return float(ev[ev > 1e-9 * ev.max()].min())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--first", type=int, default=1)
    args = ap.parse_args()

    for name in scenarios.NAMES:
        sc = load_scenario(scenarios.path(name))
        print(f"\n{name}  (mode={sc.mode}, t_end={sc.integrator.t_end:g})")
        if sc.mode == "edge_only":
            print(f"  predicted V rate 2*lambda_+ = {2 * smallest_positive_eigenvalue(sc.system.M):.4f}")
        print(f"  {'seed':>4} {'final_V':>10} {'final_W':>10} {'rate':>8} {'r2':>8} {'nfev':>7} {'wall':>6} locality")
        for seed in range(args.first, args.first + args.seeds):
            _, s = run(sc, seed=seed)
            w = f"{s.final_W:10.2e}" if s.final_W is not None else f"{'-':>10}"
            rate = f"{s.fitted_rate:8.4f}" if s.fitted_rate is not None else f"{'-':>8}"
            r2 = f"{s.fit_r_squared:8.5f}" if s.fit_r_squared is not None else f"{'-':>8}"
            print(f"  {seed:4d} {s.final_V:10.2e} {w} {rate} {r2} {s.nfev:7d} {s.wall_time:6.2f} {s.locality_ok}")


if __name__ == "__main__":
    main()
