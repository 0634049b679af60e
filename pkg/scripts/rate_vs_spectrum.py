"""Compare fitted edge-only decay rates with twice the smallest positive eigenvalue of M.

Random connected graphs with random full-row-rank agreement matrices; the
prediction is exact for the slowest mode, so the ratio should sit near 1.

    python3 scripts/rate_vs_spectrum.py --trials 20
"""
import argparse

import numpy as np

from edgeflow.constraints import EdgeConstraint
from edgeflow.graph import build_graph
from edgeflow.harness import Scenario, UniformInit, run
from edgeflow.integrate import IntegratorConfig
from edgeflow.objectives import Zero


def random_scenario(rng, m, n):
    order = rng.permutation(m)
    pairs = {frozenset((order[k], order[rng.integers(k)])) for k in range(1, m)}
    for _ in range(rng.integers(0, m)):
        pairs.add(frozenset(rng.choice(m, 2, replace=False)))
    g = build_graph(m, [tuple(int(v) + 1 for v in sorted(p)) for p in pairs])
    x_f = rng.uniform(-3, 3, size=(m, n))
    cons = []
    for i, j in g.edges:
        A = rng.normal(size=(int(rng.integers(1, n + 1)), n))
        cons.append(EdgeConstraint(i, j, A, A @ (x_f[i] - x_f[j])))
    return Scenario(
        n=n, graph=g, constraints=tuple(cons), objectives=(Zero(),) * m, mode="edge_only",
        init=UniformInit(seed=int(rng.integers(1 << 30))),
        integrator=IntegratorConfig(t_end=200.0),
    )


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    print(f"{'m':>3} {'n':>3} {'predicted':>10} {'fitted':>10} {'ratio':>7} {'r2':>8}")
    ratios = []
    for _ in range(args.trials):
        sc = random_scenario(rng, int(rng.integers(3, 8)), int(rng.integers(1, 4)))
        ev = np.linalg.eigvalsh(sc.system.M)
        predicted = 2 * ev[ev > 1e-9 * ev.max()].min()
        _, s = run(sc)
        if s.fitted_rate is None:
            print(f"{sc.m:3d} {sc.n:3d} {predicted:10.4f} {'-':>10}  ({s.notes[-1]})")
            continue
        ratios.append(s.fitted_rate / predicted)
        print(f"{sc.m:3d} {sc.n:3d} {predicted:10.4f} {s.fitted_rate:10.4f} {ratios[-1]:7.3f} {s.fit_r_squared:8.5f}")
    if ratios:
        print(f"\nratio: median {np.median(ratios):.3f}, range [{min(ratios):.3f}, {max(ratios):.3f}]")


if __name__ == "__main__":
    main()
