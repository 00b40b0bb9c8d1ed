"""Compare the compiled dynamics kernel against the pure-Python reference.

Runs the same equilibration workload through both backends, checks the
trajectories are bit-identical, and prints steps/second for each.

Usage: python benchmarks/bench_backends.py [--size 8] [--steps 400]
"""

import argparse
import time

import numpy as np

from multitrack._kernels import reference
from multitrack.topology import Topology, TrackerSpec, initial_split

try:
    from multitrack._kernels import _native as native
except ImportError:
    native = None


def make_instance(q, rng):
    """A feasible star-ish instance: one big steady hub, q-1 transients."""
    trackers = [TrackerSpec("H", 40.0 + 10.0 * q, "steady", 10.0)]
    edges = []
    for k in range(1, q):
        trackers.append(TrackerSpec(f"N{k}", 15.0, "transient", 10.0))
        edges.append((f"N{k}", "H", float(rng.uniform(0.5, 3.0))))
    top = Topology(tuple(trackers), tuple(edges))
    arrivals = rng.uniform(5.0, 12.0, size=q)
    return top, initial_split(top, arrivals).rates


def run(backend, kind, top, X0, dt, steps):
    X = X0.copy()
    t0 = time.perf_counter()
    out = backend.equilibrate(kind, top.capacities, top.prices, top.mask, X,
                              top.cost_weight, dt, 1e-9, 0.0, 1e-9, dt * steps)
    elapsed = time.perf_counter() - t0
    final, nsteps, _, _, costs = out
    return final, nsteps, costs, elapsed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=8, help="number of trackers")
    ap.add_argument("--steps", type=int, default=400, help="Euler steps to time")
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if native is None:
        print("native backend not built; only timing the reference backend")

    rng = np.random.default_rng(args.seed)
    top, X0 = make_instance(args.size, rng)
    print(f"instance: {args.size} trackers, {int(top.mask.sum())} edges, "
          f"{args.steps} steps of dt={args.dt}")

    for kind, name in ((0, "replicator"), (1, "bnn")):
        ref_final, ref_steps, ref_costs, ref_t = run(
            reference, kind, top, X0, args.dt, args.steps)
        line = (f"{name:<10} reference: {ref_steps:5d} steps "
                f"{ref_steps / ref_t:10.1f} steps/s")
        if native is not None:
            nat_final, nat_steps, nat_costs, nat_t = run(
                native, kind, top, X0, args.dt, args.steps)
            same = (nat_steps == ref_steps
                    and np.array_equal(nat_final, ref_final)
                    and np.array_equal(nat_costs, ref_costs))
            line += (f" | native: {nat_steps / nat_t:10.1f} steps/s "
                     f"| speedup {ref_t / nat_t:6.1f}x "
                     f"| bit-identical {'yes' if same else 'NO'}")
            if not same:
                raise SystemExit(f"{name}: backends disagree")
        print(line)


if __name__ == "__main__":
    main()
