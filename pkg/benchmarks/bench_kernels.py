"""Compare the compiled kernel extension against the pure-Python fallback.

Runs the full level-kernel engine over a few generated designs with each
available backend, checks bit-identical outputs, and prints per-design
timings plus the speedup.

Usage: python benchmarks/bench_kernels.py [--cells N ...] [--repeat K]
"""

import argparse
import time

import numpy as np

from stasim import GeneratorConfig, generate_design, flatten, power_law
from stasim.backend import available_backends, backend_name
from stasim.warp import run_engine


def time_engine(flat, kernels, repeat):
    best = float("inf")
    state = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        state = run_engine(flat, kernels=kernels)
        best = min(best, time.perf_counter() - t0)
    return best, state


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", type=int, nargs="+",
                    default=[200, 1000, 5000, 20000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    backends = available_backends()
    print(f"active backend: {backend_name()}; available: {sorted(backends)}")
    header = f"{'cells':>7} {'pins':>8} {'levels':>6}"
    for name in sorted(backends):
        header += f" {name + ' (s)':>14}"
    if len(backends) > 1:
        header += f" {'speedup':>9}"
    print(header)

    fields = ("load", "net_delay", "impulse", "slew", "arrival",
              "required", "slack", "arc_delay")
    for n in args.cells:
        cfg = GeneratorConfig(num_cells=n, fanout=power_law(2.0, 64),
                              depth_target=min(12, n), seed=args.seed)
        flat = flatten(generate_design(cfg))
        row = f"{n:>7} {flat.n_pins:>8} {flat.n_levels:>6}"
        times = {}
        states = {}
        for name in sorted(backends):
            times[name], states[name] = time_engine(flat, backends[name],
                                                    args.repeat)
            row += f" {times[name]:>14.4f}"
        if len(backends) > 1:
            for f in fields:
                a = getattr(states["compiled"], f)
                b = getattr(states["python"], f)
                if not np.array_equal(a, b):
                    raise SystemExit(f"backend mismatch in {f} at {n} cells")
            row += f" {times['python'] / times['compiled']:>8.1f}x"
        print(row)
    if len(backends) > 1:
        print("outputs bit-identical across backends")


if __name__ == "__main__":
    main()
