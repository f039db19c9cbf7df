"""Compare the compiled and pure-Python simulation kernels.

Both kernels consume the same pre-drawn arrival stream, so the benchmark
also confirms that they end in the same state.

    python3 benchmarks/bench_kernel.py --steps 1000000
"""

import argparse
import time

import numpy as np

from luckock import sim
from luckock.model import uniform


def time_kernel(name, prices, is_buy, dts, weights, grid):
    cls = sim.kernel_class(name)
    state = cls(0.25, 0.75, weights.shape[1], grid, prices.size // 10, prices.size // 50, 50, [[0.3, 0.5]], 1000, 0)
    t0 = time.perf_counter()
    state.advance(prices, is_buy, dts, weights)
    return time.perf_counter() - t0, state


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--steps", type=int, default=1_000_000)
    ap.add_argument("--weights", type=int, default=0, help="number of tracked linear functionals")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    spec = uniform(0.25, 0.75)
    prices, is_buy, dts = sim.Sampler(spec).draw(sim.make_rng(args.seed), args.steps)
    weights = np.ascontiguousarray(np.random.default_rng(args.seed).normal(size=(args.steps, args.weights)))
    grid = sim.default_f_grid(spec)

    results = {}
    for name in ("python", "cython"):
        try:
            results[name] = time_kernel(name, prices, is_buy, dts, weights, grid)
        except ImportError:
            print(f"{name:>7}: not available")
    for name, (secs, _) in results.items():
        print(f"{name:>7}: {secs:8.3f} s  ({args.steps / secs / 1e6:6.2f} M steps/s)")
    if len(results) == 2:
        (tp, sp), (tc, sc) = results["python"], results["cython"]
        same = (np.array_equal(sp.hist_minus, sc.hist_minus) and np.array_equal(sp.counters, sc.counters)
                and sp.book() == sc.book())
        print(f"speedup: {tp / tc:.1f}x   identical final state: {same}")


if __name__ == "__main__":
    main()
