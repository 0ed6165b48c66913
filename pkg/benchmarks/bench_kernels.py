"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Inputs mirror one value-iteration sweep on the default grid (x_max = 60,
delta = 1/24) and one TDPIA stage of 30,000 steps.
"""

import argparse
import timeit

import numpy as np

from speedscale import CostModel, ScaledGeometric, StateGrid, arrival_pmf, min_one_policy
from speedscale import _pykernels as py

try:
    from speedscale import _ckernels as cy
except ImportError:
    cy = None


def cases():
    pmf = arrival_pmf(ScaledGeometric())
    grid = StateGrid(pmf.delta, 60.0)
    n = grid.n
    model = CostModel.quadratic()
    rng = np.random.default_rng(0)
    values = np.cumsum(rng.random(n + pmf.max_idx))
    g = pmf.geometric
    pc = np.ascontiguousarray(model.power(grid.x))
    gv = py.expect_shift(values, pmf.idx, pmf.prob, n)
    table = min_one_policy(pmf.delta).table(4096)
    arr = pmf.sample_idx(rng, 30_000)

    def chain(mod):
        xs = np.empty(30_001, np.int64)
        us = np.empty(30_000, np.int64)
        return lambda: mod.run_chain(table, arr, xs, us, 0, 30_000, 0, 4095)

    return {
        f"expect_shift ({pmf.idx.size} taps, {n} states)":
            lambda m: (lambda: m.expect_shift(values, pmf.idx, pmf.prob, n)),
        "expect_geometric (recursion)":
            lambda m: (lambda: m.expect_geometric(values, g.stride, g.ratio, g.weights, g.tail_weight,
                                                  g.point_idx, g.point_prob, n)),
        "minplus_monotone (divide and conquer)": lambda m: (lambda: m.minplus_monotone(gv, pc, n)),
        "run_chain (30k steps)": chain,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"{'kernel':44s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}")
    for name, make in cases().items():
        t_py = min(timeit.repeat(make(py), number=1, repeat=args.repeat)) * 1e3
        if cy is None:
            print(f"{name:44s} {t_py:12.3f} {'n/a':>12s} {'':>8s}")
            continue
        t_cy = min(timeit.repeat(make(cy), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:44s} {t_py:12.3f} {t_cy:12.3f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
