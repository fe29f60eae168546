"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--queries 2000] [--repeat 5]

Both backends are called directly on the same synthetic batch, so the
numbers compare kernels only.  Outputs are checked for bitwise equality.
"""

import argparse
import sys
import timeit

import numpy as np

from tsrisk import _kernels_py
from tsrisk.experiment import default_grid
from tsrisk.retrieval import discount_weights
from tsrisk.synth import SynthConfig, synth_batch

try:
    from tsrisk import _kernels
except ImportError:
    _kernels = None


def cases(batch, lam, gam, r0=1):
    w = discount_weights(max(batch.max_ranked(r0), 1))
    sums = np.random.default_rng(0).random((len(batch), lam.size))
    return {
        "loss_tables": lambda k: k.loss_tables(batch.offsets, batch.relevance, batch.score_retrieval,
                                               batch.score_rank, lam, gam, r0, w),
        "set_size_totals": lambda k: k.set_size_totals(batch.score_retrieval, batch.score_rank, lam, gam),
        "neumaier_colsum": lambda k: k.neumaier_colsum(sums),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1

    batch = synth_batch(SynthConfig(n_queries=args.queries, seed=0))
    lam = gam = np.asarray(list(default_grid()))
    print(f"{args.queries} queries, {batch.offsets[-1]} docs, {lam.size}x{gam.size} grid, best of {args.repeat}")
    print(f"{'kernel':<18}{'compiled (ms)':>15}{'numpy (ms)':>13}{'speedup':>10}  identical")
    for name, call in cases(batch, lam, gam).items():
        t_c = min(timeit.repeat(lambda: call(_kernels), number=1, repeat=args.repeat))
        t_p = min(timeit.repeat(lambda: call(_kernels_py), number=1, repeat=args.repeat))
        ok = same(call(_kernels), call(_kernels_py))
        print(f"{name:<18}{1e3 * t_c:>15.2f}{1e3 * t_p:>13.2f}{t_p / t_c:>9.1f}x  {ok}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
