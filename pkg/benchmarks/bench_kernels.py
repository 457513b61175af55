"""Time the compiled kernels against their numpy counterparts.

Both backends are imported directly, so the BOTTOMK_DISABLE_NUMBA flag is
not needed here.  Each case is run once to trigger compilation, then timed
with the best of --repeat runs.  Outputs of the two backends are compared
and the largest relative difference is reported.

    python benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import time

import numpy as np

from bottomk.kernels import _numba, _numpy


def cases(rng, draws, k):
    w = rng.pareto(1.2, k) + 1.0
    W = float(w.sum() * 3)
    s = np.concatenate(([0.0], np.cumsum(w)))
    E = rng.standard_exponential((draws, k + 1))
    EJ = rng.standard_exponential((draws, k // 2 + 1))
    EO = rng.standard_exponential((draws, k - k // 2 + 1))
    sJ = np.concatenate(([0.0], np.cumsum(w[: k // 2])))
    sO = np.concatenate(([0.0], np.cumsum(w[k // 2:])))
    Er = rng.standard_exponential((20, 20, k + 1))
    U = rng.random((20, k))
    small = w[:12]
    rows = rng.pareto(1.2, (2000, 8)) + 1.0
    return {
        "sumexp_roots": lambda m: m.sumexp_roots(s, E, 0.05),
        "lex_roots": lambda m: m.lex_roots(sJ, sO, EJ, EO, W, 0.1),
        "sc_markov": lambda m: m.sc_markov(w, W, Er, U),
        "sc_exact (k=12)": lambda m: m.sc_exact(small, W),
        "sc_exact_rows": lambda m: m.sc_exact_rows(rows, float(rows.sum(axis=1).max() * 2)),
        "prefix_adjusted": lambda m: m.prefix_adjusted(w, W),
        "prefix_rows": lambda m: m.prefix_rows(rows, float(rows.sum(axis=1).max() * 2)),
    }


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--draws", type=int, default=2000, help="Monte Carlo draws per solve")
    ap.add_argument("-k", type=int, default=40, help="sketch size")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    table = cases(np.random.default_rng(args.seed), args.draws, args.k)
    print(f"{'kernel':<18}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}{'max rel diff':>14}")
    for name, call in table.items():
        a = np.asarray(call(_numpy))
        b = np.asarray(call(_numba))  # first call compiles
        diff = float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-300)))
        t_np = best_time(lambda: call(_numpy), args.repeat)
        t_nb = best_time(lambda: call(_numba), args.repeat)
        print(f"{name:<18}{t_np * 1e3:>11.3f}{t_nb * 1e3:>11.3f}{t_np / t_nb:>9.1f}{diff:>14.1e}")


if __name__ == "__main__":
    main()
