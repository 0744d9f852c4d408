"""Time the numba kernels against their array fallbacks.

    python benchmarks/bench_kernels.py [--sizes 1001,10001,100001] [--repeat 5]

Kernel rows call both implementations in one process. The end-to-end row
re-runs a trivial-instance solve in a subprocess with QFDEKIT_DISABLE_NUMBA
set, so import-time backend selection is exercised as users see it.
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from qfdekit import _kernels as K

SOLVE_SNIPPET = """
import time
from qfdekit.instances import trivial_instance
from qfdekit.problem import solve
solve(trivial_instance(11))
tic = time.perf_counter()
for _ in range(3):
    solve(trivial_instance({n}), trials=20)
print((time.perf_counter() - tic) / 3)
"""


def best_of(fn, repeat: int) -> float:
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_rows(n: int, repeat: int, rng):
    g = rng.uniform(0, 1, n)
    wl, wr, d = K.exp_trapezoid_weights(0.8, 1.0 / (n - 1))
    chain = np.cumsum(rng.uniform(0, 1, (8, n)), axis=0)
    f, h = chain[0], chain[1]
    cases = {
        "exp_trapezoid": ((K._exp_trapezoid_numpy, (g, wl, wr, d)),
                          (getattr(K, "_exp_trapezoid_numba", None), (g, wl, wr, d))),
        "order_flags": ((K._order_numpy, (f, h, 0.0)), (getattr(K, "_order_numba", None), (f, h, 0.0))),
        "chain_diameter": ((K._chain_diameter_numpy, (chain,)),
                           (getattr(K, "_chain_diameter_numba", None), (chain,))),
        "comparable_matrix": ((K._comparable_matrix_numpy, (chain, 0.0)),
                              (getattr(K, "_comparable_matrix_numba", None), (chain, 0.0))),
    }
    for name, ((np_fn, args), (nb_fn, _)) in cases.items():
        t_np = best_of(lambda: np_fn(*args), repeat)
        t_nb = float("nan")
        if nb_fn is not None:
            nb_fn(*args)  # compile outside the timing
            t_nb = best_of(lambda: nb_fn(*args), repeat)
        yield name, n, t_np, t_nb


def solve_time(n: int, disable: bool) -> float:
    env = dict(os.environ)
    if disable:
        env["QFDEKIT_DISABLE_NUMBA"] = "1"
    else:
        env.pop("QFDEKIT_DISABLE_NUMBA", None)
    out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(n=n)], env=env,
                         capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1001,10001,100001")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--solve-points", type=int, default=1001)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba available: {K.HAVE_NUMBA}")
    print(f"{'kernel':<18} {'n':>8} {'numpy [s]':>12} {'numba [s]':>12} {'speedup':>8}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, size, t_np, t_nb in kernel_rows(n, args.repeat, rng):
            print(f"{name:<18} {size:>8} {t_np:>12.3e} {t_nb:>12.3e} {t_np / t_nb:>8.2f}")
    t_np = solve_time(args.solve_points, disable=True)
    t_nb = solve_time(args.solve_points, disable=False)
    print(f"{'solve (end to end)':<18} {args.solve_points:>8} {t_np:>12.3e} {t_nb:>12.3e} "
          f"{t_np / t_nb:>8.2f}")


if __name__ == "__main__":
    main()
