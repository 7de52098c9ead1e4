"""Time Gram assembly with the compiled core against the numpy fallback.

    python benchmarks/bench_gram.py [--sizes 100 400 1000] [--repeat 5]

Each row reports the best of ``--repeat`` runs for a mixed-time Gram matrix
(rows at three snapshot times, columns at the sample positions) and the
largest relative difference between the two backends.
"""
import argparse
import timeit

import numpy as np

from fpkernel import _backend
from fpkernel.kernels import KernelModel

FAMILIES = ("gaussian_heat", "dirichlet_heat", "neumann_heat", "ornstein_uhlenbeck")


def problem(family, n, rng):
    model = KernelModel(family)
    lo, hi = (0.0, 1.0) if model.bounded else (-2.0, 2.0)
    x = rng.uniform(lo, hi, n)
    t = np.repeat([0.01, 0.02, 0.03] if model.bounded else [0.2, 0.4, 0.6], -(-n // 3))[:n]
    return x, t


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[100, 400, 1000])
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    if _backend.compiled_core is None:
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    print(f"{'family':<20}{'n':>6}{'python [s]':>13}{'cython [s]':>13}{'speedup':>9}{'max rel diff':>14}")
    for family in FAMILIES:
        for n in args.sizes:
            x, t = problem(family, n, rng)
            models = {name: KernelModel(family, backend=name) for name in ("python", "cython")}
            grams = {name: m.gram(x, t, x) for name, m in models.items()}
            times = {name: best_time(lambda m=m: m.gram(x, t, x), args.repeat) for name, m in models.items()}
            scale = np.abs(grams["python"]).max()
            diff = np.abs(grams["python"] - grams["cython"]).max() / scale
            print(
                f"{family:<20}{n:>6}{times['python']:>13.4f}{times['cython']:>13.4f}"
                f"{times['python'] / times['cython']:>9.2f}{diff:>14.1e}"
            )


if __name__ == "__main__":
    main()
