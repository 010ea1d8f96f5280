"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--sizes 1023 4095 16383] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from augtik import kernels
from augtik.grid_pde import Grid, assemble
from augtik.problems import get_problem


def _cases(n, rng):
    grid = Grid.interval(-1.0, 1.0, n + 1)
    op = assemble(grid)
    data = get_problem("example1").discretize(grid)
    h2 = grid.spacing[0] ** 2
    a, e = 2.0 / h2, -1.0 / h2
    p, y = rng.normal(size=n), 1.0 + 0.01 * rng.normal(size=n)
    mu = np.abs(rng.normal(size=n))
    d = 1.0 + 1e4 * (rng.random(n) < 0.3)
    c = (rng.random(n) < 0.5) / 1e-2
    rs, ra = rng.normal(size=n), rng.normal(size=n)
    b = rng.normal(size=n)
    w = grid.weight
    step = 1.0 / (0.1 + 1.0 / op.lambda_min**2)

    def solve(mod):
        fac = mod.ptfactor(np.full(n, a), np.full(n - 1, e))
        return lambda: mod.ptsolve(*fac, b)

    def prox(mod):
        fac = mod.ptfactor(np.full(n, a), np.full(n - 1, e))
        return lambda: mod.prox_gradient_1d(*fac, w, np.zeros(n), data.f, data.yd, data.psi, np.zeros(n),
                                            data.ua, data.ub, 0.1, 10.0, data.beta, step, 50, 0.0)

    return {
        "ptsolve": solve,
        "classify": lambda mod: (lambda: mod.classify(p, y, mu, data.psi, data.ua, data.ub, 0.1, 10.0, data.beta)),
        "kkt_tridiag_solve": lambda mod: (lambda: mod.kkt_tridiag_solve(a, e, d, c, rs, ra)),
        "prox_gradient_1d (50 its)": prox,
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[1023, 4095, 16383])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; timing the fallback only")
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'n':>6s} " + " ".join(f"{b:>12s}" for b in backends) + ("   speedup" if len(backends) == 2 else ""))
    for n in args.sizes:
        for name, make in _cases(n, rng).items():
            times = []
            for backend in backends:
                fn = make(kernels.get_backend(backend))
                number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
                times.append(min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number)
            cols = " ".join(f"{t * 1e3:10.3f}ms" for t in times)
            extra = f"   {times[0] / times[1]:7.1f}x" if len(times) == 2 else ""
            print(f"{name:28s} {n:6d} {cols}{extra}")


if __name__ == "__main__":
    main()
