"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--patterns 20000] [--repeat 5]
"""
import argparse
import time

import numpy as np

from mirtmis._kernels import _fallback

try:
    from mirtmis._kernels import _core
except ImportError:
    _core = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(P, M, L, seed=0):
    gen = np.random.default_rng(seed)
    Y = gen.integers(0, 2, (P, M)).astype(float)
    alpha = gen.uniform(0.3, 2.0, (M, 2))
    beta = gen.normal(size=M)
    A = gen.normal(scale=20.0, size=(P, L))
    offset = gen.normal(size=L)
    base = gen.normal(-30.0, 5.0, (P, L))
    counts = np.ones(P)
    eta = gen.normal(size=L)
    x = gen.normal(size=L)
    y = np.ascontiguousarray(Y[:, 0])

    def posterior(mod):
        B = A.copy()
        mod.posterior_inplace(B, offset, np.empty(P))

    return {
        "posterior": posterior,
        "map_newton": lambda mod: mod.map_newton(Y, alpha, beta, 1e-10, 200),
        "profile_1d": lambda mod: mod.profile_1d(base, counts, y, eta, x),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--patterns", type=int, default=20_000)
    ap.add_argument("--items", type=int, default=50)
    ap.add_argument("--grid", type=int, default=441)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    print(f"P={args.patterns} M={args.items} L={args.grid}, best of {args.repeat}")
    print(f"{'kernel':<12}{'numpy [s]':>12}{'cython [s]':>12}{'speed-up':>10}")
    for name, fn in cases(args.patterns, args.items, args.grid).items():
        t_py = best_of(lambda: fn(_fallback), args.repeat)
        if _core is None:
            print(f"{name:<12}{t_py:>12.4f}{'n/a':>12}{'':>10}")
            continue
        t_c = best_of(lambda: fn(_core), args.repeat)
        print(f"{name:<12}{t_py:>12.4f}{t_c:>12.4f}{t_py / t_c:>9.2f}x")


if __name__ == "__main__":
    main()
