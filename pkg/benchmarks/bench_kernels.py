"""Time the numerical kernels on every available backend.

Usage::

    python3 benchmarks/bench_kernels.py --repeat 5 --dims 2 4 8
"""

import argparse
import statistics
import time

import numpy as np

from epmflux import numkernel as nk
from epmflux.qstate import random_hermitian


def available_backends() -> list[str]:
    names = ["python"]
    try:
        from epmflux.numkernel import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def timeit(fn, repeat: int) -> float:
    """Median wall time in seconds over ``repeat`` calls (after one warm-up call)."""
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_eig(d: int, repeat: int, rng: np.random.Generator) -> float:
    a = random_hermitian(d, rng)
    return timeit(lambda: nk.hermitian_eig(a), repeat)


def bench_rk4(d: int, steps: int, repeat: int, rng: np.random.Generator) -> float:
    h = random_hermitian(d, rng)
    grid = np.repeat(h[None], 2 * steps + 1, axis=0)
    diss = np.zeros((d * d, d * d), dtype=complex)
    x0 = np.eye(d * d, dtype=complex)
    return timeit(lambda: nk.rk4_propagate(grid, diss, x0, 1.0 / steps), repeat)


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 4, 8])
    ap.add_argument("--steps", type=int, default=2000, help="RK4 steps")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    previous = nk.BACKEND
    results = {}
    for name in available_backends():
        nk.set_backend(name)
        rng = np.random.default_rng(args.seed)
        for d in args.dims:
            results[(name, "jacobi", d)] = bench_eig(d, args.repeat, rng)
            results[(name, "rk4", d)] = bench_rk4(d, args.steps, args.repeat, rng)
    nk.set_backend(previous)

    print(f"{'kernel':8s} {'d':>3s} " + " ".join(f"{b:>12s}" for b in available_backends()) + "  speedup")
    for kernel in ("jacobi", "rk4"):
        for d in args.dims:
            row = [results[(b, kernel, d)] for b in available_backends()]
            speedup = f"{row[0] / row[-1]:8.1f}x" if len(row) > 1 else "       -"
            print(f"{kernel:8s} {d:3d} " + " ".join(f"{t * 1e3:10.3f}ms" for t in row) + " " + speedup)


if __name__ == "__main__":
    main()
