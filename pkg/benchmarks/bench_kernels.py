"""Compiled vs pure-Python kernels: timings and agreement.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--quick]

Each row reports the best-of-``repeat`` time for both backends, the ratio,
and the max relative difference between their results.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from parasplit import backend
from parasplit.analysis import certify_bound
from parasplit.grid import Mesh2D, manufactured_problem
from parasplit.integrators import make_propagator
from parasplit.splitting import DOMAIN_DECOMPOSITION, build_split


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def tridiag_case(k, nb: int, n: int):
    rng = np.random.default_rng(1)
    lower = -rng.uniform(0.5, 1.0, (nb, n))
    upper = -rng.uniform(0.5, 1.0, (nb, n))
    diag = 2.5 + rng.uniform(0, 1, (nb, n))
    rhs = rng.standard_normal((nb, n))

    def run():
        f = k.tridiag_factor(lower, diag, upper)
        x = rhs.copy()
        k.tridiag_solve(*f, x)
        return x
    return run


def banded_case(k, n: int, bw: int):
    rng = np.random.default_rng(2)
    ab = -rng.uniform(0, 1, (n, 2 * bw + 1))
    ab[:, bw] = 2.0 * bw + 1.0
    rhs = rng.standard_normal(n)

    def run():
        f = k.band_factor(ab.copy(), bw, bw, 0.0)
        x = rhs.copy()
        k.band_solve(f, bw, bw, x)
        return x
    return run


def certify_case(name: str, pair: str, n: int):
    k = backend.get_kernels(name)
    return lambda: certify_bound(pair, 2, n, (20,), kernels=k).max_k[20]


def step_case(name: str, n: int):
    P = manufactured_problem("B", Mesh2D(n))
    split = build_split(P.continuous, P.mesh, DOMAIN_DECOMPOSITION, 2, 1 / 16)

    def run():
        backend.set_backend(name)
        prop = make_propagator("FIE", split, 1e-3, P.F)
        u = P.U0
        for j in range(10):
            u = prop.step(u, j * 1e-3)
        return u
    return run


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)
    if not backend.compiled_available():
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    small = args.quick
    cases = {
        "tridiag 256x256": lambda name: tridiag_case(backend.get_kernels(name), 256, 256),
        "banded n=4096 bw=32": lambda name: banded_case(backend.get_kernels(name),
                                                       1024 if small else 4096, 32),
        "certify FIE-FIE M=2": lambda name: certify_case(name, "FIE-FIE", 300 if small else 1500),
        "certify FIE-DR M=2": lambda name: certify_case(name, "FIE-DR", 300 if small else 1500),
        "10 FIE steps, preset B": lambda name: step_case(name, 31 if small else 63),
    }
    print(f"{'kernel':26s} {'compiled [s]':>13s} {'python [s]':>12s} {'speedup':>8s} {'max rel diff':>13s}")
    original = backend.active_backend()
    try:
        for label, make in cases.items():
            times, results = {}, {}
            for name in ("compiled", "python"):
                run = make(name)
                results[name] = run()
                times[name] = min(timeit.repeat(run, number=1, repeat=args.repeat))
            diff = _rel(results["python"], results["compiled"])
            print(f"{label:26s} {times['compiled']:13.5f} {times['python']:12.5f} "
                  f"{times['python'] / times['compiled']:8.1f} {diff:13.2e}")
    finally:
        backend.set_backend(original)


if __name__ == "__main__":
    main()
