"""Time the compiled kernels against the numpy fallback on representative inputs.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run on identical inputs through both backends; outputs are compared
before timing so a speedup never hides a wrong answer.
"""
import argparse
import timeit

import numpy as np

from mgspectral import _pykernels as py
from mgspectral.multiplier import PhysicalParams
from mgspectral.spectral import Grid
from mgspectral.stability import StabilityProblem, chain_coefficients

try:
    from mgspectral import _ckernels as cy
except ImportError:
    cy = None


def cases():
    g = Grid.cube(64)
    k1, k2, k3 = g.wavenumbers
    yield "symbol_fill 64^3", lambda mod: mod.symbol_fill(k1, k2, k3, 1.0, 0.01)

    p = PhysicalParams(eps_nu=0.0, eps_kappa=0.0, amplitude_A=10.0)
    d, q = chain_coefficients(StabilityProblem(1, 1, p, 64), 4096)
    yield "ladder_bisect depth 4096", lambda mod: mod.ladder_bisect(0.4, 5.0, d, q, 200, 1e-15)

    yield "lower_bound_argmax 40000x400", lambda mod: mod.lower_bound_argmax(16.0, 1, 1.0, 0.0, 1e-4,
                                                                              1, 40000, 1, 400)


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=0.0)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if cy is None:
        print("compiled kernels not built; only the fallback is available")
    print(f"{'kernel':32s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, fn in cases():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat))
        if cy is None:
            print(f"{name:32s} {t_py:10.4f} {'-':>10s} {'-':>8s}")
            continue
        if not same(fn(py), fn(cy)):
            raise SystemExit(f"{name}: backends disagree")
        t_cy = min(timeit.repeat(lambda: fn(cy), number=1, repeat=args.repeat))
        print(f"{name:32s} {t_py:10.4f} {t_cy:10.4f} {t_py / t_cy:8.1f}x")


if __name__ == "__main__":
    main()
