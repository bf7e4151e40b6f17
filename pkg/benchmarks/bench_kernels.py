"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs once before timing so compilation is excluded. Results
are cross-checked between the two backends before any timing is printed.
"""
import argparse
import timeit

import numpy as np

from dpopt import _kernels
from dpopt.mechanisms import geometric_channel, t_pixelated_laplace
from dpopt.prob import grid_points


def _cases(rng):
    geo = geometric_channel(1.0, 64)
    tlap = t_pixelated_laplace(1.0, 32, 256)
    loss = np.abs(grid_points(32)[:, None] - grid_points(32)[None, :])
    joint = tlap.matrix / 33.0
    centers = np.sort(rng.uniform(0, 1, 200))
    A = np.cumsum(rng.uniform(0, 1, (8, 201)), axis=1)
    B = np.cumsum(rng.uniform(0, 1, (8, 201))[:, ::-1], axis=1)[:, ::-1]
    h = np.diff(np.concatenate(([0.0], centers, [1.0])))
    logc = rng.normal(0, 3, (65, 200))
    return {
        "column_min": lambda k: k(loss, joint),
        "dp_tightness": lambda k: k(np.ascontiguousarray(geo.matrix), np.ascontiguousarray(geo.inputs)),
        "envelope_integrals": lambda k: k(A, B, 1.0, h),
        "clip_adjacent": lambda k: k(logc.copy(), 1.0 / 64),
    }


def _lp_tableau(rng, m=60, n=150):
    A = rng.uniform(0, 1, (m, n))
    b = A @ rng.uniform(0, 1, n)
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -A.sum(axis=0)
    tab[m, -1] = -b.sum()
    return tab, np.arange(n, n + m, dtype=np.int64)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels.NUMBA_KERNELS is None:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(7)
    cases = _cases(rng)
    tab0, basis0 = _lp_tableau(rng)
    n_enter = tab0.shape[1] - 1

    def simplex(k):
        tab, basis = tab0.copy(), basis0.copy()
        k(tab, basis, n_enter, 10_000, 1e-11, 1e-9)
        return tab[-1, -1]

    cases["simplex_run"] = simplex
    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call in cases.items():
        fast, slow = _kernels.NUMBA_KERNELS[name], _kernels.NUMPY_KERNELS[name]
        a, b = call(fast), call(slow)
        if a is not None and not np.allclose(a, b, rtol=1e-9, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_np = min(timeit.repeat(lambda: call(slow), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: call(fast), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<20}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
