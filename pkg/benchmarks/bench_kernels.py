"""Compare the compiled and numpy projection kernels.

    python benchmarks/bench_kernels.py [--rows 2000] [--repeat 5]

Times the three kernels behind Cat-PGD on a synthetic-benchmark-shaped batch,
checks that both backends agree, and prints a speedup table.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from catrobust import _kernels_py

try:
    from catrobust import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def make_batch(rows: int, cards, seed: int = 0):
    rng = np.random.default_rng(seed)
    off = np.concatenate([[0], np.cumsum(cards)]).astype(np.int64)
    X = np.zeros((rows, off[-1]))
    W = rng.uniform(0.1, 20.0, X.shape)
    for i, t in enumerate(cards):
        hot = off[i] + rng.integers(0, t, rows)
        X[np.arange(rows), hot] = 1.0
        W[np.arange(rows), hot] = 0.0
    D = rng.normal(0, 0.5, X.shape)
    return X, D, W, off


def cases(X, D, W, off, eps=1.0, steps=20):
    return {
        "simplex_project_blocks": lambda k: k.simplex_project_blocks(X + D, off),
        "wl1_project_rows": lambda k: k.wl1_project_rows(D, W, eps, 10000.0),
        "dykstra_rows (20 rounds)": lambda k: k.dykstra_rows(X, D, W, eps, off, steps, 10000.0),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cards = [3, 10, 7, 5, 9, 4, 6, 8, 10, 10, 10, 10]  # 8 categorical + 4 binned numeric
    X, D, W, off = make_batch(args.rows, cards)
    backends = {"python": _kernels_py}
    if _ckernels is not None:
        backends["cython"] = _ckernels
    print(f"{args.rows} rows x {X.shape[1]} columns, best of {args.repeat}")
    print(f"{'kernel':<26}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(X, D, W, off).items():
        outs = {b: fn(k) for b, k in backends.items()}
        if len(outs) == 2:
            assert np.allclose(outs["python"], outs["cython"], atol=1e-10), name
        times = {b: min(timeit.repeat(lambda k=k: fn(k), number=1, repeat=args.repeat))
                 for b, k in backends.items()}
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else f"{'n/a':>10}"
        print(f"{name:<26}" + "".join(f"{1000 * t:>10.2f}ms" for t in times.values()) + speed)


if __name__ == "__main__":
    main()
