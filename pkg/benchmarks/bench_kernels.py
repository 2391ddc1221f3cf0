"""Compare the numba kernels with their pure-numpy fallbacks.

Run with ``python3 benchmarks/bench_kernels.py``.  The numba timings
exclude compilation (each kernel is warmed up once).  Both paths receive
the same inputs and the script checks that their outputs agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from levygql import _kernels
from levygql.levy import LevyDriver
from levygql.model import get_model
from levygql.simulate import simulate_batch


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_ig(size: int, repeat: int):
    rng = np.random.default_rng(0)
    mu = np.full(size, 1e-3)
    lam = (10.0 * mu) ** 2
    y = rng.standard_normal(size) ** 2
    u = rng.random(size)
    out = np.empty(size)

    def nb():
        _kernels._ig_transform_nb(mu, lam, y, u, out)

    nb()
    t_nb = best_of(nb, repeat)
    t_np = best_of(lambda: _kernels.ig_transform_numpy(mu, lam, y, u), repeat)
    err = float(np.max(np.abs(out - _kernels.ig_transform_numpy(mu, lam, y, u)) / mu))
    return t_nb, t_np, err


def bench_colsum(size: int, repeat: int):
    rng = np.random.default_rng(1)
    terms = rng.standard_normal((size, 2)) * 10.0 ** rng.uniform(-8, 8, (size, 2))
    out = np.empty(2)

    def nb():
        _kernels._neumaier_cols(terms, out)

    nb()
    t_nb = best_of(nb, repeat)
    t_np = best_of(lambda: _kernels.colsum_numpy(terms), repeat)
    ref = _kernels.colsum_numpy(terms)
    err = float(np.max(np.abs(out - ref) / np.maximum(np.abs(ref), 1e-300)))
    return t_nb, t_np, err


def bench_euler(paths: int, T: float, repeat: int):
    model = get_model("nig-hyperbolic")
    th = model.theta(np.array([1.0, 1.0]))
    drv = LevyDriver("nig", delta=10.0)
    keys = list(range(paths))

    def run(backend):
        return simulate_batch(model, th, drv, T, 0.01, keys, seed=0, fine_div=30, backend=backend)[1]

    a = run("numba")
    t_nb = best_of(lambda: run("numba"), repeat)
    t_np = best_of(lambda: run("numpy"), repeat)
    b = run("numpy")
    err = float(np.nanmax(np.abs(a - b)))
    return t_nb, t_np, err


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--size", type=int, default=1_000_000)
    parser.add_argument("--paths", type=int, default=16)
    parser.add_argument("--T", type=float, default=20.0)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        parser.error("numba is unavailable or disabled; unset LEVYGQL_DISABLE_NUMBA")

    print(f"{'kernel':<28}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max diff':>12}")
    rows = [
        (f"ig_transform n={args.size}", bench_ig(args.size, args.repeat)),
        (f"colsum n={args.size}", bench_colsum(args.size, args.repeat)),
        (f"euler {args.paths}x T={args.T:g}", bench_euler(args.paths, args.T, args.repeat)),
    ]
    for name, (t_nb, t_np, err) in rows:
        print(f"{name:<28}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}{err:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
