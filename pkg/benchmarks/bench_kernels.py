"""Benchmark the dynamics-kernel lanes.

Times the compiled extension against the pure lane on the two call shapes
the toolkit uses: large batches (abstraction sampling) and single-state
steps (sequential training/evaluation episodes). Run as:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from shieldcraft import _kernels
from shieldcraft._kernels import step_py
from shieldcraft.env import EnvParams


def make_batch(rng, n):
    return (
        rng.uniform(0, 0.01, n),
        rng.uniform(0, 1.0, n),
        rng.uniform(0.05, 1.0, n),
        rng.uniform(0, 0.2, n),
        rng.integers(0, 2, n).astype(np.float64),
        rng.integers(0, 4, n),
        rng.standard_normal(n).clip(-3, 3),
        rng.standard_normal(n).clip(-3, 3),
        rng.standard_normal(n).clip(-3, 3),
    )


def time_batch(step_batch, n, repeats, rng, par):
    args = make_batch(rng, n)
    best = float("inf")
    for _ in range(repeats):
        work = tuple(a.copy() for a in args[:4]) + args[4:]
        t0 = time.perf_counter()
        step_batch(*work, par)
        best = min(best, time.perf_counter() - t0)
    return best


def time_scalar(step_one, repeats, rng, par):
    args = (0.002, 0.5, 0.8, 0.05, 1.0, 2, 0.1, -0.2, 0.3)
    t0 = time.perf_counter()
    for _ in range(repeats):
        step_one(*args, par)
    return (time.perf_counter() - t0) / repeats


def main():
    par = EnvParams().param_vector()
    rng = np.random.default_rng(0)
    print(f"compiled extension available: {_kernels.COMPILED_AVAILABLE}")
    print(f"{'shape':>12} {'pure':>12} {'compiled':>12} {'speedup':>9}")

    for n in (100, 10_000, 1_000_000):
        pure = time_batch(step_py.step_batch, n, 5, rng, par)
        line = f"batch {n:>7}: {pure * 1e6:10.1f}us"
        if _kernels.COMPILED_AVAILABLE:
            fast = time_batch(_kernels._stepcore.step_batch, n, 5, rng, par)
            line += f" {fast * 1e6:10.1f}us {pure / fast:8.2f}x"
        print(line)

    pure = time_scalar(step_py.step_one, 200_000, rng, par)
    line = f"single step : {pure * 1e9:10.1f}ns"
    if _kernels.COMPILED_AVAILABLE:
        fast = time_scalar(_kernels._stepcore.step_one, 200_000, rng, par)
        line += f" {fast * 1e9:10.1f}ns {pure / fast:8.2f}x"
    print(line)


if __name__ == "__main__":
    main()
