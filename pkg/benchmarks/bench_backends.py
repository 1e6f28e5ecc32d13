"""Benchmark the stage-1 training kernels (compiled vs NumPy fallback).

    python3 benchmarks/bench_backends.py [--steps 30000] [--d 128] [--m 50]

Prints steps/second per available backend and the speedup. Both backends run
the same trajectory from the same seed (they consume identical sample
streams), so the comparison is apples to apples.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mindex._kernels import available_backends  # noqa: E402
from mindex.hermite import hermite_pair  # noqa: E402
from mindex.model import InitConfig, TargetModel, init_network, make_directions  # noqa: E402
from mindex.sgd import TrainConfig, train_stage1  # noqa: E402


def bench(backend: str, d: int, P: int, m: int, steps: int, repeats: int) -> float:
    link = hermite_pair(2)
    target = TargetModel(d=d, P=P, link=link, directions=make_directions(d, P, "canonical"))
    learner = init_network(d, m, InitConfig(a0=1e-4, seed=7))
    cfg = TrainConfig(
        T_max=steps, a0=1e-4, eta_c=3e-4, theta_rec=0.999_999, diag_stride=steps, seed=7
    )
    train_stage1(learner, target, cfg, backend=backend)  # warm-up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        train_stage1(learner, target, cfg, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return steps / best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=30_000)
    parser.add_argument("--d", type=int, default=128)
    parser.add_argument("--P", type=int, default=5)
    parser.add_argument("--m", type=int, default=50)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = available_backends()
    print(f"stage-1 kernel benchmark: d={args.d} P={args.P} m={args.m} steps={args.steps}")
    rates = {}
    for name in sorted(backends):
        rates[name] = bench(name, args.d, args.P, args.m, args.steps, args.repeats)
        print(f"  {name:<8} {rates[name]:>12,.0f} steps/s")
    if {"cython", "python"} <= rates.keys():
        print(f"  speedup  {rates['cython'] / rates['python']:>12.1f}x")
    elif "cython" not in rates:
        print("  (compiled kernel not built; run `python setup.py build_ext --inplace`)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
