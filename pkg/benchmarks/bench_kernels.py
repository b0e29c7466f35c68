"""Benchmark the compiled kernels against the pure-Python reference.

Times the three hot paths on identical inputs with both backends and
prints the speedup.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from qubursts import sim
from qubursts.detect import make_template
from qubursts.kernels import _reference

try:
    from qubursts.kernels import _accel
except ImportError:
    _accel = None


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_qp_advance(backend, n_steps=200_000):
    def run():
        x = 10.0
        for _ in range(n_steps):
            x = backend.qp_advance(x, 1e-5, 500.0, 1600.0, 1.6e-3)
        return x

    return _time(run), n_steps


def bench_score_windows(backend, n_cycles=2_000_000):
    rng = np.random.default_rng(0)
    n = rng.binomial(1, 0.02, n_cycles).astype(np.uint8)
    for loc in range(5_000, n_cycles - 5_000, 10_000):
        n[loc : loc + 30] = 5
    template = make_template(8.0, 16, 40)
    starts = np.arange(4_990, n_cycles - 5_000, 10_000, dtype=np.int64)
    stops = starts + 60

    def run():
        return backend.score_windows(n, template.values, template.pre_len, starts, stops)

    return _time(run), len(starts)


def bench_simulate(backend, duration_s=5.0):
    scenario = sim.s5_scenario(gamma0=0.5)
    saved = sim.kernels
    sim.kernels = backend
    try:
        elapsed = _time(lambda: sim.simulate(scenario, duration_s, seed=1), repeats=1)
    finally:
        sim.kernels = saved
    qubit_cycles = int(duration_s / 30e-6) * 5
    return elapsed, qubit_cycles


def main():
    if _accel is None:
        print("compiled backend unavailable; nothing to compare")
        return
    rows = []
    for name, fn, unit in (
        ("qp_advance", bench_qp_advance, "steps"),
        ("score_windows", bench_score_windows, "windows"),
        ("simulate", bench_simulate, "qubit-cycles"),
    ):
        t_c, work = fn(_accel)
        t_p, _ = fn(_reference)
        rows.append((name, work, unit, t_c, t_p, t_p / t_c))
    print(f"{'kernel':<15}{'work':>22}  {'cython':>9}  {'python':>9}  {'speedup':>8}")
    for name, work, unit, t_c, t_p, speedup in rows:
        print(
            f"{name:<15}{f'{work} {unit}':>22}  {t_c:>8.3f}s  {t_p:>8.3f}s  {speedup:>7.1f}x"
        )


if __name__ == "__main__":
    main()
