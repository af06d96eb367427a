"""Benchmark the compiled log-joint kernels against the numpy fallback.

Times raw kernel evaluations at a few matrix sizes, then one short
variational fit with each backend.  Run from the repository root:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from mixcomp import vi
from mixcomp._core import available_backends, get_kernels
from mixcomp.evaluate import SyntheticSpec, generate_synthetic
from mixcomp.ingest import preprocess
from mixcomp.smcm import SmcmConfig, make_log_joint, parameter_space


def _timeit(fn, min_seconds=0.3):
    fn()
    n = 1
    while True:
        start = time.perf_counter()
        for _ in range(n):
            fn()
        elapsed = time.perf_counter() - start
        if elapsed >= min_seconds:
            return elapsed / n
        n = max(n * 2, int(n * min_seconds / max(elapsed, 1e-9)))


def bench_raw_kernels(backends):
    print("raw kernel evaluations (seconds per call)")
    header = f"{'case':<34}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    rng = np.random.default_rng(0)
    for I, J, K, occupancy in ((20, 20, 4, 0.5), (60, 60, 4, 0.3), (238, 250, 4, 0.071)):
        n_obs = int(I * J * occupancy)
        rows = rng.integers(0, I, n_obs).astype(np.intp)
        cols = rng.integers(0, J, n_obs).astype(np.intp)
        vals = rng.normal(size=n_obs)
        theta_s = rng.normal(size=(I + J) * K)
        R, S = max(I // 10, 1), max(J // 10, 1)
        sl = (np.arange(I) * R // I).astype(np.intp)
        vl = (np.arange(J) * S // J).astype(np.intp)
        theta_h = rng.normal(size=(R + S + I + J) * K + R + S)
        for name, call in (
            ("flat", lambda k: k.smcm_logjoint_grad(
                theta_s, rows, cols, vals, I, J, K, 0.8, 0.15)),
            ("hierarchical", lambda k: k.hmcm_logjoint_grad(
                theta_h, rows, cols, vals, sl, vl, R, S, I, J, K, 1.0, 0.15, 1.0)),
        ):
            times = [_timeit(lambda: call(get_kernels(b))) for b in backends]
            row = f"{name + f' {I}x{J} ({n_obs} obs)':<34}"
            row += "".join(f"{t:>12.2e}" for t in times)
            if len(times) == 2:
                row += f"{times[1] / times[0]:>9.1f}x"
            print(row)


def bench_fit(backends):
    print()
    print("short flat-model fit, 20x20 synthetic corpus, 500 iterations")
    data = generate_synthetic(SyntheticSpec(seed=3))
    matrix, _ = preprocess(data.records)
    cfg = SmcmConfig(fit=vi.FitConfig(seed=0, max_iters=500))
    space = parameter_space(matrix, cfg.k)
    for backend in backends:
        log_joint = make_log_joint(matrix, cfg, kernels=get_kernels(backend))
        start = time.perf_counter()
        vi.fit(log_joint, space, cfg.fit)
        print(f"  {backend:>8}: {time.perf_counter() - start:8.3f} s")


def main():
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    print()
    bench_raw_kernels(backends)
    bench_fit(backends)


if __name__ == "__main__":
    main()
