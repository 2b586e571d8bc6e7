"""Benchmark the jitted Monte Carlo kernels against the numpy fallback.

Times the three hot paths (gaussian dataset means, binary dataset counts,
batched binary MLE) on both backends and checks they agree.  Run:

    python3 benchmarks/bench_kernels.py [--reps N]

Setting ANNOTATION_INCENTIVES_NO_NUMBA=1 changes which backend the package
itself uses, but this script always loads both explicitly.
"""

import argparse
import time

import numpy as np

from annotation_incentives import kernels

KEY = 123456789


def _time(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(reps: int) -> None:
    numpy_impl = kernels.get_impl("numpy")
    try:
        numba_impl = kernels.get_impl("numba")
    except RuntimeError:
        print("numba backend unavailable; nothing to compare")
        return

    ctx = np.array([1.0])
    wts = np.array([1.0])
    cases = [
        ("gaussian means (n=100)",
         lambda impl: impl.gaussian_mean_noise(100, reps, KEY)),
        ("binary counts (n=256)",
         lambda impl: impl.binary_sample_stats(0, ctx, wts, 0.6, 256, reps,
                                               KEY)[1]),
    ]
    cnt, suc = numpy_impl.binary_sample_stats(0, ctx, wts, 0.6, 256, reps, KEY)
    cases.append(
        ("binary MLE batch",
         lambda impl: impl.binary_mle_batch(0, ctx, 0.0, 1.0, cnt, suc, 1e-10)))

    # warm the JIT outside the timed region
    for _, fn in cases:
        fn(numba_impl)

    print(f"{'kernel':<24} {'numpy':>10} {'numba':>10} {'speedup':>9} {'agree':>7}")
    for name, fn in cases:
        t_np, out_np = _time(lambda: fn(numpy_impl))
        t_nb, out_nb = _time(lambda: fn(numba_impl))
        agree = np.allclose(np.asarray(out_np, dtype=np.float64),
                            np.asarray(out_nb, dtype=np.float64),
                            atol=1e-12, rtol=0)
        print(f"{name:<24} {t_np * 1e3:>8.1f}ms {t_nb * 1e3:>8.1f}ms "
              f"{t_np / t_nb:>8.1f}x {str(agree):>7}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--reps", type=int, default=20000,
                        help="Monte Carlo replications per kernel")
    bench(parser.parse_args().reps)
