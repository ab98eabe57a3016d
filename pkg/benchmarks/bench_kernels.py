"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each row reports the best wall time per backend and checks that both
backends agree on the output.
"""

import argparse
import time

import numpy as np

from invstats import _accel
from invstats.fpt import fpt_samples
from invstats.models import reference_params, simulate
from invstats.wavelet import highpass_residuals


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(name, fn, same, repeat):
    row = {}
    outs = {}
    for flag, label in ((True, "numba"), (False, "numpy")):
        _accel.USE_NUMBA = flag
        fn()  # warm up / compile
        row[label], outs[label] = best_of(fn, repeat)
    agree = same(outs["numba"], outs["numpy"])
    print(f"{name:<34} numba {row['numba']:8.3f}s   numpy {row['numpy']:8.3f}s   "
          f"x{row['numpy'] / row['numba']:5.1f}   agree={agree}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--n", type=int, default=1_000_000, help="series length")
    args = ap.parse_args()

    x = np.cumsum(np.random.default_rng(0).standard_normal(args.n))
    run(f"first passage scan (N={args.n})", lambda: fpt_samples(x, 5.0).per_start,
        np.array_equal, args.repeat)
    run(f"residuals R6/R8/R10 LA8 (N={args.n // 2})",
        lambda: highpass_residuals(x[: args.n // 2], "la8", [6, 8, 10]),
        lambda a, b: all(np.allclose(a[j], b[j], atol=1e-9) for j in a), args.repeat)
    p = reference_params(30)
    run(f"simulate 30 stocks ({args.n // 2} days)",
        lambda: simulate(p, args.n // 2, seed=1, keep_stocks=False).index,
        # log levels accumulate rounding differently over long runs
        lambda a, b: np.max(np.abs(np.log(a) - np.log(b))) < 1e-10, args.repeat)


if __name__ == "__main__":
    main()
