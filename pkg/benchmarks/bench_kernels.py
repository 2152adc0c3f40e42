"""Time each hot kernel on its numba and pure-numpy paths.

    python benchmarks/bench_kernels.py [--repeat 5]

Both paths are imported directly, so the BIOINSURANCE_PURE_NUMPY flag does
not matter here. Numba compilation happens in an untimed warm-up call.
"""

import argparse
import time

import numpy as np

from bioinsurance import _kernels
from bioinsurance.montecarlo import SamplerConfig, reversal_uniforms


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--trials", type=int, default=20_000)
    parser.add_argument("--horizon", type=int, default=100)
    args = parser.parse_args()

    u = reversal_uniforms(args.horizon, args.trials, SamplerConfig(seed=1))
    v = np.linspace(0.0, 50.0, 1_000_001)
    grid_args = (10.0, 0.3, 2.0, 0.2, 0.0, 0.05, 1.0, 0.2, True)

    cases = {
        f"buffer_pool {args.trials}x{args.horizon}": (
            lambda: _kernels.buffer_pool_numpy(u, 100.0, 0.2, 0.05, 0.3),
            lambda: _kernels.buffer_pool_numba(u, 100.0, 0.2, 0.05, 0.3),
        ),
        "ce_grid n=1e6 insured": (
            lambda: _kernels.ce_grid_numpy(v, *grid_args),
            lambda: _kernels.ce_grid_numba(v, *grid_args),
        ),
    }
    print(f"{'kernel':32s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, (np_fn, nb_fn) in cases.items():
        t_np = best_of(np_fn, args.repeat)
        t_nb = best_of(nb_fn, args.repeat) if _kernels.NUMBA_AVAILABLE else float("nan")
        print(f"{name:32s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
