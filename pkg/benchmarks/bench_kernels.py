"""Wall-clock comparison of the numba and numpy kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--members 8192]

Each kernel is warmed up once (numba compiles on the first call, and the
compiled code is cached on disk), then timed as the best of ``--repeat`` runs.
"""

import argparse
import time

import numpy as np

from nsfp import kernels
from nsfp.nonlinearity import workspace
from nsfp.spectral import build_mode_set


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(members):
    rng = np.random.default_rng(0)
    ids = np.arange(members, dtype=np.uint64)
    yield "normals (64 coords)", lambda k: (lambda: k(20240611, 17, ids, 64)), \
        kernels.normals_numpy, kernels.normals_numba
    for N in (2, 3):
        ws = workspace(build_mode_set(N))
        M = 2 * ws.mode_set.n_wavevectors
        cu = rng.standard_normal((members, M)) + 1j * rng.standard_normal((members, M))
        cv = rng.standard_normal((members, M)) + 1j * rng.standard_normal((members, M))
        args = (cu, cv, ws.tm, ws.tn, ws.tk, ws.coef, ws.starts, ws.kgroups)
        yield f"triad_sum N={N} ({ws.n_triads} triads)", lambda k, a=args: (lambda: k(*a)), \
            kernels.triad_sum_numpy, kernels.triad_sum_numba
    f = rng.standard_normal((256, 256))
    w = rng.standard_normal(41)
    for axis in (0, 1):
        yield f"correlate_axis 256x256 w=41 axis={axis}", lambda k, a=axis: (lambda: k(f, w, a)), \
            kernels.correlate_axis_numpy, kernels.correlate_axis_numba


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--members", type=int, default=8192)
    args = ap.parse_args(argv)
    print(f"{'kernel':44s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, make, k_np, k_nb in cases(args.members):
        t_np = best_of(make(k_np), args.repeat)
        t_nb = best_of(make(k_nb), args.repeat)
        print(f"{name:44s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
