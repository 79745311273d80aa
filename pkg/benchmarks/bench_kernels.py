"""Compare the numba kernels against their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Each kernel is run once to trigger compilation, then timed ``--repeat``
times on identical inputs; the best time is reported and the two outputs
are checked for agreement.
"""

import argparse
import time

import numpy as np

from udqkd import _kernels
from udqkd.simulation import SimConfig, frame_encode, simulate_session


def best_of(fn, repeat):
    fn()  # warm-up / JIT
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(scale):
    rng = np.random.default_rng(0)
    n = int(200_000 * scale)
    a = rng.normal(size=(n, 4, 4))
    gammas = np.einsum("nij,nkj->nik", a, a) + 4 * np.eye(4)
    x = rng.uniform(0, 100, int(2_000_000 * scale))

    cfg = SimConfig(n_pulses=int(20_000 * scale), seed=1)
    lead = int(1_000_000 * scale)  # marker sits deep in the trace
    trace = frame_encode(simulate_session(cfg), cfg, lead_in=lead)
    trace = trace + 0.05 * rng.standard_normal(trace.size)
    period, width = cfg.samples_per_period, cfg.samples_per_window
    starts = lead + 5 * period + period * np.arange(cfg.n_pulses, dtype=np.int64)

    return [
        (f"two_mode_spectra  n={n}", lambda u: _kernels.two_mode_spectra(gammas, u)[0]),
        (f"g_entropy_array   n={x.size}", lambda u: _kernels.g_entropy_array(x, u)),
        (f"find_marker       n={trace.size}",
         lambda u: np.array([_kernels.find_marker(trace, 5.0, period, width, 5, u)])),
        (f"window_means      n={starts.size}",
         lambda u: _kernels.window_means(trace, starts, width, u)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply problem sizes")
    args = ap.parse_args()

    if not _kernels.NUMBA_AVAILABLE:
        print("numba is not importable; only the numpy path can run")
    print(f"{'kernel':36s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}  agree")
    for name, fn in cases(args.scale):
        t_np = best_of(lambda: fn(False), args.repeat)
        if _kernels.NUMBA_AVAILABLE:
            t_nb = best_of(lambda: fn(True), args.repeat)
            agree = np.allclose(fn(True), fn(False), rtol=1e-12, atol=1e-12)
            print(f"{name:36s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} "
                  f"{t_np / t_nb:7.1f}x  {agree}")
        else:
            print(f"{name:36s} {t_np * 1e3:10.2f} {'-':>10s} {'-':>8s}  -")


if __name__ == "__main__":
    main()
