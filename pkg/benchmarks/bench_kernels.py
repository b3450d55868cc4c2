"""Compare the numba and pure-numpy variants of the hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Each kernel runs once untimed (numba compiles or loads its cache), then
``--repeat`` timed runs; the best time is reported with the speed-up and the
largest difference between the two outputs.
"""

import argparse
import time

import numpy as np

from mnvchan import _accel, kernels


def best_of(fn, args, repeat):
    fn(*args)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(scale, gen):
    n_t = int(2000 * scale)
    n_p = 60
    gains = gen.standard_normal((n_t, n_p)) + 1j * gen.standard_normal((n_t, n_p))
    delays = gen.uniform(0, 2e-6, (n_t, n_p))
    yield "cfr_sum", (gains, delays, 5.825e9, 250e3, 601)

    n_proc, n_steps = 400, int(3000 * scale)
    innov = gen.standard_normal((n_proc, n_steps))
    rho = np.full((n_proc, n_steps), 0.98)
    yield "ar1_filter", (innov, rho)

    n_pk = int(200 * scale)
    llr = gen.standard_normal((n_pk, 2 * 864))
    yield "viterbi_decode", (llr,)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies the problem sizes")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        print("numba unavailable or disabled; nothing to compare")
        return 1
    gen = np.random.default_rng(args.seed)
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}{'max diff':>12}")
    for name, inputs in cases(args.scale, gen):
        t_np, out_np = best_of(getattr(kernels, f"{name}_numpy"), inputs, args.repeat)
        t_nb, out_nb = best_of(getattr(kernels, f"{name}_numba"), inputs, args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_np, dtype=complex) - np.asarray(out_nb, dtype=complex))))
        print(f"{name:<16}{1e3 * t_np:>12.1f}{1e3 * t_nb:>12.1f}{t_np / t_nb:>9.1f}x{diff:>12.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
