"""Timing comparison of the two integration kernels.

Runs the same delayed closed-loop advance on the numba and numpy backends
over a grid of state dimensions and reports steps/second, the speedup, and
the worst element-wise deviation between the two state trajectories.  The
numba timing excludes the first (compiling) call.

Usage::

    python benchmarks/bench_backends.py [--steps N] [--repeats R] [--dims 1,4,8]
"""

import argparse
import time

import numpy as np

from ergdelay._backend import get_advance


def make_workload(n, steps, seed):
    """Buffers and matrices for one advance call (delay on a fractional grid)."""
    rng = np.random.default_rng(seed)
    dt = 0.001
    tau = 0.8 + dt / 3.0  # deliberately off-grid: exercises interpolation
    hist = int(np.ceil(2.0 * tau / dt))
    G = rng.normal(size=(n, n))
    A = G - (np.linalg.eigvals(G).real.max() + 1.0) * np.eye(n)
    K = rng.normal(0.0, 0.3 / n, size=(1, n))
    B = rng.normal(size=(n, 1))
    xbuf = np.zeros((hist + 1 + steps, n))
    vbuf = np.zeros((hist + 1 + steps, 1))
    times = dt * np.arange(-hist, 1)
    xbuf[: hist + 1] = rng.normal(0.0, 1.0, (hist + 1, n))
    vbuf[: hist + 1] = np.sin(times)[:, None]
    args = (
        hist + 1, steps, dt, tau / dt,
        np.ascontiguousarray(A),
        np.ascontiguousarray(B @ K),
        np.ascontiguousarray(B * 0.7),
        np.array([0.4]),
    )
    return xbuf, vbuf, args


def run_one(backend, xbuf, vbuf, args, repeats):
    adv = get_advance(backend)
    best = np.inf
    out = None
    for _ in range(repeats):
        xs, vs = xbuf.copy(), vbuf.copy()
        t0 = time.perf_counter()
        adv(xs, vs, *args)
        best = min(best, time.perf_counter() - t0)
        out = xs
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000,
                    help="grid steps per advance call (default 200000)")
    ap.add_argument("--repeats", type=int, default=5,
                    help="timed repetitions, best one counts (default 5)")
    ap.add_argument("--dims", default="1,2,4,8",
                    help="comma separated state dimensions")
    args = ap.parse_args()

    dims = [int(tok) for tok in args.dims.split(",") if tok.strip()]
    print(f"{args.steps} steps per call, best of {args.repeats}")
    print(f"{'n':>3} {'numba':>12} {'numpy':>12} {'speedup':>9} {'max |diff|':>12}")
    for n in dims:
        xbuf, vbuf, call = make_workload(n, args.steps, seed=n)
        # warm-up call so the jit compile is not timed
        run_one("numba", xbuf, vbuf, call, 1)
        t_nb, x_nb = run_one("numba", xbuf, vbuf, call, args.repeats)
        t_np, x_np = run_one("numpy", xbuf, vbuf, call, args.repeats)
        dev = float(np.abs(x_nb - x_np).max())
        print(
            f"{n:>3} {args.steps / t_nb:>10.3g}/s {args.steps / t_np:>10.3g}/s "
            f"{t_np / t_nb:>8.1f}x {dev:>12.3e}"
        )


if __name__ == "__main__":
    main()
