"""Benchmark the numba kernels against their pure-numpy fallbacks.

Each kernel is timed through both implementations on the same inputs, and the
outputs are compared.  With --engine the full van der Pol run is also timed in
two subprocesses, one per value of QPKAM_BACKEND.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--engine]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from qpkam import kernels
from qpkam.qp_field import monomial_basis
from qpkam.vdp import VdpConfig, reduce_to_center
from qpkam.verify import field_table


def best_of(fn, repeat):
    fn()  # warm-up (includes JIT compilation for the numba side)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    basis = monomial_basis(6)
    P = 9 * 256
    a = rng.normal(size=(basis.size, P)) + 1j * rng.normal(size=(basis.size, P))
    b = rng.normal(size=(basis.size, P)) + 1j * rng.normal(size=(basis.size, P))
    pairs = basis.pairs_for(np.ones(basis.size, bool), np.ones(basis.size, bool))
    w = 0.3 * (rng.normal(size=(3, P)) + 1j * rng.normal(size=(3, P)))
    yield ("poly_mul (D=6, 2304 points)",
           lambda: kernels.poly_mul_numba(a, b, pairs, basis.size),
           lambda: kernels.poly_mul_numpy(a, b, pairs, basis.size))
    yield ("poly_eval (D=6, 2304 points)",
           lambda: kernels.poly_eval_numba(a, basis.exps, w),
           lambda: kernels.poly_eval_numpy(a, basis.exps, w))
    omega = np.array([1.0, (np.sqrt(5) - 1) / 2])
    yield ("diophantine scan (K=200)",
           lambda: kernels.diophantine_numba(omega, 200, 3.0),
           lambda: kernels.diophantine_numpy(omega, 200, 3.0))
    spec = reduce_to_center(VdpConfig())
    table = field_table(spec, 0.75)
    phis = rng.uniform(0, 2 * np.pi, size=(2000, 2))
    vs = 1e-2 * rng.normal(size=(2000, 3))

    def many(f):
        return lambda: np.array([f(p, v, table) for p, v in zip(phis, vs)])
    yield ("field_eval (2000 RHS calls)", many(kernels.field_eval_numba), many(kernels.field_eval_numpy))

    m, n = 50, 2000
    tau = 2.0
    h = tau / m
    gm = np.array([0, 0], dtype=np.int64)
    gn = np.array([0, 0], dtype=np.int64)
    gk = np.array([[0.0, 0.0], [1.0, 0.0]])
    gc = np.array([1.0, 1.0], dtype=np.complex128)

    def dde(f):
        def go():
            xs = np.zeros(m + 1 + n)
            vs_ = np.zeros(m + 1 + n)
            xs[: m + 1] = 1e-3
            return f(xs, vs_, m, n, h, 0.75, 1.0, 1.0, 1e-6, omega, gm, gn, gk, gc)[0]
        return go
    yield ("dde_rk4 (2000 steps)", dde(kernels.dde_rk4_numba), dde(kernels.dde_rk4_python))


def engine_time(backend):
    code = ("import time; from qpkam.vdp import VdpConfig, reduce_to_center; from qpkam.kam_engine import run;"
            "t=time.perf_counter(); r=run(reduce_to_center(VdpConfig())); "
            "print(time.perf_counter()-t, r.status)")
    env = dict(os.environ, QPKAM_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    secs, status = out.stdout.split()
    return float(secs), status


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--engine", action="store_true")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numba [s]':>12s} {'numpy [s]':>12s} {'speedup':>8s} {'max diff':>10s}")
    for name, fast, slow in cases(rng):
        t_fast, y_fast = best_of(fast, args.repeat)
        t_slow, y_slow = best_of(slow, max(1, args.repeat // 2))
        if isinstance(y_fast, tuple):      # (ratio, k) from the Diophantine scan
            y_fast, y_slow = y_fast[0], y_slow[0]
        diff = np.max(np.abs(np.asarray(y_fast) - np.asarray(y_slow)))
        print(f"{name:34s} {t_fast:12.4e} {t_slow:12.4e} {t_slow / t_fast:8.1f} {diff:10.2e}")
    if args.engine:
        for backend in ("numba", "numpy"):
            secs, status = engine_time(backend)
            print(f"engine run, backend={backend:6s}: {secs:8.2f} s ({status})")


if __name__ == "__main__":
    main()
