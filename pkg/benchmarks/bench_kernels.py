#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the three hot paths (coupled shooting integration, backward Riccati
sweep, linear-ODE propagation with quadrature) on the shipped game setups and
reports speedups plus the worst numerical deviation between backends.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from idgames._kernels import load


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_dev(a, b):
    dev = 0.0
    for x, y in zip(a, b):
        if isinstance(x, np.ndarray):
            dev = max(dev, float(np.max(np.abs(x - y))))
        elif isinstance(x, float):
            dev = max(dev, abs(x - y))
    return dev


def workloads():
    rng = np.random.default_rng(0)

    theta = np.array([[1.0, 4.0, 0.0, 0.0, 0.2, 0.0, 100.0, 100.0],
                      [1.0, 1.0, 0.0, 0.0, 0.2, 0.0, 100.0, 100.0]])
    x0 = np.array([-1.0, -0.5, 1.0, 0.0])
    xT = np.array([1.0, 1.0, -1.0, 0.0])
    psi0 = np.array([400.0, 300.0, 0.0, 0.0, 0.0, 0.0, -400.0, 0.0])
    yield ("shoot_collision (500 steps)", "shoot_collision",
           (theta, x0, xT, psi0, 0.01, 500, 1e-6))

    n = 4
    A = np.ascontiguousarray(rng.uniform(-1, 1, (n, n)))
    B = np.ascontiguousarray(rng.uniform(-1, 1, (n, 2)))
    moff = np.array([0, 2], dtype=np.int64)
    wu = np.array([1.0, 2.0])
    S = np.ascontiguousarray(rng.uniform(0.1, 1.0, (1, n)))
    yield ("shoot_lti n=4 (600 steps)", "shoot_lti",
           (A, B, moff, wu, S, rng.uniform(-1, 1, n), rng.uniform(-1, 1, n),
            0.01, 600))

    steps, nn, mi, M = 500, 4, 2, 8
    K2 = 2 * steps + 1
    NT = np.ascontiguousarray(rng.uniform(-1, 1, (K2, nn, M + nn)))
    DT = np.ascontiguousarray(rng.uniform(-1, 1, (K2, mi, M + nn)))
    yield ("riccati_sweep 12x12 (500 steps)", "riccati_sweep",
           (NT, DT, 0.01, steps, M))

    d = 8
    Mt = np.ascontiguousarray(rng.uniform(-1, 1, (K2, d, d)) * 0.2)
    rt = np.ascontiguousarray(rng.uniform(-1, 1, (K2, d)))
    Qt = np.ascontiguousarray(rng.uniform(-1, 1, (K2, d, d)) * 0.1)
    ql = np.ascontiguousarray(rng.uniform(-1, 1, (K2, d)))
    qc = np.ascontiguousarray(rng.uniform(-1, 1, K2))
    yield ("linear_ode_quad d=8 (500 steps)", "linear_ode_quad",
           (Mt, rt, Qt, ql, qc, rng.uniform(-1, 1, d), 0.01, steps))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    backends = {}
    for name in ("python", "compiled"):
        try:
            backends[name] = load(name)
        except ImportError:
            print(f"backend {name!r} unavailable, skipping")
    if len(backends) < 2:
        return

    header = f"{'kernel':36s} {'python':>10s} {'compiled':>10s} {'speedup':>8s} {'max dev':>10s}"
    print(header)
    print("-" * len(header))
    for label, fn_name, fn_args in workloads():
        t_py, out_py = timeit(lambda: getattr(backends["python"], fn_name)(*fn_args),
                              args.repeats)
        t_c, out_c = timeit(lambda: getattr(backends["compiled"], fn_name)(*fn_args),
                            args.repeats)
        dev = max_dev(out_py, out_c)
        print(f"{label:36s} {t_py*1e3:9.2f}ms {t_c*1e3:9.2f}ms {t_py/t_c:7.1f}x {dev:10.2e}")


if __name__ == "__main__":
    main()
