"""Compare the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_backends.py

Covers the three hot paths: batch expression evaluation on residual
grids, sequential RK4 trajectories, and the characteristic re-tracing
pattern (many short RK4 runs).
"""

import time

import numpy as np

from integrikit import _backend
from integrikit.expr import compile_expr, compile_system, parse

GRID_EXPR = "sin(x*y) + exp(x/2)/(1 + y^2) - tanh(x - y)^3 + atan(x)*cos(y)"
SYSTEM = ("y", "-sin(x) - 0.1*y")


def time_fn(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_grid(n_points):
    prog = compile_expr(parse(GRID_EXPR), ("x", "y"))
    pts = np.random.default_rng(0).uniform(-2, 2, (n_points, 2)).astype(np.complex128)
    rows = {}
    if _backend.BACKEND == "numba":
        _backend.eval_points_numba(prog.code, prog.consts, pts[:4])  # warm up JIT
        rows["numba"] = time_fn(_backend.eval_points_numba, prog.code, prog.consts, pts)
    rows["numpy"] = time_fn(_backend.eval_points_numpy, prog.code, prog.consts, pts)
    return rows


def bench_rk4(nsteps):
    prog = compile_system(tuple(parse(c) for c in SYSTEM), ("x", "y"))
    x0 = np.array([1.0, 0.0], dtype=np.complex128)
    h = 2.0 / nsteps
    args = (prog.code, prog.starts, prog.ends, prog.consts, x0,
            0.0, h, h, 2.0, nsteps, 1e12)
    rows = {}
    if _backend.BACKEND == "numba":
        _backend.rk4_numba(*args[:9], 4, 1e12)  # warm up JIT
        rows["numba"] = time_fn(_backend.rk4_numba, *args)
    rows["numpy"] = time_fn(_backend.rk4_numpy, *args)
    return rows


def bench_retrace(n_traces, nsteps):
    prog = compile_system(tuple(parse(c) for c in SYSTEM), ("x", "y"))
    h = 0.5 / nsteps
    starts = np.random.default_rng(1).uniform(-1, 1, (n_traces, 2))

    def run(kernel):
        for p in starts:
            x0 = p.astype(np.complex128)
            kernel(prog.code, prog.starts, prog.ends, prog.consts, x0,
                   0.0, h, h, 0.5, nsteps, 1e12)

    rows = {}
    if _backend.BACKEND == "numba":
        run(_backend.rk4_numba)  # warm up
        rows["numba"] = time_fn(run, _backend.rk4_numba, repeat=2)
    rows["numpy"] = time_fn(run, _backend.rk4_numpy, repeat=2)
    return rows


def show(title, rows):
    print(f"\n{title}")
    base = rows.get("numpy")
    for name, secs in rows.items():
        speedup = "" if name == "numpy" else f"   ({base / secs:.1f}x vs numpy)"
        print(f"  {name:6s} {secs * 1e3:10.2f} ms{speedup}")


def main():
    print(f"active backend: {_backend.backend_name()}")
    if _backend.BACKEND != "numba":
        print("numba unavailable or disabled; timing the numpy path only")
    show("grid evaluation, 200k points", bench_grid(200_000))
    show("RK4 trajectory, 100k steps", bench_rk4(100_000))
    show("characteristic retraces, 500 x 200 steps", bench_retrace(500, 200))


if __name__ == "__main__":
    main()
