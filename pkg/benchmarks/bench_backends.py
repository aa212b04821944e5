"""Timing comparison of the numba and numpy ambient kernels.

Runs the bolt-chart geometry batch at several sizes with each backend,
then times a full RK4 flow step on the perturbed-bolt initial data.
Numbers are medians over repetitions; the first numba call is excluded
(jit compilation).
"""

import argparse
import os
import time

import numpy as np


def median_time(fn, reps):
    ts = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t0)
    return sorted(ts)[len(ts) // 2]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--sizes", default="2048,8192,32768")
    args = ap.parse_args()

    from hkflow import ambient, backend, flow, scenarios, surface

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(0)

    print("=" * 66)
    print("bolt-chart geometry batch (median of %d reps)" % args.reps)
    print("=" * 66)
    print("%10s %14s %14s %9s" % ("nodes", "numpy [ms]", "numba [ms]",
                                  "speedup"))
    backends = ["numpy"]
    if backend.HAS_NUMBA:
        backends.append("numba")
    for n in sizes:
        coords = np.empty((n, 4))
        coords[:, 0] = 0.2 * rng.standard_normal(n)
        coords[:, 1] = 0.2 * rng.standard_normal(n)
        coords[:, 2] = rng.uniform(0.3, np.pi - 0.3, n)
        coords[:, 3] = rng.uniform(0.0, 2 * np.pi, n)
        row = {}
        for which in backends:
            backend.bolt_ambient(coords, 1.0, force=which)  # warm up
            row[which] = median_time(
                lambda: backend.bolt_ambient(coords, 1.0, force=which),
                args.reps)
        if "numba" in row:
            print("%10d %14.3f %14.3f %8.2fx"
                  % (n, 1e3 * row["numpy"], 1e3 * row["numba"],
                     row["numpy"] / row["numba"]))
        else:
            print("%10d %14.3f %14s" % (n, 1e3 * row["numpy"], "n/a"))

    print("=" * 66)
    print("full RK4 flow step, perturbed bolt section 64x32")
    print("=" * 66)
    grid = surface.build_grid("sphere", 64, 32)
    model, imm, _ = scenarios.make_eh_graph_perturbation(1.0, grid, "y20",
                                                         eps=0.05)
    for which in backends:
        os.environ["HKFLOW_BACKEND"] = which
        flow.flow_step(model, grid, imm, 1e-6)  # warm up
        t = median_time(lambda: flow.flow_step(model, grid, imm, 1e-6),
                        args.reps)
        print("%10s %12.2f ms/step" % (which, 1e3 * t))
    os.environ.pop("HKFLOW_BACKEND", None)

    # parity spot check while both backends are warm
    if backend.HAS_NUMBA:
        coords = np.empty((512, 4))
        coords[:, 0] = 0.3 * rng.standard_normal(512)
        coords[:, 1] = 0.3 * rng.standard_normal(512)
        coords[:, 2] = rng.uniform(0.3, np.pi - 0.3, 512)
        coords[:, 3] = rng.uniform(0.0, 2 * np.pi, 512)
        a = backend.bolt_ambient(coords, 1.0, force="numpy")
        b = backend.bolt_ambient(coords, 1.0, force="numba")
        gap = max(np.abs(x - y).max() for x, y in zip(a, b))
        print("backend parity: max |numpy - numba| = %.3e" % gap)


if __name__ == "__main__":
    main()
