"""Compare the numba and pure-numpy backends.

Each backend runs in its own interpreter because the choice is fixed at
import time by the INDIFLOW_DISABLE_NUMBA flag. Reports the median call time
of the hot kernels and the median per-tick controller time of both methods.

    python3 benchmarks/bench_kernels.py [--reps N] [--csv out.csv]
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from indiflow import backend_name, kernels, sim

reps = int(sys.argv[1])

def timed(fn, *args, n=2000):
    fn(*args)  # compile / warm up
    out = np.empty(n)
    for i in range(n):
        t0 = time.perf_counter_ns()
        fn(*args)
        out[i] = time.perf_counter_ns() - t0
    return float(np.median(out)) * 1e-9

rng = np.random.default_rng(0)
theta = rng.normal(size=(3, 3)); P = np.tile(np.eye(3) * 1e3, (3, 1, 1))
phi = np.ascontiguousarray(np.broadcast_to(rng.normal(size=3), (3, 3)))
resp = rng.normal(size=3)
G = kernels.analytic_G(3.0, 0.05, -0.02, 11.8, 1.2, 1.0, 1.0, 1.0)
pts = rng.uniform(-0.5, 0.5, (40, 2)); pts2 = pts * 1.01
i, j = np.triu_indices(40, 1); pairs = np.column_stack([i, j])[:200].astype(np.int64)
pos = np.zeros(3); vel = np.zeros(3); act = np.array([0.0, 0.0, 11.772]); cmd = act.copy()
lim = np.array([0.35, 0.35, 23.544]); drag = np.zeros(3)

res = {"backend": backend_name()}
res["rls_update"] = timed(kernels.rls_update, theta.copy(), P.copy(), phi, resp, 0.95, 1e-6, 3e4)
res["invert"] = timed(kernels.invert, G, 1e8)
res["analytic_G"] = timed(kernels.analytic_G, 3.0, 0.05, -0.02, 11.8, 1.2, 1.0, 1.0, 1.0)
res["pair_divergence"] = timed(kernels.pair_divergence, pts, pts2, pairs, 0.02, 1e-9)
res["advance_10_substeps"] = timed(kernels.advance, pos, vel, act, cmd, 1e-3, 10, 1.2, 9.81,
                                   drag, 0.05, 0.02, lim, n=500)
cmp = sim.compare_methods(sim.preset("sim-moving-platform-Ginv"), repetitions=reps)
res["tick_conventional_g"] = cmp["metrics"][0].wall_median_s
res["tick_direct_ginv"] = cmp["metrics"][1].wall_median_s
t0 = time.perf_counter(); sim.run_scenario(sim.preset("sim-moving-platform-Ginv"))
res["scenario_wall_s"] = time.perf_counter() - t0
print(json.dumps(res))
"""


def run_backend(disable_numba, reps):
    env = dict(os.environ)
    env.pop("INDIFLOW_DISABLE_NUMBA", None)
    if disable_numba:
        env["INDIFLOW_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, str(reps)], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=5, help="compare_methods repetitions")
    ap.add_argument("--csv", help="also write the table as CSV")
    args = ap.parse_args(argv)

    results = [run_backend(False, args.reps), run_backend(True, args.reps)]
    keys = [k for k in results[0] if k != "backend"]
    print(f"{'measure':<24}{'numba':>14}{'numpy':>14}{'speedup':>10}")
    for k in keys:
        a, b = results[0][k], results[1][k]
        scale, unit = (1.0, " s") if k.endswith("_s") else (1e6, "us")
        print(f"{k:<24}{a * scale:>12.2f}{unit}{b * scale:>12.2f}{unit}{b / a:>10.2f}")
    for r in results:
        ratio = r["tick_direct_ginv"] / r["tick_conventional_g"]
        print(f"{r['backend']}: direct/conventional per-tick ratio {ratio:.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["measure", "numba_s", "numpy_s"])
            for k in keys:
                w.writerow([k, results[0][k], results[1][k]])


if __name__ == "__main__":
    main()
