"""Time the hot kernels under both backends.

Backend choice happens at import, so each backend runs in its own
subprocess with HARDIVOX_BACKEND set, and the parent collates a table.
JIT compile time is excluded by a warmup call; it is reported separately
so the one-shot cost is visible too.

Usage: python benchmarks/compare_backends.py [--reps 7]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

KERNELS = ("conv_planes", "rbf_kernel", "smo_solve_cached", "decision_values")


def _workloads(rng):
    planes = rng.normal(size=(45, 64, 64))
    kernels = rng.uniform(-2.0, 2.0, size=(45, 5, 5))

    X = rng.normal(size=(2048, 45))
    gamma = 1.0 / 45.0

    m = 1500
    half = m // 2
    pts = np.vstack([rng.normal(0.0, 1.0, size=(half, 45)),
                     rng.normal(0.6, 1.0, size=(m - half, 45))])
    y = np.where(np.arange(m) < half, 1.0, -1.0)

    sv = rng.normal(size=(800, 45))
    coef = rng.normal(size=800)
    test = rng.normal(size=(12288, 45))

    return {
        "conv_planes": lambda b: b.conv_planes(planes, kernels),
        "rbf_kernel": lambda b: b.rbf_kernel(X, X, gamma),
        "smo_solve_cached": lambda b: b.smo_solve_cached(
            b.rbf_kernel(pts, pts, gamma), y, 1.0, 1e-3, 100000),
        "decision_values": lambda b: b.decision_values(
            test, sv, coef, 0.1, gamma),
    }


def run_worker(reps):
    from hardivox import backend

    rng = np.random.default_rng(8)
    work = _workloads(rng)
    out = {"backend": backend.active_backend(), "kernels": {}}
    for name in KERNELS:
        fn = work[name]
        t0 = time.perf_counter()
        fn(backend)  # warmup; includes JIT compile on the numba path
        warm = time.perf_counter() - t0
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            fn(backend)
            times.append(time.perf_counter() - t0)
        out["kernels"][name] = {"best": min(times), "warmup": warm}
    json.dump(out, sys.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=7)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        run_worker(args.reps)
        return

    results = {}
    for choice in ("numpy", "numba"):
        env = dict(os.environ, HARDIVOX_BACKEND=choice)
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__),
             "--worker", "--reps", str(args.reps)],
            capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            print(f"{choice}: unavailable ({proc.stderr.strip().splitlines()[-1]})")
            continue
        results[choice] = json.loads(proc.stdout)

    if "numpy" not in results:
        sys.exit("numpy backend failed; nothing to compare")
    have_numba = "numba" in results

    hdr = f"{'kernel':<18} {'numpy':>10}"
    if have_numba:
        hdr += f" {'numba':>10} {'speedup':>8} {'jit+run':>9}"
    print(hdr)
    for name in KERNELS:
        np_t = results["numpy"]["kernels"][name]["best"]
        line = f"{name:<18} {np_t * 1e3:>8.2f}ms"
        if have_numba:
            nb = results["numba"]["kernels"][name]
            line += (f" {nb['best'] * 1e3:>8.2f}ms {np_t / nb['best']:>7.1f}x"
                     f" {nb['warmup']:>8.2f}s")
        print(line)


if __name__ == "__main__":
    main()
