"""Compare the compiled tape kernel with the pure-Python interpreter.

Two measurements:

* kernel: evaluations per second of the order-4 jet tape of each built-in
  model, both kernels on identical inputs (outputs are checked bit for bit);
* workload: wall time of a small identity suite in a fresh interpreter, once
  with the default backend and once with LORENTZ_FINSLER_PURE_PYTHON=1.

Usage: python3 benchmarks/bench_tape.py [--evals N] [--no-workload]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from lorentz_finsler import core, models
from lorentz_finsler.dsl import tape as tape_mod
from lorentz_finsler.dsl._tape_py import run_tape as py_kernel

WORKLOAD = (
    "from lorentz_finsler import models, suites, dsl;"
    "import time; t = time.perf_counter();"
    "suites.identity_suite(models.warped(), samples=40);"
    "suites.identity_suite(models.randers(), samples=40);"
    "print(dsl.BACKEND, time.perf_counter() - t)"
)


def _inputs(model, count, rng):
    rows = []
    while len(rows) < count:
        x = rng.uniform(-0.5, 0.5, model.n)
        for v in core.sample_future_timelike(model, x, rng, 1):
            rows.append(np.concatenate([x, v]))
    return rows


def _rate(t, inputs, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        for inp in inputs:
            t.run(inp)
        best = min(best, time.perf_counter() - start)
    return len(inputs) / best


def bench_kernels(evals: int):
    rng = np.random.default_rng(0)
    print(f"backend in use: {tape_mod.BACKEND}")
    print(f"{'model':22s} {'nodes':>7s} {'outputs':>8s} {'compiled/s':>12s} {'python/s':>10s} {'speedup':>8s}")
    for model in (models.minkowski2(), models.warped(), models.randers(), models.finsler_perturbed(), models.minkowski4()):
        fast = model.tables().level(4)[0]
        roots = [fast.nodes[i] for i in fast.out_slots]
        slow = tape_mod.CompiledTape(roots, fast.variables, kernel=py_kernel)
        inputs = _inputs(model, evals, rng)
        for inp in inputs[:20]:
            assert fast.run(inp).tobytes() == slow.run(inp).tobytes(), "kernels disagree"
        rf = _rate(fast, inputs)
        rs = _rate(slow, inputs[: max(evals // 10, 10)])
        print(f"{model.name:22s} {len(fast):7d} {fast.n_out:8d} {rf:12.0f} {rs:10.0f} {rf / rs:8.1f}")


def bench_workload():
    for pure in ("0", "1"):
        env = dict(os.environ, LORENTZ_FINSLER_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", WORKLOAD], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"identity workload, {backend:8s} backend: {float(secs):7.2f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--evals", type=int, default=2000)
    ap.add_argument("--no-workload", action="store_true")
    args = ap.parse_args(argv)
    bench_kernels(args.evals)
    if not args.no_workload:
        bench_workload()


if __name__ == "__main__":
    main()
