#!/usr/bin/env python3
"""Hot-kernel timing: compiled backend vs the pure-python fallback.

The backend is fixed at import time by JACOBI_SPECTRA_NO_NUMBA, so the
comparison runs each lane in its own subprocess and the parent collates
the table.  Sizes are deliberately small enough that the python lane
finishes in seconds; the ratio, not the absolute number, is the point.

    python3 benchmarks/bench_kernels.py [--repeats 3]
"""

import argparse
import json
import os
import subprocess
import sys
import time


def _tasks():
    import numpy as np

    import jacobi_spectra as js

    dist = js.DiscreteAtoms(
        (
            js.CoefficientTriple(1.0, 0.5 + 0.3j, 1.0),
            js.CoefficientTriple(1.0, -0.5 - 0.3j, 1.0),
        ),
        (0.5, 0.5),
    )
    z = 0.4 + 0.3j
    seq48 = js.sample_sequence(dist, 48, seed=3)
    seq64 = js.sample_sequence(dist, 64, seed=3)
    j48 = js.build_jacobi(seq48)
    j64 = js.build_jacobi(seq64)
    seq2k = js.sample_sequence(dist, 2000, seed=3)
    return {
        "transfer product, 20k steps": lambda: js.lyapunov_via_recurrence(
            dist, z, 20_000, 1, seed=0
        ),
        "orthogonal pair, 10k steps": lambda: js.lyapunov_pair(
            dist, z, 10_000, 1, seed=0
        ),
        "solution recurrence, n=2000": lambda: js.char_poly_eval(seq2k, z),
        "eigenvalues, n=48": lambda: js.eigenvalues(j48),
        "sweep SVD, n=48": lambda: js.singular_values(j48, method="sweep"),
        "gram SVD, n=64": lambda: js.singular_values(j64, method="gram"),
    }


def worker(repeats: int) -> None:
    import jacobi_spectra as js

    results = {}
    for name, fn in _tasks().items():
        fn()  # warm: JIT compile / cache load outside the timed region
        times = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        results[name] = min(times)
    print(json.dumps({"backend": js.BACKEND, "results": results}))


def _run_lane(no_numba: bool, repeats: int) -> dict:
    env = dict(os.environ)
    env["JACOBI_SPECTRA_NO_NUMBA"] = "1" if no_numba else "0"
    out = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--worker",
         "--repeats", str(repeats)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--worker", action="store_true")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if args.worker:
        worker(args.repeats)
        return 0

    fast = _run_lane(no_numba=False, repeats=args.repeats)
    slow = _run_lane(no_numba=True, repeats=args.repeats)
    if fast["backend"] != "numba":
        print("warning: compiled lane fell back to python; speedups are ~1",
              file=sys.stderr)

    width = max(len(k) for k in fast["results"])
    print(f"{'task':<{width}}  {fast['backend']:>10}  {slow['backend']:>10}  "
          f"{'speedup':>8}")
    for name, t_fast in fast["results"].items():
        t_slow = slow["results"][name]
        print(f"{name:<{width}}  {t_fast:>9.4f}s  {t_slow:>9.4f}s  "
              f"{t_slow / t_fast:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
