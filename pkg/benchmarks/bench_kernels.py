"""Time every hot kernel under the numpy fallback and the compiled extension.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from detsketch.kernels import available_backends
from detsketch.recover_l1 import build_l1_scheme
from detsketch.recover_linf import IncoherentMatrix
from detsketch.strict import RSMatrix


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads(rng):
    """Name -> callable taking a backend module, all on n = 4096 inputs."""
    n = 4096
    weak = build_l1_scheme(n, 4, 1.0, seed=1).layers[0]
    table, cols = weak._block_table(np.arange(n))
    C = IncoherentMatrix(n, 12, seed=1)
    R = RSMatrix(n, 200)
    idx = np.arange(n)
    coef = rng.standard_normal(n)
    v_weak = np.zeros(weak.m)
    weak.accumulate_columns(v_weak, idx, coef)
    reps, buckets = np.nonzero(np.ones((weak.d1, weak.B1), dtype=bool))
    rows = rng.integers(0, R.m, size=(2000, R.b))
    v_rs = rng.standard_normal(R.m)
    digits = R.digits(idx)
    g, h = weak.hash.g.table, weak.hash.h

    return {
        "accumulate": lambda k: k.accumulate(np.zeros(R.m), rows, np.ones(rows.size)),
        "gather_median": lambda k: k.gather_median(v_rs, rows),
        "two_layer_scatter": lambda k: k.two_layer_scatter(np.zeros(weak.m), g, h, table, cols, idx, coef, weak.B2),
        "two_layer_bucket_counts": lambda k: k.two_layer_bucket_counts(v_weak, h, weak.B2, 0.1, False),
        "two_layer_pair_bits": lambda k: k.two_layer_pair_bits(v_weak, h, weak.B2, reps, buckets, 0.5),
        "block_sign_scatter": lambda k: k.block_sign_scatter(
            np.zeros(C.m), C.offsets, C.signs, idx, coef, C.block, 1 / np.sqrt(C.p)
        ),
        "rs_scatter": lambda k: k.rs_scatter(np.zeros(R.m), digits, coef, R.q),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the table here")
    args = ap.parse_args(argv)

    backends = available_backends()
    loads = workloads(np.random.default_rng(0))
    results = {}
    names = sorted(backends)
    print(f"{'kernel':<26}" + "".join(f"{b:>12}" for b in names) + f"{'speedup':>10}")
    for name, fn in loads.items():
        row = {b: best_of(lambda: fn(backends[b]), args.repeat) for b in names}
        results[name] = row
        speed = row["python"] / row["cython"] if "cython" in row else float("nan")
        print(f"{name:<26}" + "".join(f"{row[b] * 1e3:>10.2f}ms" for b in names) + f"{speed:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
