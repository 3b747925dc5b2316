"""Compare the compiled and pure-Python point-set kernels.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Every kernel is run on identical inputs under both backends; outputs are
checked for equality before timings are reported.
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from finemanip import kernels


def cases(rng: np.random.Generator):
    cloud = rng.random((1024, 3))
    fps1 = kernels.farthest_point_sample(cloud, 512)
    centers = cloud[fps1]
    a = rng.integers(0, 20, 40)
    b = rng.integers(0, 20, 40)
    return {
        "farthest_point_sample n=1024 m=512": lambda impl: kernels.farthest_point_sample(cloud, 512, impl=impl),
        "ball_query n=1024 m=512 k=16": lambda impl: kernels.ball_query(cloud, centers, 0.08, 16, impl=impl),
        "three_nn n=1024 m=512": lambda impl: kernels.three_nn(cloud, centers, impl=impl),
        "lcs_length 40x40": lambda impl: kernels.lcs_length(a, b, impl=impl),
    }


def _same(x, y) -> bool:
    if isinstance(x, tuple):
        return all(_same(p, q) for p, q in zip(x, y))
    return np.array_equal(np.asarray(x), np.asarray(y))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    impls = kernels.backends()
    if "cython" not in impls:
        print("compiled backend not built; only the Python fallback is available", file=sys.stderr)
    rows = []
    for name, fn in cases(np.random.default_rng(0)).items():
        ref = fn(impls["python"])
        row = {"kernel": name}
        for label, impl in impls.items():
            if not _same(fn(impl), ref):
                raise SystemExit(f"{name}: backends disagree")
            number = 1 if label == "python" else 10
            t = min(timeit.repeat(lambda: fn(impl), number=number, repeat=args.repeat)) / number
            row[label] = t
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        rows.append(row)

    w = max(len(r["kernel"]) for r in rows)
    print(f"{'kernel':<{w}}  {'python ms':>10}  {'cython ms':>10}  {'speedup':>8}")
    for r in rows:
        cy = f"{1e3 * r['cython']:10.3f}" if "cython" in r else f"{'-':>10}"
        sp = f"{r['speedup']:7.1f}x" if "speedup" in r else f"{'-':>8}"
        print(f"{r['kernel']:<{w}}  {1e3 * r['python']:10.3f}  {cy}  {sp}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
