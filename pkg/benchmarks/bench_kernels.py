"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

Both implementations are called on identical inputs; outputs are checked
for agreement before timing.  The first numba call (compilation, or a cache
load) is excluded.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from unitqa import kernels


def cases(rng):
    frames = rng.normal(size=(20000, 16))
    centroids = rng.normal(size=(100, 16))
    labels = rng.integers(0, 100, size=20000)
    raw = np.repeat(rng.integers(0, 100, size=4000), rng.integers(1, 5, size=4000))
    ref = rng.integers(0, 50, size=400)
    hyp = rng.integers(0, 50, size=400)
    return {
        "nearest_centroid": (frames, centroids),
        "centroid_sums": (frames, labels, 100),
        "rle_runs": (raw,),
        "edit_distance": (ref, hyp),
        "lcs_length": (ref, hyp),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b)


def run(repeat=5, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for name, args in cases(rng).items():
        nb = kernels.IMPLEMENTATIONS["numba"][name]
        npy = kernels.IMPLEMENTATIONS["numpy"][name]
        if not _same(nb(*args), npy(*args)):
            raise AssertionError(f"{name}: numba and numpy disagree")
        t_nb = min(timeit.repeat(lambda: nb(*args), number=1, repeat=repeat))
        t_np = min(timeit.repeat(lambda: npy(*args), number=1, repeat=repeat))
        rows.append({"kernel": name, "numba_ms": 1e3 * t_nb, "numpy_ms": 1e3 * t_np,
                     "speedup": t_np / t_nb})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"{'kernel':<18}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for r in rows:
        print(f"{r['kernel']:<18}{r['numba_ms']:>10.3f}{r['numpy_ms']:>10.3f}{r['speedup']:>8.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
