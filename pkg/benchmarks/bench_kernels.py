"""Time the numba tree kernels against the numpy fallback and check they agree.

    python benchmarks/bench_kernels.py [--samples 4000] [--features 84] [--trees 20]
"""

import argparse
import time

import numpy as np

from le2 import _kernels
from le2._kernels import build_tree_nb, build_tree_np, forest_votes_nb, forest_votes_np


def dataset(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = ((X[:, 0] > 0.3) & (X[:, 1] < 0.5) | (X[:, 2] > 1.2)).astype(np.int64)
    return X, y


def grow(build, X, y, n_trees, depth, k):
    parts, roots, offset = [], [], 0
    for t in range(n_trees):
        idx = np.random.default_rng([0, t]).integers(0, len(y), size=len(y))
        f, thr, lft, rgt, val = build(X, y, idx, depth, 1, k, 1000 + t)
        internal = f >= 0
        parts.append((f, thr, np.where(internal, lft + offset, -1), np.where(internal, rgt + offset, -1), val))
        roots.append(offset)
        offset += len(f)
    arrays = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    return (*arrays, np.array(roots, dtype=np.int64))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--samples", type=int, default=4000)
    ap.add_argument("--features", type=int, default=84)
    ap.add_argument("--trees", type=int, default=20)
    ap.add_argument("--depth", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    X, y = dataset(args.samples, args.features, 0)
    k = max(1, int(np.sqrt(args.features)))
    grow(build_tree_nb, X[:50], y[:50], 1, 3, k)  # jit warm-up
    forest_votes_nb(X[:2], *grow(build_tree_nb, X[:50], y[:50], 1, 3, k))

    t_nb, f_nb = best_of(lambda: grow(build_tree_nb, X, y, args.trees, args.depth, k), args.repeat)
    t_np, f_np = best_of(lambda: grow(build_tree_np, X, y, args.trees, args.depth, k), args.repeat)
    same_trees = all(np.array_equal(a, b) for a, b in zip(f_nb, f_np))

    Xq, _ = dataset(args.samples, args.features, 1)
    v_nb_t, v_nb = best_of(lambda: forest_votes_nb(Xq, *f_nb), args.repeat)
    v_np_t, v_np = best_of(lambda: forest_votes_np(Xq, *f_nb), args.repeat)

    print(f"numba available for dispatch: {_kernels.USE_NUMBA}")
    print(f"fit   {args.trees} trees x {args.samples} samples: numba {t_nb * 1e3:8.1f} ms   "
          f"numpy {t_np * 1e3:8.1f} ms   speed-up {t_np / t_nb:5.1f}x   identical={same_trees}")
    print(f"votes {args.samples} queries:               numba {v_nb_t * 1e3:8.1f} ms   "
          f"numpy {v_np_t * 1e3:8.1f} ms   speed-up {v_np_t / v_nb_t:5.1f}x   "
          f"identical={np.array_equal(v_nb, v_np)}")
    if not (same_trees and np.array_equal(v_nb, v_np)):
        raise SystemExit("numba and numpy kernels disagree")


if __name__ == "__main__":
    main()
