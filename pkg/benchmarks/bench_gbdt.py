"""Time the numba and numpy tree kernels on an M-branch-sized problem and
check they build identical trees.

    python3 benchmarks/bench_gbdt.py [--rows 720] [--cols 495] [--repeat 5]
"""

import argparse
import time

import numpy as np

from mdfl import gbdt
from mdfl._accel import HAVE_NUMBA
from mdfl.gbdt import _kernels
from mdfl.gbdt.model import LEAF_EPS


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=720)
    ap.add_argument("--cols", type=int, default=495)
    ap.add_argument("--depth", type=int, default=4)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    X = rng.normal(size=(args.rows, args.cols))
    y = rng.integers(0, 9, size=args.rows)
    _, g, h = gbdt.softmax_grad_hess(np.zeros((args.rows, 9)), y)
    g, h = np.ascontiguousarray(g[:, 0]), np.ascontiguousarray(h[:, 0])
    w = np.ones(args.rows)
    order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T).astype(np.int64)
    xs = np.ascontiguousarray(np.take_along_axis(X, order.T, axis=0).T)
    call = (X, order, xs, g, h, w, args.depth, 5, 1e-6, 0.1, LEAF_EPS)

    print(f"tree on {args.rows} x {args.cols}, depth {args.depth}, best of {args.repeat}")
    t_np, tree_np = _best_of(lambda: _kernels.build_tree_numpy(*call), args.repeat)
    print(f"  numpy  {t_np * 1e3:9.2f} ms")
    if not HAVE_NUMBA:
        print("  numba  not installed")
        return
    t0 = time.perf_counter()
    _kernels.build_tree_jit(*call)
    print(f"  numba  first call (compile or cache load) {(time.perf_counter() - t0) * 1e3:.0f} ms")
    t_jit, tree_jit = _best_of(lambda: _kernels.build_tree_jit(*call), args.repeat)
    print(f"  numba  {t_jit * 1e3:9.2f} ms   speedup x{t_np / t_jit:.1f}")
    same = all(np.array_equal(a, b) for a, b in zip(tree_np, tree_jit))
    print(f"  identical trees: {same}")
    if not same:
        raise SystemExit(1)


if __name__ == "__main__":
    main()
