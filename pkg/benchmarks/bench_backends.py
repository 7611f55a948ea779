"""Benchmark the numba kernels against the pure-NumPy fallback.

Runs each hot kernel on representative workloads and prints a table of
per-call times and speedups. The packaged code selects its backend via
the HCD_BACKEND env var; this script imports both implementations
directly so one process can compare them.

Usage: python benchmarks/bench_backends.py [--repeats N]
"""

import argparse
import time

import numpy as np

from hcd._kernels import numpy_impl
from hcd.filters import _pack_bank, build_cb11, build_rotated_filters
from hcd.channels import HOGLUV_NAMES
from hcd.training import presort_features

try:
    from hcd._kernels import numba_impl
except ImportError:
    numba_impl = None


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def workloads():
    rng = np.random.default_rng(0)
    img = rng.random((480, 640, 3)).astype(np.float32)
    mag, ori = numpy_impl.gradient_mag_ori(img)
    planes10 = rng.random((10, 480, 640)).astype(np.float32)
    _, cb_args = _pack_bank(HOGLUV_NAMES, build_cb11(4))
    _, rf_args = _pack_bank(HOGLUV_NAMES, build_rotated_filters(1))
    planes90 = rng.random((90, 240, 320)).astype(np.float32)
    windows = [(int(a), int(a) + int(b), int(c), int(c) + int(d))
               for a, b, c, d in zip(rng.integers(0, 100, 100),
                                     rng.integers(20, 140, 100),
                                     rng.integers(0, 150, 100),
                                     rng.integers(10, 60, 100))]

    n, nf = 800, 4000
    X = rng.normal(size=(n, nf)).astype(np.float32)
    w = rng.random(n)
    w /= w.sum()
    is_pos = (rng.random(n) < 0.3).astype(np.uint8)
    node_of = rng.integers(0, 8, n).astype(np.int64)
    node_ids = np.arange(8, dtype=np.int64)
    wpos = np.zeros(8)
    wneg = np.zeros(8)
    np.add.at(wpos, node_of, np.where(is_pos != 0, w, 0.0))
    np.add.at(wneg, node_of, np.where(is_pos != 0, 0.0, w))
    feat_ids = np.arange(nf, dtype=np.int64)
    vals_sorted, order = presort_features(X)

    n_nodes = 63 * 512
    feat = rng.integers(-1, 40, n_nodes).astype(np.int32)
    thr = rng.normal(size=n_nodes)
    left = np.clip(np.arange(n_nodes) + 1, 0, n_nodes - 1).astype(np.int32)
    right = np.clip(np.arange(n_nodes) + 2, 0, n_nodes - 1).astype(np.int32)
    # force leaves at subtree bottoms so traversal terminates
    feat[left == n_nodes - 1] = -1
    feat[right == n_nodes - 1] = -1
    value = rng.normal(size=n_nodes)
    roots = np.arange(0, n_nodes, 63, dtype=np.int64)
    Xs = rng.normal(size=(500, 40)).astype(np.float32)

    return {
        "gradient_mag_ori (640x480)":
            lambda impl: impl.gradient_mag_ori(img),
        "box_mean r=5 (640x480)":
            lambda impl: impl.box_mean(mag, 5),
        "bin_orientations (640x480)":
            lambda impl: impl.bin_orientations(mag, ori, 6, False),
        "apply_filter_bank cb11 (10ch 640x480)":
            lambda impl: impl.apply_filter_bank(planes10, *cb_args),
        "apply_filter_bank rf9 (10ch 640x480)":
            lambda impl: impl.apply_filter_bank(planes10, *rf_args),
        "roi_pool 100 boxes (90ch, 20x20)":
            lambda impl: [impl.roi_pool_window(planes90, y0, y1, x0, x1, 20, 20)
                          for (y0, y1, x0, x1) in windows],
        "bilinear_resize 480p->720p":
            lambda impl: impl.bilinear_resize(img, 720, 960),
        "best_splits_level (800x4000, 8 nodes)":
            lambda impl: impl.best_splits_level(
                X, vals_sorted, order, w, is_pos, node_of, node_ids,
                wpos, wneg, feat_ids),
        "forest_apply 512 trees x 500 rows":
            lambda impl: impl.forest_apply(Xs, feat, thr, left, right, value, roots),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    benches = workloads()
    width = max(len(k) for k in benches)
    print(f"{'kernel':<{width}}  {'numpy':>9}  {'numba':>9}  {'speedup':>7}")
    for name, fn in benches.items():
        t_np = best_of(lambda: fn(numpy_impl), args.repeats)
        if numba_impl is not None:
            fn(numba_impl)  # JIT warmup
            t_nb = best_of(lambda: fn(numba_impl), args.repeats)
            print(f"{name:<{width}}  {t_np * 1e3:8.1f}ms  {t_nb * 1e3:8.1f}ms  "
                  f"{t_np / t_nb:6.1f}x")
        else:
            print(f"{name:<{width}}  {t_np * 1e3:8.1f}ms  {'n/a':>9}  {'n/a':>7}")


if __name__ == "__main__":
    main()
