"""Time the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from clfvar import _accel
from clfvar.datasets import make_blobs, split_classification
from clfvar.losses import CLFConfig, group_stats
from clfvar.rng import SeededRng
from clfvar.tensor import matmul
from clfvar.trainer import TrainConfig, train


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rs = np.random.default_rng(0)
    a, b = rs.normal(size=(256, 64)), rs.normal(size=(64, 64))
    values, groups = rs.normal(size=4096), rs.integers(0, 10, size=4096)
    data = split_classification(make_blobs(SeededRng(0), 200, 3, 2, 0.55), 0.5)
    cfg = TrainConfig(epochs=20, clf=CLFConfig(0.1, 0.1, 0.01, 20))
    return {
        "matmul 256x64 @ 64x64": lambda: matmul(a, b),
        "group_stats n=4096 k=10": lambda: group_stats(values, groups, 10),
        "shuffle n=100000": lambda: SeededRng(1).shuffle(100000),
        "train blobs 20 epochs": lambda: train(cfg, data, 1),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    results = {}
    for name in ("numba", "numpy"):
        _accel.set_backend(name)
        for label, fn in cases().items():
            fn()  # warm-up (JIT compile)
            results.setdefault(label, {})[name] = best_of(fn, args.repeat)
    print(f"{'kernel':28s} {'numba':>10s} {'numpy':>10s} {'speedup':>8s}")
    for label, t in results.items():
        print(f"{label:28s} {t['numba'] * 1e3:9.2f}ms {t['numpy'] * 1e3:9.2f}ms {t['numpy'] / t['numba']:7.1f}x")


if __name__ == "__main__":
    main()
