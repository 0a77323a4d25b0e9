"""Benchmark the compiled kernels against the NumPy fallback.

Run:  python3 benchmarks/bench_kernels.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from valve4d._kernels import _fallback

try:
    from valve4d._kernels import _native
except ImportError:
    _native = None


def _time(fn, *args, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_nn_warp(rng, repeat):
    dims = (96, 96, 96)
    labels = rng.integers(0, 7, size=dims).astype(np.uint8)
    base = np.stack(
        np.meshgrid(*[np.arange(d, dtype=np.float32) for d in dims], indexing="ij")
    )
    coords = np.ascontiguousarray(
        np.moveaxis(base, 0, -1) + rng.normal(0, 2, size=dims + (3,)).astype(np.float32)
    )
    return labels.nbytes, (labels, coords)


def bench_majority(rng, repeat):
    n = 5
    stack = np.ascontiguousarray(
        rng.integers(0, 7, size=(n, 64**3)).astype(np.uint8)
    )
    return stack.nbytes, (stack, 7)


def bench_mesh_distance(rng, repeat):
    pts = rng.normal(0, 10, size=(4000, 3))
    verts = rng.normal(0, 10, size=(600, 3))
    tris = verts[rng.integers(0, 600, size=(1200, 3))]
    return pts.nbytes, (pts, np.ascontiguousarray(tris))


BENCHES = {
    "nn_warp": bench_nn_warp,
    "majority_vote": bench_majority,
    "min_distances_to_mesh": bench_mesh_distance,
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(7)
    print(f"{'kernel':<24}{'fallback':>12}{'native':>12}{'speedup':>10}")
    for name, build in BENCHES.items():
        _, call_args = build(rng, args.repeat)
        t_py = _time(getattr(_fallback, name), *call_args, repeat=args.repeat)
        if _native is None:
            print(f"{name:<24}{t_py:>11.3f}s{'-':>12}{'-':>10}")
            continue
        t_c = _time(getattr(_native, name), *call_args, repeat=args.repeat)
        out_py = getattr(_fallback, name)(*call_args)
        out_c = getattr(_native, name)(*call_args)
        assert np.allclose(np.asarray(out_py, dtype=float), np.asarray(out_c, dtype=float), atol=1e-9)
        print(f"{name:<24}{t_py:>11.3f}s{t_c:>11.3f}s{t_py / t_c:>9.1f}x")
    if _native is None:
        print("\ncompiled extension not built; only the fallback was timed")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
