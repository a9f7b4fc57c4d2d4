"""Compare the compiled and numpy conv/pool kernels.

    python benchmarks/bench_kernels.py [--repeats 20]

Shapes follow the first encoder blocks at desk scale (128 clips, 128 mel x 32
frames). Each kernel is timed on both backends and checked for equal output.
"""

import argparse
import time

import numpy as np

from mart._kernels import _pykernels

try:
    from mart._kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _time(fn, repeats):
    fn()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    x1 = rng.standard_normal((128, 1, 128, 32)).astype(np.float32)
    x4 = rng.standard_normal((128, 4, 64, 16)).astype(np.float32)
    cols = rng.standard_normal((128, 36, 64 * 16)).astype(np.float32)
    pool_in = rng.standard_normal((128, 4, 128, 32)).astype(np.float32)
    out, arg = _pykernels.maxpool2d_forward(pool_in, 2, 2)
    g = rng.standard_normal(out.shape).astype(np.float32)
    return [
        ("im2col3x3 [128,1,128,32]", lambda k: k.im2col3x3(x1)),
        ("im2col3x3 [128,4,64,16]", lambda k: k.im2col3x3(x4)),
        ("col2im3x3 [128,36,1024]", lambda k: k.col2im3x3(cols, 64, 16)),
        ("maxpool fwd [128,4,128,32]", lambda k: k.maxpool2d_forward(pool_in, 2, 2)),
        ("maxpool bwd [128,4,64,16]", lambda k: k.maxpool2d_backward(g, arg, 2, 2)),
    ]


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    if _ckernels is None:
        print("compiled kernels not built; only the numpy backend is available")
    print(f"{'kernel':30s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}  equal")
    for name, fn in cases(rng):
        t_py = _time(lambda: fn(_pykernels), args.repeats) * 1e3
        if _ckernels is None:
            print(f"{name:30s} {t_py:10.2f}")
            continue
        t_c = _time(lambda: fn(_ckernels), args.repeats) * 1e3
        equal = _same(fn(_pykernels), fn(_ckernels))
        print(f"{name:30s} {t_py:10.2f} {t_c:10.2f} {t_py / t_c:7.1f}x  {equal}")


if __name__ == "__main__":
    main()
