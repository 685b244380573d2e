"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Every workload is run through both back-ends and the outputs are compared
before any timing is reported.
"""
from __future__ import annotations

import argparse
import math
import timeit

import numpy as np

from v2xbeam import kernels
from v2xbeam.geometry import Cuboid, pack_boxes


def blockage_case(rng):
    # the shape of one channel trace: ~60 obstacles, a few hundred candidate legs
    boxes = [Cuboid(tuple(rng.uniform(-30, 30, 2)) + (1.5,), *rng.uniform(1, 12, 3),
                    rng.uniform(-math.pi, math.pi)) for _ in range(60)]
    packed = pack_boxes(boxes)
    a = rng.uniform(-40, 40, (400, 3))
    b = rng.uniform(-40, 40, (400, 3))
    exclude = rng.integers(-1, 60, 400)
    return lambda impl: impl.segments_blocked(a, b, *packed, exclude)


def polygon_case(rng):
    polys = [np.ascontiguousarray(rng.uniform(-50, 370, (6, 2))) for _ in range(40)]
    value = np.array([-10, -20, -30], dtype=np.float32)

    def run(impl):
        img = np.zeros((120, 320, 3), dtype=np.float32)
        for p in polys:
            impl.fill_convex_polygon(img, p, value)
        return img
    return run


def runs_case(rng):
    labels = np.repeat(rng.integers(0, 50, 20_000), rng.integers(1, 6, 20_000)).astype(np.int64)
    return lambda impl: impl.run_lengths(labels)


CASES = {"segments_blocked (400 legs x 60 boxes)": blockage_case,
         "fill_convex_polygon (40 polygons, 320x120)": polygon_case,
         "run_lengths (~60k labels)": runs_case}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    impls = kernels.implementations()
    if "cython" not in impls:
        print("compiled extension not built; only the Python back-end is available")
    print(f"active back-end: {kernels.BACKEND}")
    print(f"{'kernel':45s} " + " ".join(f"{n:>12s}" for n in impls) + "   speed-up")
    for label, make in CASES.items():
        fn = make(np.random.default_rng(0))
        outs = {n: fn(impl) for n, impl in impls.items()}
        ref = outs["python"]
        for n, o in outs.items():
            if not np.array_equal(o, ref):
                raise SystemExit(f"{label}: back-end {n} disagrees with python")
        times = {n: min(timeit.repeat(lambda impl=impl: fn(impl), number=1, repeat=args.repeat))
                 for n, impl in impls.items()}
        row = " ".join(f"{times[n] * 1e3:10.2f}ms" for n in impls)
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
        print(f"{label:45s} {row} {speed}")


if __name__ == "__main__":
    main()
