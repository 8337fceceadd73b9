"""Time the compiled kernels against the numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--nodes N]
"""
import argparse
import timeit

import numpy as np

from hopflink import kernels
from hopflink.defects import candidate_cubes
from hopflink.fieldlab import GridSpec, make_field, sample
from hopflink.linking import torus_link_curve


def cases(nodes: int):
    grid = GridSpec.cube(8.0, nodes)
    phi = np.ascontiguousarray(sample(make_field("milnor", tag="u2_minus_v2"), grid).values)
    cubes = candidate_cubes(phi)
    origin, spacing = np.array(grid.box_min), grid.spacing
    P = np.ascontiguousarray(torus_link_curve(0).sample_points((2000,)))
    Q = np.ascontiguousarray(torus_link_curve(1).sample_points((2000,)))
    rng = np.random.default_rng(0)
    x, dx = rng.normal(size=(2000, 3)), rng.normal(size=(2000, 3))
    y, dy = rng.normal(size=(2000, 3)) + 6.0, rng.normal(size=(2000, 3))
    return {
        f"tet_zero_segments ({len(cubes)} cubes)": lambda impl: impl.tet_zero_segments(phi, cubes, origin, spacing),
        "signed_crossings (2000 x 2000 segments)": lambda impl: impl.signed_crossings(P, Q, 1e-12),
        "gauss_pair_sum (2000 x 2000 pairs)": lambda impl: impl.gauss_pair_sum(x, dx, y, dy),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--nodes", type=int, default=96)
    args = ap.parse_args()
    impls = kernels.IMPLEMENTATIONS
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'kernel':45s} " + " ".join(f"{k:>12s}" for k in impls) + ("     speedup" if len(impls) > 1 else ""))
    for name, fn in cases(args.nodes).items():
        times = {}
        for key, impl in impls.items():
            fn(impl)  # warm up
            times[key] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
        row = f"{name:45s} " + " ".join(f"{1e3 * t:10.2f}ms" for t in times.values())
        if "cython" in times:
            row += f"  {times['python'] / times['cython']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
