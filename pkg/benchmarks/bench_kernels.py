#!/usr/bin/env python3
"""Benchmark the hot per-voxel RSRP kernel: numba @njit vs pure-numpy fallback.

Times a single sub-beam evaluation and a full 42-sub-beam field build on the
bundled demo deployment, for each backend and thread count. The numba backend
is also what `AIRTWIN_DISABLE_NUMBA=1` switches off at import time; here both
are driven explicitly so one process can compare them.

Usage: python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import statistics
import time

import numpy as np

from airtwin import kernels
from airtwin.scene import BeamAssignment, build_voxel_grid
from airtwin.spectrum import build_field
from airtwin.synth import demo_scene


def time_call(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--threads", type=int, nargs="*", default=[1, 2])
    parser.add_argument("--radius", type=float, default=500.0,
                        help="cylinder radius (m); try 2000 for the full scale")
    parser.add_argument("--voxel", type=float, default=25.0,
                        help="voxel edge (m); try 10 for the full scale")
    args = parser.parse_args()

    scene = demo_scene(radius_m=args.radius, voxel_m=args.voxel)
    grid = build_voxel_grid(scene.airspace)
    assignment = BeamAssignment.baseline(scene)
    key = scene.beam_keys()[0]
    site, cell, sb = scene.sub_beam(*key)
    angle = assignment.angles[key]

    backends = ["numpy"]
    if kernels.beam_rsrp_numba is not None:
        backends.insert(0, "numba")
        # warm the JIT outside the timed region
        kernels.eval_beam_rsrp_parametric(
            grid.centers[:64], site.position_m, angle.azimuth_deg, angle.tilt_deg,
            sb.pattern, cell.tx_power_dbm, scene.radio.frequency_hz, 0.0,
            backend="numba")
    else:
        print("numba unavailable or disabled; benchmarking the numpy path only")

    print(f"grid: {grid.count} voxels, {scene.n_sub_beams} sub-beams, "
          f"repeats: {args.repeats}")
    print(f"{'case':<34}{'best':>10}{'median':>10}")

    results = {}
    for backend in backends:
        def one_beam(b=backend):
            kernels.eval_beam_rsrp_parametric(
                grid.centers, site.position_m, angle.azimuth_deg, angle.tilt_deg,
                sb.pattern, cell.tx_power_dbm, scene.radio.frequency_hz, 0.0,
                backend=b)

        best, median = time_call(one_beam, args.repeats)
        results[("beam", backend, 1)] = best
        print(f"{'one beam / ' + backend:<34}{best * 1e3:>8.2f}ms{median * 1e3:>8.2f}ms")

    for backend in backends:
        for threads in args.threads:
            def full(b=backend, t=threads):
                saved = kernels.HAVE_NUMBA
                kernels.HAVE_NUMBA = (b == "numba")
                try:
                    build_field(scene, grid, assignment, threads=t)
                finally:
                    kernels.HAVE_NUMBA = saved

            best, median = time_call(full, args.repeats)
            results[("field", backend, threads)] = best
            label = f"full field / {backend} / {threads} thr"
            print(f"{label:<34}{best * 1e3:>8.2f}ms{median * 1e3:>8.2f}ms")

    if "numba" in backends:
        ratio = results[("field", "numpy", 1)] / results[("field", "numba", 1)]
        print(f"\nfull field build, numpy/numba runtime ratio (1 thread): {ratio:.2f}")

        # agreement check between the two implementations
        a = np.empty(grid.count)
        b = np.empty(grid.count)
        common = (grid.centers, site.position_m, angle.azimuth_deg, angle.tilt_deg,
                  sb.pattern, cell.tx_power_dbm, scene.radio.frequency_hz, 0.0)
        kernels.eval_beam_rsrp_parametric(*common, out=a, backend="numba")
        kernels.eval_beam_rsrp_parametric(*common, out=b, backend="numpy")
        print(f"backend max |difference|: {np.abs(a - b).max():.2e} dB")


if __name__ == "__main__":
    main()
